use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pamir_cli::model_file::ModelFile;
use pamir_cli::table::CountTable;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pamir"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const GOLDEN_FIT: [&str; 8] = ["--seed", "11", "--em-max", "10", "--mh-burnin", "100", "--mh-keep", "50"];

fn fit_golden(out: &Path) -> Output {
    let counts = data("synthetic_counts.tsv");
    let mut args = vec!["fit", "--counts", s(&counts), "--response", "y", "--out", s(out)];
    args.extend_from_slice(&GOLDEN_FIT);
    run(&args)
}

fn predict_args<'a>(model: &'a Path, counts: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![
        "predict",
        "--model",
        s(model),
        "--counts",
        s(counts),
        "--seed",
        "3",
        "--predict-burnin",
        "200",
        "--predict-keep",
        "200",
        "--out",
        s(out),
    ]
}

fn read_predictions(path: &Path) -> Vec<(String, f64, Option<u8>)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f.get(2).map(|c| c.parse().unwrap()))
        })
        .collect()
}

#[test]
fn fit_reproduces_checked_in_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("model.json");
    let o = fit_golden(&out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("iterations: 10") && stdout.contains("mean acceptance rate"));
    assert_eq!(fs::read(&out).unwrap(), fs::read(data("synthetic_model.json")).unwrap());
}

#[test]
fn model_file_round_trip_is_byte_identical() {
    let text = fs::read_to_string(data("synthetic_model.json")).unwrap();
    let model = ModelFile::from_json(&text).unwrap();
    assert_eq!(model.to_json(), text);
    assert!(model.predictor().is_ok());
    assert_eq!(model.taxa.len(), model.p);
}

#[test]
fn d_too_large_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let counts = data("synthetic_counts.tsv");
    let out = dir.path().join("m.json");
    let o = run(&["fit", "--counts", s(&counts), "--response", "y", "--d", "4", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exceeds min(p-1, r)"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn missing_response_column_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let counts = data("synthetic_counts.tsv");
    let o = run(&["fit", "--counts", s(&counts), "--response", "nope", "--seed", "1", "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("'nope' not found"));
}

#[test]
fn parse_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "id\ty\tA\tB\ns1\t0.1\t3\t4\ns2\t0.2\t5\tx\n").unwrap();
    let o = run(&["fit", "--counts", s(&bad), "--response", "y", "--seed", "1", "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3, column 4"), "{}", stderr(&o));
}

#[test]
fn predictions_on_training_table_stay_in_response_range() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("synthetic_model.json");
    let counts = data("synthetic_counts.tsv");
    let out = dir.path().join("pred.tsv");
    let mut args = predict_args(&model, &counts, &out);
    args.extend_from_slice(&["--response", "y"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = CountTable::read(&counts, Some("y")).unwrap();
    let ys = table.responses.unwrap();
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let preds = read_predictions(&out);
    assert_eq!(preds.len(), ys.len());
    for (id, y, class) in preds {
        assert!(y >= lo && y <= hi, "{id}: {y} outside [{lo}, {hi}]");
        assert!(class.is_none());
    }
}

#[test]
fn predictions_are_deterministic_and_name_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("synthetic_model.json");
    let counts = data("synthetic_new.tsv");
    let table = CountTable::read(&counts, Some("y")).unwrap();
    let mut shuffled = table.clone();
    shuffled.taxa.rotate_left(2);
    for row in &mut shuffled.counts {
        row.rotate_left(2);
    }
    let reordered = dir.path().join("reordered.tsv");
    fs::write(&reordered, shuffled.to_tsv("y")).unwrap();

    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    let c = dir.path().join("c.tsv");
    for (input, out) in [(&counts, &a), (&counts, &b), (&reordered, &c)] {
        let mut args = predict_args(&model, input, out);
        args.extend_from_slice(&["--response", "y"]);
        assert_eq!(run(&args).status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn taxon_mismatch_lists_names() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("synthetic_model.json");
    let mut table = CountTable::read(&data("synthetic_new.tsv"), Some("y")).unwrap();
    table.taxa[1] = "mystery".into();
    let path = dir.path().join("renamed.tsv");
    fs::write(&path, table.to_tsv("y")).unwrap();
    let out = dir.path().join("p.tsv");
    let mut args = predict_args(&model, &path, &out);
    args.extend_from_slice(&["--response", "y"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("missing: taxon2") && e.contains("extra: mystery"), "{e}");
}

#[test]
fn binary_model_cutoff_adds_class_column() {
    let dir = tempfile::tempdir().unwrap();
    let counts = data("synthetic_binary.tsv");
    let model = dir.path().join("binary.json");
    let o = run(&[
        "fit", "--counts", s(&counts), "--response", "y", "--basis", "identity", "--seed", "5", "--em-max", "5",
        "--mh-burnin", "100", "--mh-keep", "50", "--out", s(&model),
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let out = dir.path().join("p.tsv");
    let mut args = predict_args(&model, &counts, &out);
    args.extend_from_slice(&["--response", "y", "--cutoff", "0.5"]);
    assert_eq!(run(&args).status.code(), Some(0));
    for (_, y, class) in read_predictions(&out) {
        assert!((0.0..=1.0).contains(&y));
        assert_eq!(class, Some(u8::from(y > 0.5)));
    }

    let continuous = data("synthetic_model.json");
    let mut args = predict_args(&continuous, &counts, &out);
    args.extend_from_slice(&["--response", "y", "--cutoff", "0.5"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    let mut args = predict_args(&model, &counts, &out);
    args.extend_from_slice(&["--response", "y", "--cutoff", "1.5"]);
    assert_eq!(run(&args).status.code(), Some(1));
}

#[test]
fn omitted_seed_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--n", "10", "--p", "5", "--n-test", "2", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let e = stderr(&o);
    let seed: u64 = e
        .split_whitespace()
        .nth(1)
        .and_then(|t| t.parse().ok())
        .unwrap_or_else(|| panic!("no seed in {e}"));
    let first = fs::read(dir.path().join("train.tsv")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let seed = seed.to_string();
    let o = run(&["simulate", "--n", "10", "--p", "5", "--n-test", "2", "--seed", &seed, "--out-dir", s(again.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).is_empty());
    assert_eq!(first, fs::read(again.path().join("train.tsv")).unwrap());
}

#[test]
fn reps_zero_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["bench-table1", "bench-misspec", "bench-binary"] {
        let o = run(&[cmd, "--reps", "0", "--seed", "1", "--out-dir", s(dir.path())]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
    }
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--show-config"]);
    assert_eq!(o.status.code(), Some(0));
    let defaults: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(defaults["fit"]["max_em_iters"], 100);
    assert_eq!(defaults["predict"]["n_keep"], 1000);

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"fit": {"max_em_iters": 7, "em_tol": 0.01}, "seed": 4}"#).unwrap();
    let counts = data("synthetic_counts.tsv");
    let o = run(&[
        "--config", s(&cfg), "--show-config", "fit", "--counts", s(&counts), "--response", "y", "--em-max", "3",
        "--out", "unused.json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let shown: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(shown["fit"]["max_em_iters"], 3);
    assert_eq!(shown["fit"]["em_tol"], 0.01);
    assert_eq!(shown["seed"], 4);

    fs::write(&cfg, r#"{"fit": {"max_em_itres": 7}}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--show-config"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fit.max_em_itres"));
}

#[test]
fn bench_table1_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "bench-table1", "--reps", "2", "--cells", "30x5", "--seed", "2", "--em-max", "4", "--mh-burnin", "50",
        "--mh-keep", "20", "--predict-burnin", "50", "--predict-keep", "50", "--out-dir", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PErr") && stdout.contains("30      5"), "{stdout}");
    let reps = fs::read_to_string(dir.path().join("table1_replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("table1_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"][0]["succeeded"], 2);
    assert!(dir.path().join("table1_cells.csv").exists());
}
