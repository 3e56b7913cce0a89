use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use pamir_core::predictor::{class_from_value, predict};
use pamir_core::rng::derive_seed;
use pamir_core::sim::bench::{
    num, run_binary_benchmark, run_misspec, run_table1, BenchSettings, CUTOFFS, MISSPEC_C, TABLE1_CELLS,
};
use pamir_core::sim::{generate, generate_binary, BinarySpec, Labeled, LibrarySizeLaw, SimSpec, VFn};
use pamir_core::{fit, BasisSpec, Dataset, MhConfig};

use crate::config::Config;
use crate::error::{CliError, Outcome};
use crate::model_file::ModelFile;
use crate::table::CountTable;

/// Fraction of replications that must succeed for a benchmark to exit 0.
const MIN_SUCCESS: f64 = 0.9;

#[derive(Debug, Clone, Default, Args)]
pub struct EmFlags {
    /// Reduction dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// E-step burn-in per EM iteration.
    #[arg(long)]
    pub mh_burnin: Option<usize>,
    /// E-step samples kept per EM iteration.
    #[arg(long)]
    pub mh_keep: Option<usize>,
    /// Initial random-walk proposal scale.
    #[arg(long)]
    pub mh_scale: Option<f64>,
    /// Maximum number of EM iterations.
    #[arg(long)]
    pub em_max: Option<usize>,
    /// Convergence threshold on the moving-average parameter change.
    #[arg(long)]
    pub em_tol: Option<f64>,
    /// Master seed (drawn from system entropy and printed when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PredictFlags {
    /// Burn-in of each prediction chain.
    #[arg(long)]
    pub predict_burnin: Option<usize>,
    /// Samples kept per prediction chain.
    #[arg(long)]
    pub predict_keep: Option<usize>,
}

impl EmFlags {
    fn apply(&self, cfg: &mut Config) {
        if let Some(v) = self.d {
            cfg.fit.d = v;
        }
        if let Some(v) = self.mh_burnin {
            cfg.fit.mh.burn_in = v;
        }
        if let Some(v) = self.mh_keep {
            cfg.fit.mh.n_keep = v;
        }
        if let Some(v) = self.mh_scale {
            cfg.fit.mh.proposal_scale = v;
        }
        if let Some(v) = self.em_max {
            cfg.fit.max_em_iters = v;
        }
        if let Some(v) = self.em_tol {
            cfg.fit.em_tol = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
    }
}

impl PredictFlags {
    fn apply(&self, cfg: &mut Config) {
        if let Some(v) = self.predict_burnin {
            cfg.predict.burn_in = v;
        }
        if let Some(v) = self.predict_keep {
            cfg.predict.n_keep = v;
        }
    }
}

/// Options shared by every command.
pub struct Context {
    pub config: Config,
    pub show_config: bool,
}

impl Context {
    /// Prints the effective configuration when requested; `true` means stop.
    fn shown(&self) -> bool {
        if self.show_config {
            print!("{}", self.config.to_json());
        }
        self.show_config
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Count table (TSV).
    #[arg(long)]
    pub counts: PathBuf,
    /// Name of the response column in the count table.
    #[arg(long)]
    pub response: String,
    /// Taxon to use as the log-ratio reference (default: last column).
    #[arg(long)]
    pub reference: Option<String>,
    /// Response basis: poly:K or identity.
    #[arg(long)]
    pub basis: Option<String>,
    #[command(flatten)]
    pub em: EmFlags,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON dump of the per-iteration EM trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn cmd_fit(args: &FitArgs, mut ctx: Context) -> Result<Outcome, CliError> {
    args.em.apply(&mut ctx.config);
    if let Some(b) = &args.basis {
        ctx.config.basis = BasisSpec::parse(b)?;
    }
    if ctx.shown() {
        return Ok(Outcome::Ok);
    }
    let mut table = CountTable::read(&args.counts, Some(&args.response))?;
    if let Some(r) = &args.reference {
        table = table.with_reference(r)?;
    }
    let responses = table.responses.clone().expect("response column requested");
    let data = Dataset::new(responses.clone(), table.count_vectors()?, ctx.config.basis.clone())?;
    for &j in data.zero_taxa() {
        eprintln!("warning: taxon '{}' has zero counts in every sample", table.taxa[j]);
    }
    let seed = ctx.config.resolve_seed();
    let fit_cfg = pamir_core::FitConfig { seed, ..ctx.config.fit.clone() };
    let result = fit(&data, &fit_cfg)?;
    let model = ModelFile::from_fit(
        table.taxa.clone(),
        responses,
        ctx.config.basis.clone(),
        data.basis_offset(),
        &result,
        &fit_cfg,
    );
    write_file(&args.out, &model.to_json())?;
    if let Some(t) = &args.trace {
        write_file(t, &to_json(&result.em_trace))?;
    }
    println!("iterations: {}", result.iterations_used);
    println!("converged: {}", result.converged);
    println!("final parameter change: {:.3}", result.final_change());
    println!("mean acceptance rate: {:.3}", result.final_acceptance());
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if result.converged {
        Ok(Outcome::Ok)
    } else {
        eprintln!("warning: EM did not converge in {} iterations; model written and flagged", result.iterations_used);
        Ok(Outcome::NotConverged)
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Count table of new samples (TSV).
    #[arg(long)]
    pub counts: PathBuf,
    /// Response column to ignore if the table has one.
    #[arg(long)]
    pub response: Option<String>,
    /// Adds a class column, 1 when y_hat > cutoff (binary models only).
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Seed for the prediction chains.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub predict: PredictFlags,
    /// Output TSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_predict(args: &PredictArgs, mut ctx: Context) -> Result<Outcome, CliError> {
    args.predict.apply(&mut ctx.config);
    if let Some(s) = args.seed {
        ctx.config.seed = Some(s);
    }
    if ctx.shown() {
        return Ok(Outcome::Ok);
    }
    let text = fs::read_to_string(&args.model).map_err(|e| CliError::io(&args.model, e))?;
    let model = ModelFile::from_json(&text)?;
    let state = model.predictor()?;
    if let Some(c) = args.cutoff {
        if !(c > 0.0 && c < 1.0) {
            return Err(CliError::Input(format!("cutoff must lie in (0, 1), got {c}")));
        }
        if !state.is_binary() {
            return Err(CliError::Input("--cutoff needs a model fitted to 0/1 responses".into()));
        }
    }
    let table = CountTable::read(&args.counts, args.response.as_deref())?;
    let counts = table.aligned_to(&model.taxa)?;
    let seed = ctx.config.resolve_seed();
    ctx.config.predict.validate()?;
    let preds = counts
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let mh = MhConfig { seed: derive_seed(seed, &[k as u64]), ..ctx.config.predict.clone() };
            predict(x, &state, &mh).map_err(|e| CliError::Input(format!("sample '{}': {e}", table.sample_ids[k])))
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    let mut out = String::from("sample_id\ty_hat");
    if args.cutoff.is_some() {
        out.push_str("\tclass");
    }
    out.push('\n');
    for (id, y) in table.sample_ids.iter().zip(&preds) {
        let _ = write!(out, "{id}\t{}", num(*y));
        if let Some(c) = args.cutoff {
            let _ = write!(out, "\t{}", class_from_value(*y, c));
        }
        out.push('\n');
    }
    write_file(&args.out, &out)?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 50)]
    pub n_test: usize,
    /// Weight of |y| in the mean function 10 (y + c |y|).
    #[arg(long)]
    pub c: Option<f64>,
    /// Fixed library size.
    #[arg(long, default_value_t = 1000)]
    pub library_size: u64,
    /// Generate the binary-response data set instead.
    #[arg(long)]
    pub binary: bool,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn labeled_table(data: &Labeled, prefix: &str) -> CountTable {
    let p = data.counts[0].len();
    CountTable {
        sample_ids: (1..=data.len()).map(|i| format!("{prefix}{i}")).collect(),
        taxa: (1..=p).map(|j| format!("taxon{j}")).collect(),
        counts: data.counts.iter().map(|c| c.counts().to_vec()).collect(),
        responses: Some(data.responses.clone()),
    }
}

#[derive(Serialize)]
struct SimTruth {
    seed: u64,
    gamma_true: Vec<f64>,
    train_latent: Vec<Vec<f64>>,
    test_latent: Vec<Vec<f64>>,
}

pub fn cmd_simulate(args: &SimulateArgs, mut ctx: Context) -> Result<Outcome, CliError> {
    if let Some(s) = args.seed {
        ctx.config.seed = Some(s);
    }
    if ctx.shown() {
        return Ok(Outcome::Ok);
    }
    let seed = ctx.config.resolve_seed();
    ensure_dir(&args.out_dir)?;
    if args.binary {
        let spec = BinarySpec {
            library_size_law: LibrarySizeLaw::Fixed { m: args.library_size },
            ..BinarySpec::default_with_seed(seed)
        };
        let data = generate_binary(&spec)?;
        write_file(&args.out_dir.join("binary.tsv"), &labeled_table(&data, "s").to_tsv("y"))?;
        println!("wrote {} samples to {}", data.len(), args.out_dir.join("binary.tsv").display());
        return Ok(Outcome::Ok);
    }
    let mut spec = SimSpec::standard(args.n, args.p, seed)?;
    spec.n_test = args.n_test;
    spec.library_size_law = LibrarySizeLaw::Fixed { m: args.library_size };
    if let Some(c) = args.c {
        spec.v_fn = VFn::AbsMix { a: 10.0, c };
    }
    let sim = generate(&spec)?;
    write_file(&args.out_dir.join("train.tsv"), &labeled_table(&sim.train, "train").to_tsv("y"))?;
    write_file(&args.out_dir.join("test.tsv"), &labeled_table(&sim.test, "test").to_tsv("y"))?;
    let truth = SimTruth {
        seed,
        gamma_true: sim.truth.gamma_true.as_slice().to_vec(),
        train_latent: sim.truth.train_latent.iter().map(|w| w.as_slice().to_vec()).collect(),
        test_latent: sim.truth.test_latent.iter().map(|w| w.as_slice().to_vec()).collect(),
    };
    write_file(&args.out_dir.join("truth.json"), &to_json(&truth))?;
    println!("wrote train.tsv ({}), test.tsv ({}), truth.json to {}", sim.train.len(), sim.test.len(), args.out_dir.display());
    Ok(Outcome::Ok)
}

fn bench_settings(reps: usize, em: &EmFlags, predict: &PredictFlags, ctx: &mut Context) -> BenchSettings {
    em.apply(&mut ctx.config);
    predict.apply(&mut ctx.config);
    BenchSettings {
        reps,
        fit: ctx.config.fit.clone(),
        predict: ctx.config.predict.clone(),
        seed: 0,
    }
}

fn parse_cells(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',')
        .map(|cell| {
            let (n, p) = cell
                .trim()
                .split_once('x')
                .ok_or_else(|| CliError::Input(format!("cell '{cell}' is not of the form NxP")))?;
            let n = n.parse().map_err(|_| CliError::Input(format!("bad n in cell '{cell}'")))?;
            let p = p.parse().map_err(|_| CliError::Input(format!("bad p in cell '{cell}'")))?;
            Ok((n, p))
        })
        .collect()
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Input(format!("bad {what} value '{v}'")))
        })
        .collect()
}

fn degradation(fraction: f64) -> Outcome {
    if fraction >= MIN_SUCCESS {
        Outcome::Ok
    } else {
        eprintln!("only {:.0}% of replications succeeded", 100.0 * fraction);
        Outcome::Degraded
    }
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Comma-separated NxP cells, e.g. 100x5,50x20 (default: the full grid).
    #[arg(long)]
    pub cells: Option<String>,
    #[command(flatten)]
    pub em: EmFlags,
    #[command(flatten)]
    pub predict: PredictFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn cmd_bench_table1(args: &Table1Args, mut ctx: Context) -> Result<Outcome, CliError> {
    let cells = match &args.cells {
        Some(s) => parse_cells(s)?,
        None => TABLE1_CELLS.to_vec(),
    };
    let mut settings = bench_settings(args.reps, &args.em, &args.predict, &mut ctx);
    if ctx.shown() {
        return Ok(Outcome::Ok);
    }
    settings.seed = ctx.config.resolve_seed();
    let report = run_table1(&cells, &settings)?;
    ensure_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("table1_replications.csv"), &report.to_csv())?;
    write_file(&args.out_dir.join("table1_cells.csv"), &report.summary_csv())?;
    write_file(&args.out_dir.join("table1_summary.json"), &to_json(&report))?;
    print!("{}", report.render_text());
    Ok(degradation(report.success_fraction()))
}

#[derive(Debug, Args)]
pub struct MisspecArgs {
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Comma-separated values of c.
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[command(flatten)]
    pub em: EmFlags,
    #[command(flatten)]
    pub predict: PredictFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn cmd_bench_misspec(args: &MisspecArgs, mut ctx: Context) -> Result<Outcome, CliError> {
    let cs = match &args.c {
        Some(s) => parse_list(s, "c")?,
        None => MISSPEC_C.to_vec(),
    };
    let mut settings = bench_settings(args.reps, &args.em, &args.predict, &mut ctx);
    if ctx.shown() {
        return Ok(Outcome::Ok);
    }
    settings.seed = ctx.config.resolve_seed();
    let report = run_misspec(args.n, args.p, &cs, &settings)?;
    ensure_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("misspec_replications.csv"), &report.to_csv())?;
    write_file(&args.out_dir.join("misspec_plot.csv"), &report.to_plot_csv())?;
    write_file(&args.out_dir.join("misspec_summary.csv"), &report.summary_csv())?;
    write_file(&args.out_dir.join("misspec_summary.json"), &to_json(&report))?;
    print!("{}", report.render_text());
    Ok(degradation(report.success_fraction()))
}

#[derive(Debug, Args)]
pub struct BinaryArgs {
    /// Number of random stratified splits.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Comma-separated classification cutoffs.
    #[arg(long)]
    pub cutoffs: Option<String>,
    /// Count table with a 0/1 response column (default: synthetic data).
    #[arg(long, requires = "response")]
    pub counts: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[command(flatten)]
    pub em: EmFlags,
    #[command(flatten)]
    pub predict: PredictFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn cmd_bench_binary(args: &BinaryArgs, mut ctx: Context) -> Result<Outcome, CliError> {
    let cutoffs = match &args.cutoffs {
        Some(s) => parse_list(s, "cutoff")?,
        None => CUTOFFS.to_vec(),
    };
    let mut settings = bench_settings(args.reps, &args.em, &args.predict, &mut ctx);
    if ctx.shown() {
        return Ok(Outcome::Ok);
    }
    settings.seed = ctx.config.resolve_seed();
    let data = match &args.counts {
        Some(path) => {
            let table = CountTable::read(path, args.response.as_deref())?;
            Labeled {
                responses: table.responses.clone().expect("response column requested"),
                counts: table.count_vectors()?,
            }
        }
        None => generate_binary(&BinarySpec::default_with_seed(derive_seed(settings.seed, &[u64::MAX])))?,
    };
    let report = run_binary_benchmark(&data, &cutoffs, &settings)?;
    ensure_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("binary_splits.csv"), &report.to_csv())?;
    write_file(&args.out_dir.join("binary_summary.json"), &to_json(&report))?;
    print!("{}", report.render_text());
    Ok(degradation(report.success_fraction()))
}
