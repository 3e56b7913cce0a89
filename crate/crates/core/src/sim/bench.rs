//! Replicated experiments: recovery/prediction error grid, misspecified
//! mean function, and binary classification against logistic regression.
//!
//! Every replication draws its seeds from `derive_seed(master, [rep, ..])`,
//! so replication `k` sees the same random stream in every cell and the
//! results do not depend on the thread count.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::logistic::fit_logistic_counts;
use super::{gamma_distance, generate, perr, Labeled, SimSpec, VFn};
use crate::compositional::BasisSpec;
use crate::error::{Error, Result};
use crate::fitter::{fit, FitConfig};
use crate::predictor::{class_from_value, predict, PredictorState};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::MhConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub reps: usize,
    pub fit: FitConfig,
    pub predict: MhConfig,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            reps: 20,
            fit: FitConfig::default(),
            predict: MhConfig::prediction(),
            seed: 0,
        }
    }
}

impl BenchSettings {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        self.fit.validate()?;
        self.predict.validate()
    }
}

pub fn data_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, &[rep as u64, 0])
}

fn fit_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, &[rep as u64, 1])
}

fn predict_seed(master: u64, rep: usize, k: usize) -> u64 {
    derive_seed(master, &[rep as u64, 2, k as u64])
}

/// Full-precision number for machine-readable output.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Result of fitting and predicting on one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub gamma_distance: f64,
    pub perr: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_constraint_violation: f64,
    pub final_acceptance: f64,
}

pub fn run_replication(spec: &SimSpec, settings: &BenchSettings, rep: usize) -> Result<ReplicationOutcome> {
    let spec = SimSpec { seed: data_seed(settings.seed, rep), ..spec.clone() };
    let sim = generate(&spec)?;
    let data = sim.train.to_dataset(spec.basis.clone())?;
    let cfg = FitConfig { seed: fit_seed(settings.seed, rep), ..settings.fit.clone() };
    let result = fit(&data, &cfg)?;
    let state = PredictorState::from_fit(&data, &result)?;
    let preds = sim
        .test
        .counts
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let mh = MhConfig { seed: predict_seed(settings.seed, rep, k), ..settings.predict.clone() };
            predict(x, &state, &mh)
        })
        .collect::<Result<Vec<f64>>>()?;
    let truth = DMatrix::from_column_slice(spec.gamma_true.len(), 1, spec.gamma_true.as_slice());
    Ok(ReplicationOutcome {
        gamma_distance: gamma_distance(&result.theta.gamma, &truth)?,
        perr: perr(&preds, &sim.test.responses)?,
        converged: result.converged,
        iterations: result.iterations_used,
        max_constraint_violation: result.max_constraint_violation(),
        final_acceptance: result.final_acceptance(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub data_seed: u64,
    pub outcome: Option<ReplicationOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub succeeded: usize,
    pub converged: usize,
    pub gamma_distance_mean: Option<f64>,
    pub gamma_distance_sd: Option<f64>,
    pub perr_mean: Option<f64>,
    pub perr_sd: Option<f64>,
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub settings: BenchSettings,
    pub rows: Vec<Table1Row>,
    pub cells: Vec<CellSummary>,
}

pub const TABLE1_CELLS: [(usize, usize); 6] = [(50, 5), (100, 5), (200, 5), (50, 20), (100, 20), (200, 20)];

pub fn run_table1(cells: &[(usize, usize)], settings: &BenchSettings) -> Result<Table1Report> {
    settings.validate()?;
    if cells.is_empty() {
        return Err(Error::Config("no (n, p) cells requested".into()));
    }
    let specs = cells
        .iter()
        .map(|&(n, p)| SimSpec::standard(n, p, settings.seed))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..settings.reps).map(move |r| (c, r)))
        .collect();
    let rows: Vec<Table1Row> = tasks
        .par_iter()
        .map(|&(c, rep)| {
            let outcome = run_replication(&specs[c], settings, rep);
            if let Err(e) = &outcome {
                log::warn!("replication {rep} of (n={}, p={}) failed: {e}", cells[c].0, cells[c].1);
            }
            Table1Row {
                n: cells[c].0,
                p: cells[c].1,
                rep,
                data_seed: data_seed(settings.seed, rep),
                error: outcome.as_ref().err().map(|e| e.to_string()),
                outcome: outcome.ok(),
            }
        })
        .collect();
    let summaries = cells
        .iter()
        .map(|&(n, p)| {
            let ok: Vec<&ReplicationOutcome> = rows
                .iter()
                .filter(|r| r.n == n && r.p == p)
                .filter_map(|r| r.outcome.as_ref())
                .collect();
            let dists: Vec<f64> = ok.iter().map(|o| o.gamma_distance).collect();
            let perrs: Vec<f64> = ok.iter().map(|o| o.perr).collect();
            let (dm, ds) = mean_sd(&dists);
            let (pm, ps) = mean_sd(&perrs);
            CellSummary {
                n,
                p,
                reps: settings.reps,
                succeeded: ok.len(),
                converged: ok.iter().filter(|o| o.converged).count(),
                gamma_distance_mean: dm,
                gamma_distance_sd: ds,
                perr_mean: pm,
                perr_sd: ps,
                max_constraint_violation: ok.iter().map(|o| o.max_constraint_violation).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(Table1Report { settings: settings.clone(), rows, cells: summaries })
}

impl Table1Report {
    pub fn success_fraction(&self) -> f64 {
        let ok = self.rows.iter().filter(|r| r.outcome.is_some()).count();
        ok as f64 / self.rows.len().max(1) as f64
    }

    pub fn cell(&self, n: usize, p: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.n == n && c.p == p)
    }

    /// One line per replication.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,p,rep,data_seed,gamma_distance,perr,converged,iterations,max_constraint_violation,final_acceptance,error\n",
        );
        for r in &self.rows {
            let o = r.outcome.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.p,
                r.rep,
                r.data_seed,
                opt_num(o.map(|o| o.gamma_distance)),
                opt_num(o.map(|o| o.perr)),
                o.map_or("NA".into(), |o| o.converged.to_string()),
                o.map_or("NA".into(), |o| o.iterations.to_string()),
                opt_num(o.map(|o| o.max_constraint_violation)),
                opt_num(o.map(|o| o.final_acceptance)),
                r.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("n,p,reps,succeeded,converged,gamma_distance_mean,gamma_distance_sd,perr_mean,perr_sd\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.n,
                c.p,
                c.reps,
                c.succeeded,
                c.converged,
                opt_num(c.gamma_distance_mean),
                opt_num(c.gamma_distance_sd),
                opt_num(c.perr_mean),
                opt_num(c.perr_sd)
            );
        }
        out
    }

    /// Human-readable grid: mean (sd) per cell.
    pub fn render_text(&self) -> String {
        let short = |m: Option<f64>, s: Option<f64>| {
            let m = m.map_or("NA".to_string(), |v| format!("{v:.3}"));
            let s = s.map_or("NA".to_string(), |v| format!("{v:.3}"));
            format!("{m} ({s})")
        };
        let mut out = format!("{:<8}{:<8}{:<24}{:<24}\n", "n", "p", "||G_hat - G||", "PErr");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<8}{:<8}{:<24}{:<24}",
                c.n,
                c.p,
                short(c.gamma_distance_mean, c.gamma_distance_sd),
                short(c.perr_mean, c.perr_sd)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub c: f64,
    pub rep: usize,
    pub outcome: Option<ReplicationOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecSummary {
    pub c: f64,
    pub succeeded: usize,
    pub median_perr: Option<f64>,
    pub mean_perr: Option<f64>,
    pub median_gamma_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecReport {
    pub n: usize,
    pub p: usize,
    pub settings: BenchSettings,
    pub rows: Vec<MisspecRow>,
    pub summaries: Vec<MisspecSummary>,
}

pub const MISSPEC_C: [f64; 3] = [0.0, 0.5, 1.0];

/// `v_y = 10 (y + c |y|)` fitted with the cubic basis. Replication `k` uses
/// the same data seed for every `c`.
pub fn run_misspec(n: usize, p: usize, c_values: &[f64], settings: &BenchSettings) -> Result<MisspecReport> {
    settings.validate()?;
    if c_values.is_empty() {
        return Err(Error::Config("no c values requested".into()));
    }
    let base = SimSpec::standard(n, p, settings.seed)?;
    let tasks: Vec<(usize, usize)> = (0..c_values.len())
        .flat_map(|c| (0..settings.reps).map(move |r| (c, r)))
        .collect();
    let rows: Vec<MisspecRow> = tasks
        .par_iter()
        .map(|&(ci, rep)| {
            let c = c_values[ci];
            let spec = SimSpec {
                v_fn: VFn::AbsMix { a: 10.0, c },
                basis: BasisSpec::Polynomial { degree: 3 },
                ..base.clone()
            };
            let outcome = run_replication(&spec, settings, rep);
            if let Err(e) = &outcome {
                log::warn!("misspecification replication {rep} (c={c}) failed: {e}");
            }
            MisspecRow {
                c,
                rep,
                error: outcome.as_ref().err().map(|e| e.to_string()),
                outcome: outcome.ok(),
            }
        })
        .collect();
    let summaries = c_values
        .iter()
        .map(|&c| {
            let ok: Vec<&ReplicationOutcome> = rows
                .iter()
                .filter(|r| r.c == c)
                .filter_map(|r| r.outcome.as_ref())
                .collect();
            let perrs: Vec<f64> = ok.iter().map(|o| o.perr).collect();
            let dists: Vec<f64> = ok.iter().map(|o| o.gamma_distance).collect();
            MisspecSummary {
                c,
                succeeded: ok.len(),
                median_perr: median(&perrs),
                mean_perr: mean_sd(&perrs).0,
                median_gamma_distance: median(&dists),
            }
        })
        .collect();
    Ok(MisspecReport { n, p, settings: settings.clone(), rows, summaries })
}

impl MisspecReport {
    pub fn success_fraction(&self) -> f64 {
        let ok = self.rows.iter().filter(|r| r.outcome.is_some()).count();
        ok as f64 / self.rows.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "c,rep,gamma_distance,perr,converged,iterations,max_constraint_violation,final_acceptance,error\n",
        );
        for r in &self.rows {
            let o = r.outcome.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                num(r.c),
                r.rep,
                opt_num(o.map(|o| o.gamma_distance)),
                opt_num(o.map(|o| o.perr)),
                o.map_or("NA".into(), |o| o.converged.to_string()),
                o.map_or("NA".into(), |o| o.iterations.to_string()),
                opt_num(o.map(|o| o.max_constraint_violation)),
                opt_num(o.map(|o| o.final_acceptance)),
                r.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }

    pub fn render_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
        let mut out = format!("{:<8}{:<12}{:<14}{:<12}\n", "c", "succeeded", "median PErr", "mean PErr");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<8}{:<12}{:<14}{:<12}",
                format!("{:.2}", s.c),
                s.succeeded,
                fmt(s.median_perr),
                fmt(s.mean_perr)
            );
        }
        out
    }

    /// Long format for box plots: one `(c, rep, perr)` line per success.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("c,rep,perr\n");
        for r in &self.rows {
            if let Some(o) = &r.outcome {
                let _ = writeln!(out, "{},{},{}", num(r.c), r.rep, num(o.perr));
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("c,succeeded,median_perr,mean_perr,median_gamma_distance\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                num(s.c),
                s.succeeded,
                opt_num(s.median_perr),
                opt_num(s.mean_perr),
                opt_num(s.median_gamma_distance)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySplit {
    pub split: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Test error per cutoff, aligned with `BinaryReport::cutoffs`.
    pub pamir_errors: Option<Vec<f64>>,
    pub logistic_errors: Option<Vec<f64>>,
    pub logistic_ridge: bool,
    pub max_constraint_violation: Option<f64>,
    pub majority_error: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub cutoff: f64,
    pub logistic_mean_error: Option<f64>,
    pub pamir_mean_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub cutoffs: Vec<f64>,
    pub settings: BenchSettings,
    pub splits: Vec<BinarySplit>,
    pub table: Vec<CutoffRow>,
    /// Mean test error of always predicting the training majority class.
    pub majority_error: f64,
}

pub const CUTOFFS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

/// Per-class shuffle; `round(2/3 n_c)` of each class goes to training.
pub fn stratified_split(labels: &[u8], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 3 {
            return Err(Error::Data(format!("class {class} has {} observations, need >= 3", idx.len())));
        }
        idx.shuffle(&mut rng);
        let k = (2.0 * idx.len() as f64 / 3.0).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn error_rate(predicted: &[u8], truth: &[u8]) -> f64 {
    predicted.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64
}

fn labels_of(data: &Labeled) -> Result<Vec<u8>> {
    data.responses
        .iter()
        .map(|&y| match y {
            y if y == 0.0 => Ok(0),
            y if y == 1.0 => Ok(1),
            y => Err(Error::Data(format!("binary benchmark needs 0/1 responses, got {y}"))),
        })
        .collect()
}

struct SplitScores {
    pamir: Vec<f64>,
    constraint: f64,
    logistic: Vec<f64>,
    ridge: bool,
}

fn score_split(data: &Labeled, train: &[usize], test: &[usize], settings: &BenchSettings, split: usize) -> Result<SplitScores> {
    let train_set = data.subset(train);
    let test_set = data.subset(test);
    let dataset = train_set.to_dataset(BasisSpec::Identity)?;
    let cfg = FitConfig { seed: fit_seed(settings.seed, split), ..settings.fit.clone() };
    let result = fit(&dataset, &cfg)?;
    let state = PredictorState::from_fit(&dataset, &result)?;
    let pamir = test_set
        .counts
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let mh = MhConfig { seed: predict_seed(settings.seed, split, k), ..settings.predict.clone() };
            predict(x, &state, &mh)
        })
        .collect::<Result<Vec<f64>>>()?;
    let train_labels = labels_of(&train_set)?;
    let logit = fit_logistic_counts(&train_set.counts, &train_labels)?;
    let logistic = test_set.counts.iter().map(|x| logit.predict(x)).collect();
    Ok(SplitScores { pamir, constraint: result.max_constraint_violation(), logistic, ridge: logit.ridge_used })
}

pub fn run_binary_benchmark(data: &Labeled, cutoffs: &[f64], settings: &BenchSettings) -> Result<BinaryReport> {
    settings.validate()?;
    if cutoffs.is_empty() || cutoffs.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
        return Err(Error::Config("cutoffs must lie in (0, 1)".into()));
    }
    let labels = labels_of(data)?;
    let splits: Vec<BinarySplit> = (0..settings.reps)
        .into_par_iter()
        .map(|split| -> Result<BinarySplit> {
            let (train, test) = stratified_split(&labels, derive_seed(settings.seed, &[split as u64, 3]))?;
            let truth: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
            let ones = train.iter().filter(|&&i| labels[i] == 1).count();
            let majority = u8::from(2 * ones >= train.len());
            let majority_error = error_rate(&vec![majority; truth.len()], &truth);
            let scored = score_split(data, &train, &test, settings, split);
            if let Err(e) = &scored {
                log::warn!("binary split {split} failed: {e}");
            }
            let per_cutoff = |scores: &[f64], strict: fn(f64, f64) -> u8| -> Vec<f64> {
                cutoffs
                    .iter()
                    .map(|&c| {
                        let pred: Vec<u8> = scores.iter().map(|&s| strict(s, c)).collect();
                        error_rate(&pred, &truth)
                    })
                    .collect()
            };
            Ok(match scored {
                Ok(s) => BinarySplit {
                    split,
                    pamir_errors: Some(per_cutoff(&s.pamir, class_from_value)),
                    logistic_errors: Some(per_cutoff(&s.logistic, class_from_value)),
                    logistic_ridge: s.ridge,
                    max_constraint_violation: Some(s.constraint),
                    majority_error,
                    error: None,
                    train,
                    test,
                },
                Err(e) => BinarySplit {
                    split,
                    pamir_errors: None,
                    logistic_errors: None,
                    logistic_ridge: false,
                    max_constraint_violation: None,
                    majority_error,
                    error: Some(e.to_string()),
                    train,
                    test,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = cutoffs
        .iter()
        .enumerate()
        .map(|(k, &cutoff)| {
            let pam: Vec<f64> = splits.iter().filter_map(|s| s.pamir_errors.as_ref().map(|e| e[k])).collect();
            let log: Vec<f64> = splits.iter().filter_map(|s| s.logistic_errors.as_ref().map(|e| e[k])).collect();
            CutoffRow {
                cutoff,
                logistic_mean_error: mean_sd(&log).0,
                pamir_mean_error: mean_sd(&pam).0,
            }
        })
        .collect();
    let majority_error = splits.iter().map(|s| s.majority_error).sum::<f64>() / splits.len() as f64;
    Ok(BinaryReport { cutoffs: cutoffs.to_vec(), settings: settings.clone(), splits, table, majority_error })
}

impl BinaryReport {
    pub fn success_fraction(&self) -> f64 {
        self.splits.iter().filter(|s| s.error.is_none()).count() as f64 / self.splits.len().max(1) as f64
    }

    pub fn best_pamir_error(&self) -> Option<f64> {
        self.table.iter().filter_map(|r| r.pamir_mean_error).min_by(f64::total_cmp)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,cutoff,pamir_error,logistic_error,majority_error,logistic_ridge,error\n");
        for s in &self.splits {
            for (k, &c) in self.cutoffs.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.split,
                    num(c),
                    opt_num(s.pamir_errors.as_ref().map(|e| e[k])),
                    opt_num(s.logistic_errors.as_ref().map(|e| e[k])),
                    num(s.majority_error),
                    s.logistic_ridge,
                    s.error.as_deref().unwrap_or("").replace(',', ";"),
                );
            }
        }
        out
    }

    /// Cutoff sweep: mean test error per method.
    pub fn render_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
        let mut out = format!("{:<10}{:<24}{:<12}\n", "Cutoff", "Logistic regression", "PAMIR");
        for r in &self.table {
            let _ = writeln!(
                out,
                "{:<10}{:<24}{:<12}",
                format!("{:.1}", r.cutoff),
                fmt(r.logistic_mean_error),
                fmt(r.pamir_mean_error)
            );
        }
        let _ = writeln!(out, "majority-class error: {:.3}", self.majority_error);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_binary, BinarySpec};

    fn quick() -> BenchSettings {
        let mut s = BenchSettings { reps: 2, seed: 9, ..Default::default() };
        s.fit.max_em_iters = 8;
        s.fit.mh.burn_in = 100;
        s.fit.mh.n_keep = 40;
        s.predict.burn_in = 100;
        s.predict.n_keep = 100;
        s
    }

    #[test]
    fn summary_helpers() {
        assert_eq!(mean_sd(&[]), (None, None));
        assert_eq!(mean_sd(&[2.0]), (Some(2.0), None));
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn stratified_split_sizes() {
        let labels: Vec<u8> = (0..33).map(|i| u8::from(i < 22)).collect();
        let (train, test) = stratified_split(&labels, 1).unwrap();
        assert_eq!(train.len(), 15 + 7);
        assert_eq!(test.len(), 7 + 4);
        let mut all = [train.clone(), test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..33).collect::<Vec<_>>());
        assert_eq!(stratified_split(&labels, 1).unwrap(), (train, test));
        assert!(stratified_split(&[0, 0, 1, 1, 1], 1).is_err());
    }

    #[test]
    fn majority_baseline_is_minority_fraction() {
        let data = generate_binary(&BinarySpec::default_with_seed(3)).unwrap();
        let report = run_binary_benchmark(&data, &[0.5], &quick()).unwrap();
        assert!((report.majority_error - 4.0 / 11.0).abs() < 1e-12);
        assert_eq!(report.splits.len(), 2);
    }

    #[test]
    fn table1_single_rep_has_no_sd() {
        let settings = BenchSettings { reps: 1, ..quick() };
        let report = run_table1(&[(30, 5)], &settings).unwrap();
        let cell = report.cell(30, 5).unwrap();
        assert_eq!(cell.succeeded, 1);
        assert!(cell.gamma_distance_sd.is_none() && cell.perr_sd.is_none());
        assert!(report.render_text().contains("(NA)"));
        assert_eq!(report.to_csv().lines().count(), 2);
    }

    #[test]
    fn reps_zero_is_rejected() {
        let settings = BenchSettings { reps: 0, ..quick() };
        assert!(run_table1(&[(30, 5)], &settings).is_err());
    }

    #[test]
    fn shared_seed_schedule() {
        let report = run_table1(&[(30, 5), (40, 5)], &quick()).unwrap();
        let seeds = |n: usize| report.rows.iter().filter(|r| r.n == n).map(|r| r.data_seed).collect::<Vec<_>>();
        assert_eq!(seeds(30), seeds(40));
        assert_eq!(report, run_table1(&[(30, 5), (40, 5)], &quick()).unwrap());
    }
}
