//! Logistic regression on pseudo-count ALR features, fitted by IRLS.

use nalgebra::{DMatrix, DVector};

use crate::compositional::CountVector;
use crate::error::{Error, Result};

const MAX_ITERS: usize = 100;
const TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    /// Intercept first.
    pub weights: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when plain IRLS diverged and the ridge-stabilized solution was used.
    pub ridge_used: bool,
}

impl LogisticFit {
    pub fn predict_features(&self, features: &DVector<f64>) -> f64 {
        sigmoid(self.weights[0] + self.weights.rows(1, features.len()).dot(features))
    }

    pub fn predict(&self, x: &CountVector) -> f64 {
        self.predict_features(&alr_features(x))
    }
}

/// `alr((x + 0.5) / sum(x + 0.5))`.
pub fn alr_features(x: &CountVector) -> DVector<f64> {
    x.pseudo_alr().into_inner()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn design(features: &[DVector<f64>]) -> DMatrix<f64> {
    let k = features[0].len();
    DMatrix::from_fn(features.len(), k + 1, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] })
}

/// Negative log-likelihood (mean over observations) plus `ridge/2 |beta|^2`.
pub fn logistic_loss(weights: &DVector<f64>, features: &[DVector<f64>], labels: &[u8], ridge: f64) -> f64 {
    let x = design(features);
    let eta = &x * weights;
    let nll: f64 = eta
        .iter()
        .zip(labels)
        .map(|(&e, &y)| {
            // log(1 + exp(e)) - y e, computed stably.
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            softplus - if y == 1 { e } else { 0.0 }
        })
        .sum();
    nll / labels.len() as f64 + 0.5 * ridge * weights.norm_squared()
}

fn irls(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> (DVector<f64>, usize, bool) {
    let n = x.nrows() as f64;
    let k = x.ncols();
    let mut beta = DVector::zeros(k);
    for it in 1..=MAX_ITERS {
        let eta = x * &beta;
        let prob = eta.map(sigmoid);
        let wts = prob.map(|p| (p * (1.0 - p)).max(1e-12));
        let grad = x.transpose() * (y - &prob) / n - &beta * ridge;
        let mut hess = x.transpose() * DMatrix::from_diagonal(&wts) * x / n;
        for j in 0..k {
            hess[(j, j)] += ridge;
        }
        let step = match hess.cholesky() {
            Some(c) => c.solve(&grad),
            None => return (beta, it, false),
        };
        beta += &step;
        if !beta.iter().all(|v| v.is_finite()) || beta.amax() > 1e8 {
            return (beta, it, false);
        }
        if step.amax() < TOL {
            return (beta, it, true);
        }
    }
    (beta, MAX_ITERS, false)
}

pub fn fit_logistic(features: &[DVector<f64>], labels: &[u8]) -> Result<LogisticFit> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    let k = features[0].len();
    if features.iter().any(|f| f.len() != k) {
        return Err(Error::Dimension("feature rows differ in length".into()));
    }
    let x = design(features);
    let y = DVector::from_iterator(labels.len(), labels.iter().map(|&l| l as f64));
    let (beta, iterations, converged) = irls(&x, &y, 0.0);
    if converged {
        return Ok(LogisticFit { weights: beta, iterations, converged, ridge_used: false });
    }
    log::warn!("logistic IRLS diverged; refitting with ridge {RIDGE}");
    let (beta, iterations, converged) = irls(&x, &y, RIDGE);
    Ok(LogisticFit { weights: beta, iterations, converged, ridge_used: true })
}

pub fn fit_logistic_counts(counts: &[CountVector], labels: &[u8]) -> Result<LogisticFit> {
    let features: Vec<DVector<f64>> = counts.iter().map(alr_features).collect();
    fit_logistic(&features, labels)
}
