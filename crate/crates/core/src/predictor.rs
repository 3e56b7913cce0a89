//! Prediction through the sufficient reduction `U = Gamma' Sigma^-1 W`.
//!
//! For a new count vector the latent `W` is sampled from its posterior under
//! the empirical response mixture; each sample is reduced to `u` and mapped
//! to a kernel estimate of `E(Y | U = u)` over the training responses. The
//! kernel is Gaussian with identity covariance, which is exact in `U`-space
//! because the fitted parameters satisfy `Gamma' Sigma^-1 Gamma = I`.

use nalgebra::{DMatrix, DVector};

use crate::compositional::{basis_with_offset, BasisSpec, BasisVector, CountVector, ModelParams, ReducedVector};
use crate::error::{Error, Result};
use crate::fitter::{Dataset, FitResult};
use crate::sampler::{mh_run, prediction_log_target, MhConfig};

/// Everything needed to predict from a fitted model. Immutable once built.
#[derive(Debug, Clone)]
pub struct PredictorState {
    pub theta: ModelParams,
    pub training_responses: Vec<f64>,
    pub training_bases: Vec<BasisVector>,
    pub basis_spec: BasisSpec,
    pub basis_offset: DVector<f64>,
    /// `Gamma' Sigma^-1`, `d x (p-1)`.
    pub reduction: DMatrix<f64>,
    /// `Gamma' Sigma^-1 mu + beta h_y` per training response.
    u_means: Vec<DVector<f64>>,
    y_range: (f64, f64),
}

/// Kernel estimate at one reduced point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    /// All kernel weights underflowed; `value` is the response whose `U`-mean
    /// is nearest.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y_hat: f64,
    pub acceptance_rate: f64,
    /// Number of chain samples that used the nearest-mean fallback.
    pub fallbacks: usize,
}

impl PredictorState {
    pub fn new(
        theta: ModelParams,
        training_responses: Vec<f64>,
        basis_spec: BasisSpec,
        basis_offset: DVector<f64>,
    ) -> Result<Self> {
        theta.validate()?;
        if training_responses.is_empty() {
            return Err(Error::Data("predictor needs training responses".into()));
        }
        let training_bases = training_responses
            .iter()
            .map(|&y| basis_with_offset(y, &basis_spec, &basis_offset))
            .collect::<Result<Vec<_>>>()?;
        let reduction = theta.reduction()?;
        let check = (&reduction * &theta.gamma - DMatrix::identity(theta.d(), theta.d())).norm();
        if check > 1e-8 {
            return Err(Error::Domain(format!("reduction * Gamma deviates from I by {check:e}")));
        }
        let shift = &reduction * &theta.mu;
        let u_means = training_bases.iter().map(|h| &shift + &theta.beta * &h.h).collect();
        let lo = training_responses.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = training_responses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            theta,
            training_responses,
            training_bases,
            basis_spec,
            basis_offset,
            reduction,
            u_means,
            y_range: (lo, hi),
        })
    }

    pub fn from_fit(data: &Dataset, fit: &FitResult) -> Result<Self> {
        Self::new(
            fit.theta.clone(),
            data.responses().to_vec(),
            data.basis_spec().clone(),
            data.basis_offset().clone(),
        )
    }

    pub fn reduce(&self, w: &DVector<f64>) -> ReducedVector {
        ReducedVector(&self.reduction * w)
    }

    pub fn is_binary(&self) -> bool {
        self.training_responses.iter().all(|&y| y == 0.0 || y == 1.0)
    }
}

/// `sum_y y f(u|y) / sum_y f(u|y)` with `f(u|y) = exp(-|u - m_y|^2 / 2)`.
pub fn conditional_mean_given_u(u: &ReducedVector, state: &PredictorState) -> KernelEstimate {
    let logs: Vec<f64> = state
        .u_means
        .iter()
        .map(|m| -0.5 * (&u.0 - m).norm_squared())
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (l, &y) in logs.iter().zip(&state.training_responses) {
            let wt = (l - max).exp();
            num += wt * y;
            den += wt;
        }
        if den > 0.0 && den.is_finite() {
            let (lo, hi) = state.y_range;
            return KernelEstimate {
                value: (num / den).clamp(lo, hi),
                fell_back: false,
            };
        }
    }
    let nearest = logs
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_nan())
        .fold((0usize, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
        .0;
    log::debug!("kernel weights underflowed; using nearest-mean response");
    KernelEstimate {
        value: state.training_responses[nearest],
        fell_back: true,
    }
}

/// Kernel estimate for a latent vector, through its reduction only.
pub fn estimate_given_w(w: &DVector<f64>, state: &PredictorState) -> KernelEstimate {
    conditional_mean_given_u(&state.reduce(w), state)
}

pub fn predict_detailed(x_new: &CountVector, state: &PredictorState, cfg: &MhConfig) -> Result<Prediction> {
    let target = prediction_log_target(x_new, &state.training_bases, &state.theta)?;
    let init = x_new.pseudo_alr().into_inner();
    let chain = mh_run(&target, &init, cfg)?;
    let mut total = 0.0;
    let mut fallbacks = 0;
    for w in &chain.samples {
        let est = estimate_given_w(w, state);
        total += est.value;
        fallbacks += usize::from(est.fell_back);
    }
    let (lo, hi) = state.y_range;
    Ok(Prediction {
        y_hat: (total / chain.samples.len() as f64).clamp(lo, hi),
        acceptance_rate: chain.acceptance_rate,
        fallbacks,
    })
}

/// Posterior-mean prediction `ŷ*` for a new count vector.
pub fn predict(x_new: &CountVector, state: &PredictorState, cfg: &MhConfig) -> Result<f64> {
    predict_detailed(x_new, state, cfg).map(|p| p.y_hat)
}

/// Class 1 iff `y_hat > cutoff`.
pub fn class_from_value(y_hat: f64, cutoff: f64) -> u8 {
    u8::from(y_hat > cutoff)
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::Config(format!("cutoff must lie in (0, 1), got {cutoff}")));
    }
    Ok(())
}

pub fn classify(x_new: &CountVector, state: &PredictorState, cutoff: f64, cfg: &MhConfig) -> Result<u8> {
    check_cutoff(cutoff)?;
    if !state.is_binary() {
        return Err(Error::Data("classification needs training responses in {0, 1}".into()));
    }
    Ok(class_from_value(predict(x_new, state, cfg)?, cutoff))
}
