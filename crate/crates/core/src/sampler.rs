//! Random-walk Metropolis-Hastings over ALR latent vectors.
//!
//! Two targets are provided: the per-observation E-step posterior
//! (multinomial likelihood times the Gaussian `W | Y` density) and the
//! prediction-time posterior, where the Gaussian prior is replaced by the
//! empirical mixture over the training responses.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compositional::{count_loglik_latent, BasisVector, CountVector, LatentGaussian, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::rng::rng_from_seed;

/// Unnormalized log density over the latent space.
pub trait LogTarget {
    fn log_density(&self, w: &DVector<f64>) -> f64;
}

impl<F> LogTarget for F
where
    F: Fn(&DVector<f64>) -> f64,
{
    fn log_density(&self, w: &DVector<f64>) -> f64 {
        self(w)
    }
}

/// Log acceptance ratio `log f(candidate) - log f(current)`.
pub fn log_accept_ratio<T: LogTarget + ?Sized>(
    target: &T,
    current: &DVector<f64>,
    candidate: &DVector<f64>,
) -> f64 {
    target.log_density(candidate) - target.log_density(current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MhConfig {
    /// Steps discarded before samples are kept.
    pub burn_in: usize,
    /// Number of retained samples `B`.
    pub n_keep: usize,
    /// Standard deviation of the isotropic Gaussian proposal.
    pub proposal_scale: f64,
    pub seed: u64,
    pub thinning: usize,
    /// Adapt `proposal_scale` during burn-in towards 20-40% acceptance.
    pub auto_tune: bool,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self::estep()
    }
}

impl MhConfig {
    /// Defaults for chains run inside every EM iteration.
    pub fn estep() -> Self {
        Self {
            burn_in: 500,
            n_keep: 200,
            proposal_scale: 1.0,
            seed: 0,
            thinning: 1,
            auto_tune: true,
        }
    }

    /// Defaults for prediction chains, run once per new observation.
    pub fn prediction() -> Self {
        Self {
            burn_in: 1000,
            n_keep: 1000,
            ..Self::estep()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_keep < 1 {
            return Err(Error::Config("n_keep must be >= 1".into()));
        }
        if !(self.proposal_scale > 0.0) || !self.proposal_scale.is_finite() {
            return Err(Error::Config(format!(
                "proposal_scale must be positive, got {}",
                self.proposal_scale
            )));
        }
        if self.thinning < 1 {
            return Err(Error::Config("thinning must be >= 1".into()));
        }
        Ok(())
    }
}

/// Post-burn-in chain and its sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// Kept samples; empty when the chain was run without sample storage.
    pub samples: Vec<DVector<f64>>,
    pub mean: DVector<f64>,
    /// `(1/B) sum_b w_b w_b'`
    pub second_moment: DMatrix<f64>,
    /// Acceptance rate over the post-burn-in steps.
    pub acceptance_rate: f64,
    pub final_state: DVector<f64>,
    /// Proposal scale in effect after burn-in tuning.
    pub final_scale: f64,
    /// Proposals rejected because the target was not finite there.
    pub non_finite_proposals: usize,
}

const TUNE_BATCH: usize = 50;

/// Runs a random-walk MH chain and keeps every sample.
pub fn mh_run<T: LogTarget + ?Sized>(
    target: &T,
    init: &DVector<f64>,
    cfg: &MhConfig,
) -> Result<ChainOutput> {
    mh_run_with(target, init, cfg, true)
}

/// As [`mh_run`]; `store_samples = false` keeps only the summary statistics.
pub fn mh_run_with<T: LogTarget + ?Sized>(
    target: &T,
    init: &DVector<f64>,
    cfg: &MhConfig,
    store_samples: bool,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let k = init.len();
    let mut current = init.clone();
    let mut current_lp = target.log_density(&current);
    if current_lp.is_nan() || current_lp == f64::INFINITY {
        return Err(Error::Sampler(format!(
            "log target is {current_lp} at the initial state"
        )));
    }
    if current_lp == f64::NEG_INFINITY {
        return Err(Error::Sampler("initial state has zero target density".into()));
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut scale = cfg.proposal_scale;
    let mut non_finite = 0usize;
    let mut candidate = DVector::zeros(k);

    let mut step = |current: &mut DVector<f64>,
                    current_lp: &mut f64,
                    scale: f64,
                    rng: &mut rand_chacha::ChaCha8Rng,
                    non_finite: &mut usize|
     -> bool {
        for j in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            candidate[j] = current[j] + scale * z;
        }
        let lp = target.log_density(&candidate);
        // The uniform is drawn unconditionally so the stream layout does not
        // depend on target values.
        let u: f64 = rng.random();
        if !lp.is_finite() {
            *non_finite += 1;
            return false;
        }
        let log_kappa = (lp - *current_lp).min(0.0);
        if log_kappa >= u.ln() {
            current.copy_from(&candidate);
            *current_lp = lp;
            true
        } else {
            false
        }
    };

    let mut batch_accepts = 0usize;
    for i in 0..cfg.burn_in {
        if step(&mut current, &mut current_lp, scale, &mut rng, &mut non_finite) {
            batch_accepts += 1;
        }
        if cfg.auto_tune && (i + 1) % TUNE_BATCH == 0 {
            let rate = batch_accepts as f64 / TUNE_BATCH as f64;
            if rate < 0.2 {
                scale *= 0.7;
            } else if rate > 0.4 {
                scale *= 1.4;
            }
            batch_accepts = 0;
        }
    }

    let mut samples = Vec::with_capacity(if store_samples { cfg.n_keep } else { 0 });
    let mut sum = DVector::zeros(k);
    let mut outer = DMatrix::zeros(k, k);
    let mut accepts = 0usize;
    for _ in 0..cfg.n_keep {
        for _ in 0..cfg.thinning {
            if step(&mut current, &mut current_lp, scale, &mut rng, &mut non_finite) {
                accepts += 1;
            }
        }
        sum += &current;
        outer.ger(1.0, &current, &current, 1.0);
        if store_samples {
            samples.push(current.clone());
        }
    }
    let b = cfg.n_keep as f64;
    Ok(ChainOutput {
        samples,
        mean: sum / b,
        second_moment: outer / b,
        acceptance_rate: accepts as f64 / (cfg.n_keep * cfg.thinning) as f64,
        final_state: current,
        final_scale: scale,
        non_finite_proposals: non_finite,
    })
}

/// E-step posterior `W | X = x, Y = y` under the current parameters, up to a
/// constant.
#[derive(Debug, Clone)]
pub struct EStepTarget {
    counts: CountVector,
    gaussian: Arc<LatentGaussian>,
    mean: DVector<f64>,
}

impl EStepTarget {
    pub fn with_gaussian(counts: CountVector, mean: DVector<f64>, gaussian: Arc<LatentGaussian>) -> Self {
        Self {
            counts,
            gaussian,
            mean,
        }
    }
}

impl LogTarget for EStepTarget {
    fn log_density(&self, w: &DVector<f64>) -> f64 {
        count_loglik_latent(&self.counts, w) + self.gaussian.log_density(w, &self.mean)
    }
}

fn check_counts(x: &CountVector, theta: &ModelParams) -> Result<()> {
    if x.len() != theta.p() {
        return Err(Error::Dimension(format!(
            "count vector has {} taxa, model has {}",
            x.len(),
            theta.p()
        )));
    }
    Ok(())
}

pub fn estep_log_target(x: &CountVector, h: &BasisVector, theta: &ModelParams) -> Result<EStepTarget> {
    theta.check_dimensions()?;
    check_counts(x, theta)?;
    if h.h.len() != theta.r() {
        return Err(Error::Dimension(format!("basis has {} entries, model r = {}", h.h.len(), theta.r())));
    }
    let gaussian = Arc::new(LatentGaussian::new(&theta.sigma)?);
    Ok(EStepTarget::with_gaussian(x.clone(), theta.latent_mean(&h.h), gaussian))
}

/// Prediction-time posterior: likelihood times the empirical mixture
/// `sum_y N(w; mu + Gamma beta h_y, Sigma)` over the training responses.
#[derive(Debug, Clone)]
pub struct MixtureTarget {
    counts: CountVector,
    gaussian: Arc<LatentGaussian>,
    whitened_means: Vec<DVector<f64>>,
}

impl LogTarget for MixtureTarget {
    fn log_density(&self, w: &DVector<f64>) -> f64 {
        let z = self.gaussian.whiten(w);
        let log_norm = self.gaussian.log_norm();
        let mix = log_sum_exp(
            self.whitened_means
                .iter()
                .map(|m| log_norm - 0.5 * (&z - m).norm_squared()),
        );
        count_loglik_latent(&self.counts, w) + mix
    }
}

pub fn prediction_log_target(
    x_new: &CountVector,
    training_bases: &[BasisVector],
    theta: &ModelParams,
) -> Result<MixtureTarget> {
    if training_bases.is_empty() {
        return Err(Error::Data("prediction needs at least one training basis".into()));
    }
    theta.check_dimensions()?;
    check_counts(x_new, theta)?;
    let gaussian = Arc::new(LatentGaussian::new(&theta.sigma)?);
    let whitened_means = training_bases
        .iter()
        .map(|h| {
            if h.h.len() != theta.r() {
                return Err(Error::Dimension(format!(
                    "basis has {} entries, model r = {}",
                    h.h.len(),
                    theta.r()
                )));
            }
            Ok(gaussian.whiten(&theta.latent_mean(&h.h)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureTarget {
        counts: x_new.clone(),
        gaussian,
        whitened_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositional::{alr_inv, multinomial_logpmf, LatentVector};

    fn std_normal(w: &DVector<f64>) -> f64 {
        -0.5 * w.norm_squared()
    }

    fn cfg(seed: u64, burn_in: usize, n_keep: usize, scale: f64) -> MhConfig {
        MhConfig {
            burn_in,
            n_keep,
            proposal_scale: scale,
            seed,
            thinning: 1,
            auto_tune: false,
        }
    }

    fn toy_theta_1d() -> ModelParams {
        ModelParams::new(
            DVector::from_vec(vec![0.3]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap()
    }

    fn toy_theta_2d() -> ModelParams {
        let s = 2f64.sqrt();
        ModelParams::new(
            DVector::from_vec(vec![0.2, -0.4]),
            DMatrix::from_row_slice(2, 1, &[1.0 / s, 1.0 / s]),
            DMatrix::from_row_slice(1, 2, &[0.7, -0.3]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_moments() {
        let out = mh_run(&std_normal, &DVector::zeros(1), &cfg(11, 1000, 50_000, 2.4)).unwrap();
        let mean = out.mean[0];
        let var = out.second_moment[(0, 0)] - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn tiny_scale_accepts_almost_everything() {
        let init = DVector::from_vec(vec![0.5, -0.5]);
        let out = mh_run(&std_normal, &init, &cfg(3, 0, 2_000, 1e-8)).unwrap();
        assert!(out.acceptance_rate > 0.999);
        assert!((&out.final_state - &init).amax() < 1e-5);
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(42, 100, 500, 0.8);
        let a = mh_run(&std_normal, &DVector::zeros(3), &c).unwrap();
        let b = mh_run(&std_normal, &DVector::zeros(3), &c).unwrap();
        assert_eq!(a, b);
        let c2 = MhConfig { seed: 43, ..c };
        assert_ne!(a, mh_run(&std_normal, &DVector::zeros(3), &c2).unwrap());
    }

    #[test]
    fn summary_statistics_match_samples() {
        let out = mh_run(&std_normal, &DVector::zeros(2), &cfg(5, 10, 300, 1.0)).unwrap();
        let avg = out.samples.iter().fold(DVector::zeros(2), |a, s| a + s) / 300.0;
        assert!((&avg - &out.mean).amax() < 1e-12);
        let cov = &out.second_moment - &out.mean * out.mean.transpose();
        assert!(crate::linalg::min_eigenvalue(&cov) > -1e-10);
    }

    #[test]
    fn thinning_keeps_n_keep_samples() {
        let c = MhConfig { thinning: 3, ..cfg(5, 10, 100, 1.0) };
        let out = mh_run(&std_normal, &DVector::zeros(1), &c).unwrap();
        assert_eq!(out.samples.len(), 100);
    }

    #[test]
    fn nan_at_init_is_error() {
        let nan = |_: &DVector<f64>| f64::NAN;
        assert!(mh_run(&nan, &DVector::zeros(1), &cfg(0, 0, 1, 1.0)).is_err());
    }

    #[test]
    fn non_finite_proposals_are_rejected_and_counted() {
        let half_line = |w: &DVector<f64>| if w[0] < 0.0 { f64::NAN } else { -w[0] };
        let out = mh_run(&half_line, &DVector::from_element(1, 1.0), &cfg(9, 0, 2000, 1.0)).unwrap();
        assert!(out.non_finite_proposals > 0);
        assert!(out.samples.iter().all(|s| s[0] >= 0.0));
    }

    #[test]
    fn swapping_states_negates_log_ratio() {
        let x = CountVector::new(vec![4, 1, 7]).unwrap();
        let h = BasisVector { h: DVector::from_vec(vec![0.3, -0.1]), centered: true };
        let t = estep_log_target(&x, &h, &toy_theta_2d()).unwrap();
        let a = DVector::from_vec(vec![0.1, 0.9]);
        let b = DVector::from_vec(vec![-1.2, 0.4]);
        assert_eq!(log_accept_ratio(&t, &a, &b), -log_accept_ratio(&t, &b, &a));
    }

    #[test]
    fn auto_tune_moves_scale_towards_target_band() {
        let c = MhConfig { auto_tune: true, ..cfg(2, 2000, 5000, 50.0) };
        let out = mh_run(&std_normal, &DVector::zeros(2), &c).unwrap();
        assert!(out.final_scale < 50.0);
        assert!(out.acceptance_rate > 0.1 && out.acceptance_rate < 0.6, "{}", out.acceptance_rate);
    }

    #[test]
    fn estep_target_differences_match_full_likelihood() {
        let theta = toy_theta_2d();
        let x = CountVector::new(vec![4, 1, 7]).unwrap();
        let h = BasisVector { h: DVector::from_vec(vec![0.3, -0.1]), centered: true };
        let t = estep_log_target(&x, &h, &theta).unwrap();
        let full = |w: &[f64]| {
            let lv = LatentVector::from_slice(w).unwrap();
            multinomial_logpmf(&x, &alr_inv(&lv)).unwrap()
                + crate::compositional::log_density_w_given_y(&lv, &h, &theta).unwrap()
        };
        let (a, b) = ([0.3, -0.8], [1.4, 0.2]);
        let got = t.log_density(&DVector::from_column_slice(&a)) - t.log_density(&DVector::from_column_slice(&b));
        let expect = full(&a) - full(&b);
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn estep_target_binomial_reduction_at_p2() {
        let theta = toy_theta_1d();
        let (k, m) = (3u64, 5u64);
        let x = CountVector::new(vec![k, m - k]).unwrap();
        let h = BasisVector { h: DVector::from_vec(vec![1.0]), centered: true };
        let t = estep_log_target(&x, &h, &theta).unwrap();
        // k w - m log(1 + e^w) - (w - 0.8)^2 / 2, up to a constant
        let hand = |w: f64| k as f64 * w - m as f64 * (1.0 + w.exp()).ln() - 0.5 * (w - 0.8).powi(2);
        let c = t.log_density(&DVector::from_element(1, 0.0)) - hand(0.0);
        for w in [-2.0, -0.3, 0.7, 2.5] {
            assert!((t.log_density(&DVector::from_element(1, w)) - hand(w) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_of_one_matches_estep() {
        let theta = toy_theta_2d();
        let x = CountVector::new(vec![2, 9, 3]).unwrap();
        let h = BasisVector { h: DVector::from_vec(vec![-0.5, 0.25]), centered: true };
        let e = estep_log_target(&x, &h, &theta).unwrap();
        let m = prediction_log_target(&x, std::slice::from_ref(&h), &theta).unwrap();
        for w in [[0.0, 0.0], [1.0, -2.0], [-0.4, 0.6]] {
            let w = DVector::from_column_slice(&w);
            assert!((e.log_density(&w) - m.log_density(&w)).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_two_components_dense_oracle_and_permutation() {
        let theta = toy_theta_1d();
        let x = CountVector::new(vec![1, 4]).unwrap();
        let h1 = BasisVector { h: DVector::from_vec(vec![-1.0]), centered: true };
        let h2 = BasisVector { h: DVector::from_vec(vec![1.0]), centered: true };
        let t = prediction_log_target(&x, &[h1.clone(), h2.clone()], &theta).unwrap();
        let t_rev = prediction_log_target(&x, &[h2, h1], &theta).unwrap();
        let dens = |w: f64, mean: f64| (-(w - mean).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for w in [-1.5f64, 0.0, 0.4, 2.0] {
            let lik = w - 5.0 * (1.0 + w.exp()).ln();
            let expect = lik + (dens(w, 0.3 - 0.5) + dens(w, 0.3 + 0.5)).ln();
            let wv = DVector::from_element(1, w);
            assert!((t.log_density(&wv) - expect).abs() < 1e-10);
            assert!((t.log_density(&wv) - t_rev.log_density(&wv)).abs() < 1e-14);
        }
    }

    #[test]
    fn acceptance_non_increasing_in_scale() {
        let scales = [0.5, 1.5, 4.0];
        let rates: Vec<f64> = scales
            .iter()
            .map(|&s| {
                (0..5u64)
                    .map(|seed| mh_run(&std_normal, &DVector::zeros(1), &cfg(seed, 0, 20_000, s)).unwrap().acceptance_rate)
                    .sum::<f64>()
                    / 5.0
            })
            .collect();
        assert!(rates[0] >= rates[1] && rates[1] >= rates[2], "{rates:?}");
    }
}
