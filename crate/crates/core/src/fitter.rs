//! Monte Carlo EM for `{mu, Gamma, beta, Sigma}`.
//!
//! Each iteration runs one MH chain per observation (E-step), then maximizes
//! the Monte Carlo Q-function: `mu` in closed form, followed by an
//! alternation between the `(Gamma, beta)` eigen-update given `Sigma` and the
//! `Sigma` update given `(Gamma, beta)`. The M-step touches the chains only
//! through the per-observation means `w̄_y` and second moments `S_y`.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositional::{center_basis, BasisSpec, BasisVector, CountVector, LatentGaussian, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{self, condition_number, sorted_symmetric_eigen, sqrt_and_inv_sqrt, symmetrize};
use crate::rng::derive_seed;
use crate::sampler::{mh_run_with, ChainOutput, EStepTarget, MhConfig};

const GRAM_RIDGE_CONDITION: f64 = 1e12;
const EIGENGAP_WARN: f64 = 1e-12;
const SIGMA_JITTER_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
struct GramSolver {
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
    condition: f64,
}

impl GramSolver {
    fn new(gram: &DMatrix<f64>) -> Result<Self> {
        let r = gram.nrows();
        let condition = condition_number(gram);
        let trace = gram.trace();
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(Error::RankDeficientBasis(format!("trace(HH') = {trace}")));
        }
        let mut ridge = 0.0;
        let mut g = symmetrize(gram);
        if condition > GRAM_RIDGE_CONDITION {
            ridge = 1e-10 * trace / r as f64;
            log::warn!("HH' condition number {condition:.3e} exceeds 1e12; adding ridge {ridge:.3e}");
            g += DMatrix::identity(r, r) * ridge;
        }
        let chol = Cholesky::new(g).ok_or_else(|| {
            Error::RankDeficientBasis(format!("condition number {condition:.3e}"))
        })?;
        Ok(Self {
            chol,
            ridge,
            condition,
        })
    }
}

/// Training responses, counts and their centered response bases.
#[derive(Debug, Clone)]
pub struct Dataset {
    responses: Vec<f64>,
    counts: Vec<CountVector>,
    basis_spec: BasisSpec,
    centered_bases: Vec<BasisVector>,
    basis_offset: DVector<f64>,
    h: DMatrix<f64>,
    gram: GramSolver,
    zero_taxa: Vec<usize>,
}

impl Dataset {
    pub fn new(responses: Vec<f64>, counts: Vec<CountVector>, basis_spec: BasisSpec) -> Result<Self> {
        let n = responses.len();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 observations, got {n}")));
        }
        if counts.len() != n {
            return Err(Error::Data(format!(
                "{n} responses but {} count vectors",
                counts.len()
            )));
        }
        if let Some(y) = responses.iter().find(|y| !y.is_finite()) {
            return Err(Error::Data(format!("non-finite response {y}")));
        }
        let p = counts[0].len();
        if let Some(i) = counts.iter().position(|c| c.len() != p) {
            return Err(Error::Data(format!(
                "observation {i} has {} taxa, expected {p}",
                counts[i].len()
            )));
        }
        let (centered_bases, basis_offset) = center_basis(&responses, &basis_spec)?;
        let r = basis_spec.dim();
        let mut h = DMatrix::zeros(r, n);
        for (i, b) in centered_bases.iter().enumerate() {
            h.set_column(i, &b.h);
        }
        let gram = GramSolver::new(&(&h * h.transpose()))?;
        let zero_taxa: Vec<usize> = (0..p)
            .filter(|&j| counts.iter().all(|c| c.counts()[j] == 0))
            .collect();
        if !zero_taxa.is_empty() {
            log::warn!("taxa {zero_taxa:?} have zero counts in every sample; their Gamma rows are weakly identified");
        }
        Ok(Self {
            responses,
            counts,
            basis_spec,
            centered_bases,
            basis_offset,
            h,
            gram,
            zero_taxa,
        })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn p(&self) -> usize {
        self.counts[0].len()
    }

    pub fn r(&self) -> usize {
        self.h.nrows()
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn counts(&self) -> &[CountVector] {
        &self.counts
    }

    pub fn basis_spec(&self) -> &BasisSpec {
        &self.basis_spec
    }

    pub fn centered_bases(&self) -> &[BasisVector] {
        &self.centered_bases
    }

    pub fn basis_offset(&self) -> &DVector<f64> {
        &self.basis_offset
    }

    /// `H`, the `r x n` matrix of centered bases.
    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Condition number of `HH'`.
    pub fn gram_condition(&self) -> f64 {
        self.gram.condition
    }

    /// Ridge added to `HH'` before factorization (0 when none was needed).
    pub fn gram_ridge(&self) -> f64 {
        self.gram.ridge
    }

    /// Taxa with zero counts in every sample.
    pub fn zero_taxa(&self) -> &[usize] {
        &self.zero_taxa
    }

    /// Solves `(HH') X = rhs`.
    pub fn solve_gram(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram.chol.solve(rhs)
    }
}

/// Per-observation chain summaries, sufficient for the whole M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepStats {
    pub chain_means: Vec<DVector<f64>>,
    pub chain_second_moments: Vec<DMatrix<f64>>,
    pub grand_mean: DVector<f64>,
    pub acceptance_rates: Vec<f64>,
}

impl EStepStats {
    pub fn from_chains(chains: &[ChainOutput]) -> Self {
        Self::assemble(
            chains.iter().map(|c| c.mean.clone()).collect(),
            chains.iter().map(|c| c.second_moment.clone()).collect(),
            chains.iter().map(|c| c.acceptance_rate).collect(),
        )
    }

    /// Summaries of explicit sample sets, one set per observation.
    pub fn from_samples(samples: &[Vec<DVector<f64>>]) -> Self {
        let mut means = Vec::with_capacity(samples.len());
        let mut seconds = Vec::with_capacity(samples.len());
        for set in samples {
            let k = set[0].len();
            let b = set.len() as f64;
            let mut sum = DVector::zeros(k);
            let mut outer = DMatrix::zeros(k, k);
            for w in set {
                sum += w;
                outer.ger(1.0, w, w, 1.0);
            }
            means.push(sum / b);
            seconds.push(outer / b);
        }
        let n = samples.len();
        Self::assemble(means, seconds, vec![1.0; n])
    }

    /// Degenerate E-step for directly observed latent vectors (`B = 1`).
    pub fn from_point_mass(ws: &[DVector<f64>]) -> Self {
        Self::assemble(
            ws.to_vec(),
            ws.iter().map(|w| w * w.transpose()).collect(),
            vec![1.0; ws.len()],
        )
    }

    fn assemble(
        chain_means: Vec<DVector<f64>>,
        chain_second_moments: Vec<DMatrix<f64>>,
        acceptance_rates: Vec<f64>,
    ) -> Self {
        let k = chain_means[0].len();
        let n = chain_means.len() as f64;
        let grand_mean = chain_means.iter().fold(DVector::zeros(k), |a, w| a + w) / n;
        Self {
            chain_means,
            chain_second_moments,
            grand_mean,
            acceptance_rates,
        }
    }

    pub fn n(&self) -> usize {
        self.chain_means.len()
    }

    pub fn mean_acceptance(&self) -> f64 {
        self.acceptance_rates.iter().sum::<f64>() / self.acceptance_rates.len() as f64
    }

    /// `W̄ - w̄ 1'`, the `(p-1) x n` matrix of centered chain means.
    pub fn centered_means(&self) -> DMatrix<f64> {
        let k = self.grand_mean.len();
        let mut m = DMatrix::zeros(k, self.n());
        for (i, w) in self.chain_means.iter().enumerate() {
            m.set_column(i, &(w - &self.grand_mean));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Reduction dimension `d`.
    pub d: usize,
    pub max_em_iters: usize,
    /// Threshold on the 3-iteration moving average of the maximum relative
    /// parameter change.
    pub em_tol: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub mh: MhConfig,
    pub sigma_jitter: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            d: 1,
            max_em_iters: 100,
            em_tol: 1e-3,
            inner_max_iters: 50,
            inner_tol: 1e-8,
            mh: MhConfig::estep(),
            sigma_jitter: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::Config("d must be >= 1".into()));
        }
        if !(self.em_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_em_iters < 1 || self.inner_max_iters < 1 {
            return Err(Error::Config("iteration limits must be >= 1".into()));
        }
        if !(self.sigma_jitter >= 0.0) {
            return Err(Error::Config("sigma_jitter must be nonnegative".into()));
        }
        self.mh.validate()
    }

    fn check_against(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        let bound = (data.p() - 1).min(data.r());
        if self.d > bound {
            return Err(Error::Config(format!(
                "d = {} exceeds min(p-1, r) = {bound}",
                self.d
            )));
        }
        Ok(())
    }
}

/// One row of the EM trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmIteration {
    pub iteration: usize,
    /// Q̃ at the previous parameters, on this iteration's samples.
    pub q_before: f64,
    /// Q̃ at the updated parameters, on the same samples.
    pub q_after: f64,
    pub max_rel_change: f64,
    /// Moving average of `max_rel_change` over the last 3 iterations.
    pub moving_average: Option<f64>,
    pub mean_acceptance: f64,
    pub n_keep: usize,
    pub inner_iterations: usize,
    /// `|| Gamma' Sigma^-1 Gamma - I ||_F` after the M-step.
    pub constraint_violation: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ModelParams,
    pub em_trace: Vec<EmIteration>,
    pub converged: bool,
    pub iterations_used: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn final_change(&self) -> f64 {
        self.em_trace.last().map_or(f64::NAN, |t| t.max_rel_change)
    }

    pub fn final_acceptance(&self) -> f64 {
        self.em_trace.last().map_or(f64::NAN, |t| t.mean_acceptance)
    }

    pub fn max_constraint_violation(&self) -> f64 {
        self.em_trace
            .iter()
            .map(|t| t.constraint_violation)
            .fold(0.0, f64::max)
    }
}

/// `mu = w̄`.
pub fn m_step_mu(stats: &EStepStats) -> DVector<f64> {
    stats.grand_mean.clone()
}

/// `A = (W̄ - w̄ 1') H'` and `A (HH')^-1`.
fn cross_products(stats: &EStepStats, data: &Dataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if stats.n() != data.n() {
        return Err(Error::Dimension(format!(
            "{} chains for {} observations",
            stats.n(),
            data.n()
        )));
    }
    let a = stats.centered_means() * data.h_matrix().transpose();
    let b_ols = data.solve_gram(&a.transpose()).transpose();
    Ok((a, b_ols))
}

/// `M = (W̄ - w̄ 1') H' (HH')^-1 H (W̄ - w̄ 1')'`.
pub fn build_m_matrix(stats: &EStepStats, data: &Dataset) -> Result<DMatrix<f64>> {
    let (a, b_ols) = cross_products(stats, data)?;
    Ok(symmetrize(&(b_ols * a.transpose())))
}

#[derive(Debug, Clone)]
pub struct GammaBeta {
    pub gamma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    /// Eigenvalues of `Sigma^-1/2 M Sigma^-1/2`, descending.
    pub eigenvalues: Vec<f64>,
    /// `lambda_d - lambda_{d+1}` fell below 1e-12.
    pub ill_determined: bool,
}

/// `(Gamma, beta)` maximizing Q̃ for fixed `Sigma`:
/// `Gamma = Sigma^1/2 V`, `beta = V' Sigma^-1/2 (W̄ - w̄ 1') H' (HH')^-1`,
/// with `V` the top-`d` eigenvectors of `Sigma^-1/2 M Sigma^-1/2`.
pub fn m_step_gamma_beta(
    m: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    stats: &EStepStats,
    data: &Dataset,
    d: usize,
) -> Result<GammaBeta> {
    let k = sigma.nrows();
    if d < 1 || d > k.min(data.r()) {
        return Err(Error::Config(format!(
            "d = {d} must satisfy 1 <= d <= min(p-1, r) = {}",
            k.min(data.r())
        )));
    }
    let (root, inv_root) = sqrt_and_inv_sqrt(sigma)?;
    let eig = sorted_symmetric_eigen(&(&inv_root * m * &inv_root));
    let ill_determined = d < k && (eig.values[d - 1] - eig.values[d]).abs() < EIGENGAP_WARN;
    if ill_determined {
        log::warn!(
            "eigengap lambda_{d} - lambda_{} = {:.3e}; reduction subspace is ill-determined",
            d + 1,
            eig.values[d - 1] - eig.values[d]
        );
    }
    let v = eig.vectors.columns(0, d).into_owned();
    let (_, b_ols) = cross_products(stats, data)?;
    let beta = v.transpose() * &inv_root * b_ols;
    let gamma = root * v;
    Ok(GammaBeta {
        gamma,
        beta,
        eigenvalues: eig.values,
        ill_determined,
    })
}

fn residual_second_moment(
    stats: &EStepStats,
    mu: &DVector<f64>,
    gamma: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    data: &Dataset,
) -> DMatrix<f64> {
    let k = mu.len();
    let gb = gamma * beta;
    let mut total = DMatrix::zeros(k, k);
    for ((wbar, s), h) in stats
        .chain_means
        .iter()
        .zip(&stats.chain_second_moments)
        .zip(data.centered_bases())
    {
        let c = mu + &gb * &h.h;
        total += s;
        total.ger(-1.0, wbar, &c, 1.0);
        total.ger(-1.0, &c, wbar, 1.0);
        total.ger(1.0, &c, &c, 1.0);
    }
    total
}

/// `Sigma = (1/n) sum_y [S_y - w̄_y c_y' - c_y w̄_y' + c_y c_y']`,
/// `c_y = mu + Gamma beta h_y`; adds `jitter * I` when the minimum eigenvalue
/// drops below 1e-10.
pub fn m_step_sigma(
    stats: &EStepStats,
    mu: &DVector<f64>,
    gamma: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    data: &Dataset,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    let k = mu.len();
    let mut sigma = symmetrize(&(residual_second_moment(stats, mu, gamma, beta, data) / stats.n() as f64));
    let min = linalg::min_eigenvalue(&sigma);
    if min < SIGMA_JITTER_THRESHOLD {
        log::debug!("sigma minimum eigenvalue {min:.3e}; adding jitter {jitter:.3e}");
        sigma += DMatrix::identity(k, k) * jitter;
        let min = linalg::min_eigenvalue(&sigma);
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "sigma update has minimum eigenvalue {min:.3e} after jitter"
            )));
        }
    }
    Ok(sigma)
}

/// Monte Carlo Q-function without constants:
/// `-(n/2) log det Sigma - (1/2) sum_y tr(Sigma^-1 E_y)`.
pub fn q_tilde(stats: &EStepStats, data: &Dataset, theta: &ModelParams) -> Result<f64> {
    let g = LatentGaussian::new(&theta.sigma)?;
    let k = theta.latent_dim() as f64;
    // log_norm = -(k/2) log 2pi - (1/2) log det
    let half_log_det = -g.log_norm() - 0.5 * k * (2.0 * std::f64::consts::PI).ln();
    let total = residual_second_moment(stats, &theta.mu, &theta.gamma, &theta.beta, data);
    let chol = Cholesky::new(symmetrize(&theta.sigma))
        .ok_or_else(|| Error::NotPositiveDefinite("sigma".into()))?;
    let tr = chol.solve(&total).trace();
    Ok(-(stats.n() as f64) * half_log_det - 0.5 * tr)
}

/// Diagnostics from one M-step.
#[derive(Debug, Clone)]
pub struct MStepReport {
    pub inner_iterations: usize,
    pub q_before: f64,
    pub q_after: f64,
    pub constraint_violation: f64,
    pub ill_determined: bool,
}

/// `||new - old||_F / max(||old||_F, 1)`.
pub fn rel_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    (new - old).norm() / old.norm().max(1.0)
}

fn rel_change_vec(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    (new - old).norm() / old.norm().max(1.0)
}

/// Full M-step from fixed E-step statistics.
///
/// The alternation starts from the previous `Sigma` and finishes with a
/// `(Gamma, beta)` update against the final `Sigma`, so the returned
/// parameters satisfy `Gamma' Sigma^-1 Gamma = I` by construction.
pub fn m_step(
    stats: &EStepStats,
    data: &Dataset,
    prev: &ModelParams,
    cfg: &FitConfig,
) -> Result<(ModelParams, MStepReport)> {
    let q_before = q_tilde(stats, data, prev)?;
    let mu = m_step_mu(stats);
    let m = build_m_matrix(stats, data)?;
    let mut sigma = prev.sigma.clone();
    let mut product = &prev.gamma * &prev.beta;
    let mut inner_iterations = 0;
    for _ in 0..cfg.inner_max_iters {
        inner_iterations += 1;
        let gb = m_step_gamma_beta(&m, &sigma, stats, data, cfg.d)?;
        let new_sigma = m_step_sigma(stats, &mu, &gb.gamma, &gb.beta, data, cfg.sigma_jitter)?;
        let new_product = &gb.gamma * &gb.beta;
        let change = rel_change(&new_product, &product).max(rel_change(&new_sigma, &sigma));
        sigma = new_sigma;
        product = new_product;
        if change < cfg.inner_tol {
            break;
        }
    }
    let gb = m_step_gamma_beta(&m, &sigma, stats, data, cfg.d)?;
    let theta = ModelParams {
        mu,
        gamma: gb.gamma,
        beta: gb.beta,
        sigma,
    };
    let constraint_violation = theta.constraint_violation()?;
    let q_after = q_tilde(stats, data, &theta)?;
    Ok((
        theta,
        MStepReport {
            inner_iterations,
            q_before,
            q_after,
            constraint_violation,
            ill_determined: gb.ill_determined,
        },
    ))
}

/// Source of E-step statistics.
pub trait LatentExpectation {
    fn expect(
        &mut self,
        data: &Dataset,
        theta: &ModelParams,
        iteration: usize,
        n_keep: usize,
    ) -> Result<EStepStats>;
}

/// MH E-step with per-observation warm starts and tuned proposal scales.
#[derive(Debug, Clone)]
pub struct McmcEStep {
    mh: MhConfig,
    seed: u64,
    states: Vec<DVector<f64>>,
    scales: Vec<f64>,
}

impl McmcEStep {
    /// Chains start at the pseudo-count ALR of each observation.
    pub fn new(data: &Dataset, cfg: &FitConfig) -> Self {
        Self {
            mh: cfg.mh.clone(),
            seed: cfg.seed,
            states: data.counts().iter().map(|c| c.pseudo_alr().into_inner()).collect(),
            scales: vec![cfg.mh.proposal_scale; data.n()],
        }
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }
}

impl LatentExpectation for McmcEStep {
    fn expect(
        &mut self,
        data: &Dataset,
        theta: &ModelParams,
        iteration: usize,
        n_keep: usize,
    ) -> Result<EStepStats> {
        let gaussian = Arc::new(LatentGaussian::new(&theta.sigma)?);
        let chains: Vec<Result<ChainOutput>> = (0..data.n())
            .into_par_iter()
            .map(|i| {
                let target = EStepTarget::with_gaussian(
                    data.counts()[i].clone(),
                    theta.latent_mean(&data.centered_bases()[i].h),
                    gaussian.clone(),
                );
                let cfg = MhConfig {
                    seed: derive_seed(self.seed, &[iteration as u64, i as u64]),
                    n_keep,
                    proposal_scale: self.scales[i],
                    ..self.mh.clone()
                };
                mh_run_with(&target, &self.states[i], &cfg, false).map_err(|e| e.at_observation(i))
            })
            .collect();
        let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
        for (i, c) in chains.iter().enumerate() {
            self.states[i].copy_from(&c.final_state);
            self.scales[i] = c.final_scale;
        }
        Ok(EStepStats::from_chains(&chains))
    }
}

/// Directly observed latent vectors: the likelihood is a point mass.
#[derive(Debug, Clone)]
pub struct ObservedLatent(pub Vec<DVector<f64>>);

impl LatentExpectation for ObservedLatent {
    fn expect(&mut self, data: &Dataset, _: &ModelParams, _: usize, _: usize) -> Result<EStepStats> {
        if self.0.len() != data.n() {
            return Err(Error::Dimension(format!(
                "{} latent vectors for {} observations",
                self.0.len(),
                data.n()
            )));
        }
        Ok(EStepStats::from_point_mass(&self.0))
    }
}

/// One MCMC E-step with warm-started chains.
pub fn e_step(
    data: &Dataset,
    theta: &ModelParams,
    chains: &mut McmcEStep,
    iteration: usize,
) -> Result<EStepStats> {
    let n_keep = chains.mh.n_keep;
    chains.expect(data, theta, iteration, n_keep)
}

/// Starting parameters from pseudo-count ALR proportions.
pub fn initial_params(data: &Dataset, d: usize) -> Result<ModelParams> {
    let ws: Vec<DVector<f64>> = data.counts().iter().map(|c| c.pseudo_alr().into_inner()).collect();
    let stats = EStepStats::from_point_mass(&ws);
    let k = data.p() - 1;
    let mu = m_step_mu(&stats);
    let centered = stats.centered_means();
    let sigma = symmetrize(&(&centered * centered.transpose() / data.n() as f64))
        + DMatrix::identity(k, k) * 1e-6;
    let m = build_m_matrix(&stats, data)?;
    let gb = m_step_gamma_beta(&m, &sigma, &stats, data, d)?;
    Ok(ModelParams {
        mu,
        gamma: gb.gamma,
        beta: gb.beta,
        sigma,
    })
}

/// Flips columns of `theta.gamma` (and rows of `theta.beta`) to point the
/// same way as `reference`.
pub fn align_signs(theta: &mut ModelParams, reference: &DMatrix<f64>) {
    for j in 0..theta.d().min(reference.ncols()) {
        if theta.gamma.column(j).dot(&reference.column(j)) < 0.0 {
            theta.gamma.column_mut(j).neg_mut();
            theta.beta.row_mut(j).neg_mut();
        }
    }
}

fn max_param_change(new: &ModelParams, old: &ModelParams) -> f64 {
    rel_change_vec(&new.mu, &old.mu)
        .max(rel_change(&new.gamma, &old.gamma))
        .max(rel_change(&new.beta, &old.beta))
        .max(rel_change(&new.sigma, &old.sigma))
}

const MOVING_WINDOW: usize = 3;
const STALL_ITERS: usize = 5;
const B_GROWTH: f64 = 1.5;
const B_CAP_FACTOR: usize = 10;

/// Fits the model by Monte Carlo EM.
pub fn fit(data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check_against(data)?;
    let mut estep = McmcEStep::new(data, cfg);
    fit_with(data, cfg, &mut estep)
}

/// EM loop over an arbitrary E-step source.
pub fn fit_with<E: LatentExpectation>(data: &Dataset, cfg: &FitConfig, estep: &mut E) -> Result<FitResult> {
    cfg.check_against(data)?;
    let mut theta = initial_params(data, cfg.d)?;
    let mut warnings = Vec::new();
    let mut trace = Vec::new();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(MOVING_WINDOW);
    let base_keep = cfg.mh.n_keep;
    let mut n_keep = base_keep;
    let mut best_ma = f64::INFINITY;
    let mut stalled = 0usize;
    let mut converged = false;

    for iteration in 1..=cfg.max_em_iters {
        let stats = estep.expect(data, &theta, iteration, n_keep)?;
        let (mut next, report) = m_step(&stats, data, &theta, cfg)?;
        align_signs(&mut next, &theta.gamma);
        if report.ill_determined {
            warnings.push(format!("iteration {iteration}: reduction subspace ill-determined (eigengap < 1e-12)"));
        }
        if report.constraint_violation > 1e-8 {
            warnings.push(format!(
                "iteration {iteration}: constraint violation {:.3e}",
                report.constraint_violation
            ));
        }
        let change = max_param_change(&next, &theta);
        if window.len() == MOVING_WINDOW {
            window.pop_front();
        }
        window.push_back(change);
        let moving_average = (window.len() == MOVING_WINDOW)
            .then(|| window.iter().sum::<f64>() / MOVING_WINDOW as f64);
        trace.push(EmIteration {
            iteration,
            q_before: report.q_before,
            q_after: report.q_after,
            max_rel_change: change,
            moving_average,
            mean_acceptance: stats.mean_acceptance(),
            n_keep,
            inner_iterations: report.inner_iterations,
            constraint_violation: report.constraint_violation,
        });
        theta = next;
        if let Some(ma) = moving_average {
            if ma < cfg.em_tol {
                converged = true;
                break;
            }
            if ma < best_ma {
                best_ma = ma;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= STALL_ITERS && n_keep < base_keep * B_CAP_FACTOR {
                    n_keep = ((n_keep as f64 * B_GROWTH).ceil() as usize).min(base_keep * B_CAP_FACTOR);
                    log::debug!("iteration {iteration}: MC sample size grows to {n_keep}");
                    stalled = 0;
                    best_ma = f64::INFINITY;
                }
            }
        }
    }
    theta.validate()?;
    let iterations_used = trace.len();
    Ok(FitResult {
        theta,
        em_trace: trace,
        converged,
        iterations_used,
        warnings,
    })
}
