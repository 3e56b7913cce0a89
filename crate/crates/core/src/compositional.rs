//! Domain types and the model's basic operations: the additive log-ratio
//! (ALR) transform pair, the multinomial-logit link and likelihood, response
//! bases, and the latent Gaussian density.
//!
//! The reference category is always the last taxon: `w_j = log(z_j / z_p)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{self, log1p_sum_exp};

/// Raw taxon counts of one sample. The library size is the exact sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    counts: Vec<u64>,
    library_size: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Domain(format!(
                "count vector needs at least 2 taxa, got {}",
                counts.len()
            )));
        }
        let library_size: u64 = counts.iter().sum();
        if library_size == 0 {
            return Err(Error::Domain("count vector has library size 0".into()));
        }
        Ok(Self {
            counts,
            library_size,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn library_size(&self) -> u64 {
        self.library_size
    }

    /// Number of taxa `p`.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `alr((x + 0.5) / sum(x + 0.5))`. The pseudo-count is only ever used to
    /// place a starting point; it never enters a likelihood.
    pub fn pseudo_alr(&self) -> LatentVector {
        let total = self.library_size as f64 + 0.5 * self.counts.len() as f64;
        let probs: Vec<f64> = self.counts.iter().map(|&c| (c as f64 + 0.5) / total).collect();
        alr(&Composition::new(probs).expect("pseudo-count proportions are positive"))
    }
}

/// A strictly positive probability vector on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    probs: Vec<f64>,
}

impl Composition {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Domain("composition needs at least 2 parts".into()));
        }
        if let Some((j, &v)) = probs
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::Domain(format!(
                "composition entry {j} is not strictly positive ({v})"
            )));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("composition sums to {s}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// ALR coordinates `W` in `R^{p-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(DVector<f64>);

impl LatentVector {
    pub fn new(w: DVector<f64>) -> Result<Self> {
        if let Some(j) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("latent entry {j} is not finite")));
        }
        Ok(Self(w))
    }

    pub fn from_slice(w: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(w))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reduced coordinates `U = Gamma' Sigma^-1 W` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedVector(pub DVector<f64>);

/// A response basis vector `h_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    pub h: DVector<f64>,
    pub centered: bool,
}

/// How a response value is expanded into `h_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    /// `(y, y^2, ..., y^degree)`.
    Polynomial { degree: usize },
    /// `(y)`.
    Identity,
    /// Explicit lookup table from response value to basis vector, for
    /// categorical responses.
    Table { entries: Vec<(f64, Vec<f64>)> },
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::Polynomial { degree: 3 }
    }
}

impl BasisSpec {
    pub fn dim(&self) -> usize {
        match self {
            BasisSpec::Polynomial { degree } => *degree,
            BasisSpec::Identity => 1,
            BasisSpec::Table { entries } => entries.first().map_or(0, |e| e.1.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BasisSpec::Polynomial { degree } if *degree < 1 => Err(Error::Config(format!(
                "polynomial degree must be >= 1, got {degree}"
            ))),
            BasisSpec::Table { entries } => {
                let r = self.dim();
                if r == 0 {
                    return Err(Error::Config("basis table is empty".into()));
                }
                if entries.iter().any(|e| e.1.len() != r) {
                    return Err(Error::Config("basis table rows differ in length".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Parses `poly:K`, `identity` (also `poly:1`).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("identity") {
            return Ok(BasisSpec::Identity);
        }
        if let Some(k) = s.strip_prefix("poly:") {
            let degree: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("bad polynomial degree in '{s}'")))?;
            let spec = BasisSpec::Polynomial { degree };
            spec.validate()?;
            return Ok(spec);
        }
        Err(Error::Config(format!(
            "unknown basis '{s}' (expected poly:K or identity)"
        )))
    }
}

/// Uncentered basis vector for a single response value.
pub fn basis(y: f64, spec: &BasisSpec) -> Result<BasisVector> {
    spec.validate()?;
    let h = match spec {
        BasisSpec::Polynomial { degree } => {
            DVector::from_iterator(*degree, (1..=*degree).map(|k| y.powi(k as i32)))
        }
        BasisSpec::Identity => DVector::from_element(1, y),
        BasisSpec::Table { entries } => {
            let row = entries
                .iter()
                .find(|(v, _)| *v == y)
                .ok_or_else(|| Error::Domain(format!("response {y} not in basis table")))?;
            DVector::from_column_slice(&row.1)
        }
    };
    Ok(BasisVector { h, centered: false })
}

/// Centers the basis over a training set. Returns the centered vectors and the
/// offset (mean uncentered basis) to subtract from any later response.
pub fn center_basis(
    responses: &[f64],
    spec: &BasisSpec,
) -> Result<(Vec<BasisVector>, DVector<f64>)> {
    if responses.is_empty() {
        return Err(Error::Data("cannot center a basis over zero responses".into()));
    }
    let raw = responses
        .iter()
        .map(|&y| basis(y, spec))
        .collect::<Result<Vec<_>>>()?;
    let r = spec.dim();
    let offset = raw
        .iter()
        .fold(DVector::zeros(r), |acc, b| acc + &b.h)
        / responses.len() as f64;
    let centered = raw
        .into_iter()
        .map(|b| BasisVector {
            h: b.h - &offset,
            centered: true,
        })
        .collect();
    Ok((centered, offset))
}

/// Basis for a response value, shifted by a training offset.
pub fn basis_with_offset(y: f64, spec: &BasisSpec, offset: &DVector<f64>) -> Result<BasisVector> {
    let b = basis(y, spec)?;
    if b.h.len() != offset.len() {
        return Err(Error::Dimension(format!(
            "basis dimension {} vs offset dimension {}",
            b.h.len(),
            offset.len()
        )));
    }
    Ok(BasisVector {
        h: b.h - offset,
        centered: true,
    })
}

/// ALR transform with the last category as reference.
pub fn alr(z: &Composition) -> LatentVector {
    let p = z.len();
    let last = z.probs[p - 1].ln();
    LatentVector(DVector::from_iterator(
        p - 1,
        z.probs[..p - 1].iter().map(|v| v.ln() - last),
    ))
}

/// ALR transform of an unchecked probability slice; names the first
/// non-positive entry on failure.
pub fn alr_checked(probs: &[f64]) -> Result<LatentVector> {
    Ok(alr(&Composition::new(probs.to_vec())?))
}

/// Inverse ALR: softmax over `(w, 0)`, with max subtraction. Entries that
/// would underflow to zero are floored at the smallest positive normal.
pub fn alr_inv(w: &LatentVector) -> Composition {
    Composition {
        probs: softmax_with_zero(&w.0),
    }
}

fn softmax_with_zero(w: &DVector<f64>) -> Vec<f64> {
    let max = w.iter().cloned().fold(0.0_f64, f64::max);
    let mut e: Vec<f64> = w.iter().map(|v| (v - max).exp()).collect();
    e.push((-max).exp());
    let s: f64 = e.iter().sum();
    let mut probs: Vec<f64> = e.into_iter().map(|v| (v / s).max(f64::MIN_POSITIVE)).collect();
    // Flooring can only add ~1e-308 per entry; renormalizing keeps the sum exact.
    let s: f64 = probs.iter().sum();
    if s != 1.0 {
        probs.iter_mut().for_each(|v| *v /= s);
    }
    probs
}

/// Multinomial-logit link: softmax of `a_j + gamma_j' beta h` with the
/// `p`-th linear predictor fixed at zero.
pub fn link_probs(
    intercepts: &DVector<f64>,
    gamma: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    h: &BasisVector,
) -> Result<Composition> {
    if gamma.nrows() != intercepts.len()
        || gamma.ncols() != beta.nrows()
        || beta.ncols() != h.h.len()
    {
        return Err(Error::Dimension(format!(
            "intercepts {}, gamma {}x{}, beta {}x{}, h {}",
            intercepts.len(),
            gamma.nrows(),
            gamma.ncols(),
            beta.nrows(),
            beta.ncols(),
            h.h.len()
        )));
    }
    let eta = intercepts + gamma * (beta * &h.h);
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite linear predictor".into()));
    }
    Ok(Composition {
        probs: softmax_with_zero(&eta),
    })
}

/// Multinomial log-pmf. Zero counts contribute nothing regardless of `z_j`.
pub fn multinomial_logpmf(x: &CountVector, z: &Composition) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::Dimension(format!(
            "counts have {} taxa, composition has {}",
            x.len(),
            z.len()
        )));
    }
    let m = x.library_size as f64;
    let mut lp = ln_gamma(m + 1.0);
    for (&c, &p) in x.counts.iter().zip(&z.probs) {
        lp -= ln_gamma(c as f64 + 1.0);
        if c > 0 {
            lp += c as f64 * p.ln();
        }
    }
    Ok(lp)
}

/// The multinomial log-likelihood as a function of the latent ALR vector,
/// with the multinomial coefficient dropped:
/// `sum_{j<p} x_j w_j - m log(1 + sum_{j<p} exp(w_j))`.
pub fn count_loglik_latent(x: &CountVector, w: &DVector<f64>) -> f64 {
    let p = x.len();
    let dot: f64 = x.counts[..p - 1]
        .iter()
        .zip(w.iter())
        .map(|(&c, &wj)| c as f64 * wj)
        .sum();
    dot - x.library_size as f64 * log1p_sum_exp(w)
}

/// Model parameters `{mu, Gamma, beta, Sigma}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: DVector<f64>,
    /// `(p-1) x d`
    pub gamma: DMatrix<f64>,
    /// `d x r`
    pub beta: DMatrix<f64>,
    /// `(p-1) x (p-1)`, symmetric positive definite.
    pub sigma: DMatrix<f64>,
}

impl ModelParams {
    pub fn new(
        mu: DVector<f64>,
        gamma: DMatrix<f64>,
        beta: DMatrix<f64>,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let theta = Self {
            mu,
            gamma,
            beta,
            sigma,
        };
        theta.validate()?;
        Ok(theta)
    }

    /// Latent dimension `p - 1`.
    pub fn latent_dim(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self) -> usize {
        self.mu.len() + 1
    }

    pub fn d(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn r(&self) -> usize {
        self.beta.ncols()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let k = self.latent_dim();
        let d = self.d();
        if self.gamma.nrows() != k
            || self.beta.nrows() != d
            || self.sigma.nrows() != k
            || self.sigma.ncols() != k
        {
            return Err(Error::Dimension(format!(
                "mu {k}, gamma {}x{}, beta {}x{}, sigma {}x{}",
                self.gamma.nrows(),
                d,
                self.beta.nrows(),
                self.beta.ncols(),
                self.sigma.nrows(),
                self.sigma.ncols()
            )));
        }
        if d < 1 || d > k.min(self.r()) {
            return Err(Error::Config(format!(
                "reduction dimension d = {d} must satisfy 1 <= d <= min(p-1, r) = {}",
                k.min(self.r())
            )));
        }
        Ok(())
    }

    /// `|| Gamma' Sigma^-1 Gamma - I_d ||_F`.
    pub fn constraint_violation(&self) -> Result<f64> {
        let chol = Cholesky::new(linalg::symmetrize(&self.sigma)).ok_or_else(|| {
            Error::NotPositiveDefinite("sigma".into())
        })?;
        let g = self.gamma.transpose() * chol.solve(&self.gamma);
        Ok((g - DMatrix::identity(self.d(), self.d())).norm())
    }

    /// `Gamma' Sigma^-1`, the `d x (p-1)` sufficient reduction.
    pub fn reduction(&self) -> Result<DMatrix<f64>> {
        let chol = Cholesky::new(linalg::symmetrize(&self.sigma)).ok_or_else(|| {
            Error::NotPositiveDefinite("sigma".into())
        })?;
        Ok(chol.solve(&self.gamma).transpose())
    }

    /// Latent mean `mu + Gamma beta h` for a basis vector.
    pub fn latent_mean(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.mu + &self.gamma * (&self.beta * h)
    }

    pub fn validate(&self) -> Result<()> {
        self.check_dimensions()?;
        let asym = (&self.sigma - self.sigma.transpose()).norm();
        if asym > 1e-10 * (1.0 + self.sigma.norm()) {
            return Err(Error::Domain(format!("sigma is not symmetric (asymmetry {asym:e})")));
        }
        let min_eig = linalg::min_eigenvalue(&self.sigma);
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "sigma minimum eigenvalue {min_eig:e}"
            )));
        }
        let viol = self.constraint_violation()?;
        if !(viol <= 1e-8) {
            return Err(Error::Domain(format!(
                "identifiability constraint violated: ||Gamma' Sigma^-1 Gamma - I|| = {viol:e}"
            )));
        }
        let sv = self.beta.clone().singular_values();
        let max = sv.iter().cloned().fold(0.0_f64, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min <= 1e-10 * max {
            return Err(Error::Domain(format!(
                "beta does not have full row rank d = {} (singular values {sv:?})",
                self.d()
            )));
        }
        let all_finite = self.mu.iter().all(|v| v.is_finite())
            && self.gamma.iter().all(|v| v.is_finite())
            && self.beta.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("non-finite parameter entries".into()));
        }
        Ok(())
    }
}

/// `N(mean, Sigma)` density machinery with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct LatentGaussian {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl LatentGaussian {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let k = sigma.nrows();
        let chol = Cholesky::new(linalg::symmetrize(sigma))
            .ok_or_else(|| Error::NotPositiveDefinite("sigma has no Cholesky factor".into()))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(Self { chol, log_norm })
    }

    /// `L^-1 v` for the lower Cholesky factor `L`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Log normalizing constant `-(k/2) log(2 pi) - (1/2) log det Sigma`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, w: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let z = self.whiten(&(w - mean));
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// `log N(w; mu + Gamma beta h, Sigma)`.
pub fn log_density_w_given_y(
    w: &LatentVector,
    h: &BasisVector,
    theta: &ModelParams,
) -> Result<f64> {
    theta.check_dimensions()?;
    if w.len() != theta.latent_dim() || h.h.len() != theta.r() {
        return Err(Error::Dimension(format!(
            "w has {} entries, h has {}; model expects {} and {}",
            w.len(),
            h.h.len(),
            theta.latent_dim(),
            theta.r()
        )));
    }
    let g = LatentGaussian::new(&theta.sigma)?;
    Ok(g.log_density(&w.0, &theta.latent_mean(&h.h)))
}
