//! Synthetic data generators, evaluation metrics and experiment drivers.

pub mod bench;
pub mod logistic;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::compositional::{alr_inv, BasisSpec, CountVector, LatentVector};
use crate::error::{Error, Result};
use crate::fitter::Dataset;
use crate::linalg::symmetrize;
use crate::rng::rng_from_seed;

/// Mean function `v_y` of the one-dimensional generator `W = Gamma v_y + xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VFn {
    /// `a y`
    Linear { a: f64 },
    /// `a (y + c |y|)`
    AbsMix { a: f64, c: f64 },
}

impl VFn {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            VFn::Linear { a } => a * y,
            VFn::AbsMix { a, c } => a * (y + c * y.abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LibrarySizeLaw {
    Fixed { m: u64 },
    /// Uniform on `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
}

impl LibrarySizeLaw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            LibrarySizeLaw::Fixed { m } => m,
            LibrarySizeLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LibrarySizeLaw::Fixed { m } if m >= 1 => Ok(()),
            LibrarySizeLaw::Uniform { lo, hi } if lo >= 1 && lo <= hi => Ok(()),
            _ => Err(Error::Config(format!("invalid library size law {self:?}"))),
        }
    }
}

/// Continuous-response generator: `Y ~ N(0, 1)`, `W = Gamma v_Y + xi`,
/// `xi ~ N(0, Sigma)`, `X ~ Multinomial(m, alr_inv(W))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub gamma_true: DVector<f64>,
    pub v_fn: VFn,
    pub sigma_true: DMatrix<f64>,
    pub library_size_law: LibrarySizeLaw,
    pub n_test: usize,
    pub seed: u64,
    /// Basis used when the simulated training set is fitted.
    pub basis: BasisSpec,
}

impl SimSpec {
    /// `Gamma = (1, 1, -1, -1, 0, ..., 0)' / 2`, `v_y = 10 y`, `Sigma = I`,
    /// `m = 1000`, 50 test points, cubic basis. Needs `p >= 5`.
    pub fn standard(n: usize, p: usize, seed: u64) -> Result<Self> {
        if p < 5 {
            return Err(Error::Config(format!("the default generator needs p >= 5, got {p}")));
        }
        let mut gamma = DVector::zeros(p - 1);
        gamma[0] = 0.5;
        gamma[1] = 0.5;
        gamma[2] = -0.5;
        gamma[3] = -0.5;
        Ok(Self {
            n,
            p,
            gamma_true: gamma,
            v_fn: VFn::Linear { a: 10.0 },
            sigma_true: DMatrix::identity(p - 1, p - 1),
            library_size_law: LibrarySizeLaw::Fixed { m: 1000 },
            n_test: 50,
            seed,
            basis: BasisSpec::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n < 2 || self.n_test < 1 {
            return Err(Error::Config(format!(
                "need p >= 2, n >= 2, n_test >= 1 (got p={}, n={}, n_test={})",
                self.p, self.n, self.n_test
            )));
        }
        if self.gamma_true.len() != self.p - 1
            || self.sigma_true.nrows() != self.p - 1
            || self.sigma_true.ncols() != self.p - 1
        {
            return Err(Error::Dimension("gamma_true / sigma_true do not match p - 1".into()));
        }
        self.library_size_law.validate()?;
        let chol = Cholesky::new(symmetrize(&self.sigma_true))
            .ok_or_else(|| Error::NotPositiveDefinite("sigma_true".into()))?;
        let norm = self.gamma_true.dot(&chol.solve(&self.gamma_true));
        if (norm - 1.0).abs() > 1e-8 {
            log::warn!("gamma_true' Sigma^-1 gamma_true = {norm:.6}, not 1; distances are measured against gamma_true as given");
        }
        Ok(())
    }
}

/// Responses with their count vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub responses: Vec<f64>,
    pub counts: Vec<CountVector>,
}

impl Labeled {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn to_dataset(&self, basis: BasisSpec) -> Result<Dataset> {
        Dataset::new(self.responses.clone(), self.counts.clone(), basis)
    }

    pub fn subset(&self, idx: &[usize]) -> Labeled {
        Labeled {
            responses: idx.iter().map(|&i| self.responses[i]).collect(),
            counts: idx.iter().map(|&i| self.counts[i].clone()).collect(),
        }
    }
}

/// Latent draws behind a simulated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRecord {
    pub gamma_true: DVector<f64>,
    pub train_latent: Vec<DVector<f64>>,
    pub train_probs: Vec<Vec<f64>>,
    pub test_latent: Vec<DVector<f64>>,
    pub test_probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub train: Labeled,
    pub test: Labeled,
    pub truth: GeneratorRecord,
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial(m: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut rest = 1.0_f64;
    for (j, &pj) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probs.len() {
            out[j] = remaining;
            break;
        }
        let q = if rest > 0.0 { (pj / rest).clamp(0.0, 1.0) } else { 1.0 };
        let k = Binomial::new(remaining, q).expect("probability in [0, 1]").sample(rng);
        out[j] = k;
        remaining -= k;
        rest -= pj;
    }
    out
}

fn draw_counts(w: &DVector<f64>, law: &LibrarySizeLaw, rng: &mut ChaCha8Rng) -> Result<(CountVector, Vec<f64>)> {
    let z = alr_inv(&LatentVector::new(w.clone())?);
    let probs = z.probs().to_vec();
    let m = law.draw(rng);
    let counts = sample_multinomial(m, &probs, rng);
    Ok((CountVector::new(counts)?, probs))
}

pub fn generate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let l = Cholesky::new(symmetrize(&spec.sigma_true))
        .ok_or_else(|| Error::NotPositiveDefinite("sigma_true".into()))?
        .l();
    let k = spec.p - 1;
    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Result<(Labeled, Vec<DVector<f64>>, Vec<Vec<f64>>)> {
        let mut responses = Vec::with_capacity(count);
        let mut counts = Vec::with_capacity(count);
        let mut latent = Vec::with_capacity(count);
        let mut probs = Vec::with_capacity(count);
        for _ in 0..count {
            let y: f64 = rng.sample(StandardNormal);
            let xi = &l * DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = &spec.gamma_true * spec.v_fn.eval(y) + xi;
            let (x, z) = draw_counts(&w, &spec.library_size_law, rng)?;
            responses.push(y);
            counts.push(x);
            latent.push(w);
            probs.push(z);
        }
        Ok((Labeled { responses, counts }, latent, probs))
    };
    let (train, train_latent, train_probs) = draw(spec.n, &mut rng)?;
    let (test, test_latent, test_probs) = draw(spec.n_test, &mut rng)?;
    Ok(Simulated {
        train,
        test,
        truth: GeneratorRecord {
            gamma_true: spec.gamma_true.clone(),
            train_latent,
            train_probs,
            test_latent,
            test_probs,
        },
    })
}

/// Binary-response generator. Class-1 samples are shifted along `gamma`:
/// `W = gamma (shift * class + quadratic (t^2 - 1)) + xi` with a within-class
/// trait `t ~ N(0, 1)`. Class-1 samples come first.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySpec {
    pub n_class1: usize,
    pub n_class0: usize,
    pub p: usize,
    pub gamma_true: DVector<f64>,
    pub shift: f64,
    pub quadratic: f64,
    pub sigma_true: DMatrix<f64>,
    pub library_size_law: LibrarySizeLaw,
    pub seed: u64,
}

impl BinarySpec {
    /// 22 vs 11 samples over 4 taxa, signal on the first two log-ratios.
    pub fn default_with_seed(seed: u64) -> Self {
        let s = 0.5f64.sqrt();
        Self {
            n_class1: 22,
            n_class0: 11,
            p: 4,
            gamma_true: DVector::from_vec(vec![s, -s, 0.0]),
            shift: 2.5,
            quadratic: 1.0,
            sigma_true: DMatrix::identity(3, 3),
            library_size_law: LibrarySizeLaw::Fixed { m: 1000 },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.gamma_true.len() != self.p - 1 || self.sigma_true.nrows() != self.p - 1 {
            return Err(Error::Dimension("binary spec dimensions do not match p - 1".into()));
        }
        if self.n_class0 < 3 || self.n_class1 < 3 {
            return Err(Error::Config("each class needs at least 3 observations".into()));
        }
        if !self.shift.is_finite() || !self.quadratic.is_finite() {
            return Err(Error::Config("binary signal coefficients must be finite".into()));
        }
        self.library_size_law.validate()
    }
}

pub fn generate_binary(spec: &BinarySpec) -> Result<Labeled> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let l = Cholesky::new(symmetrize(&spec.sigma_true))
        .ok_or_else(|| Error::NotPositiveDefinite("sigma_true".into()))?
        .l();
    let k = spec.p - 1;
    let n = spec.n_class1 + spec.n_class0;
    let mut responses = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for i in 0..n {
        let class = if i < spec.n_class1 { 1.0 } else { 0.0 };
        let t: f64 = rng.sample(StandardNormal);
        let v = spec.shift * class + spec.quadratic * (t * t - 1.0);
        let xi = &l * DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (x, _) = draw_counts(&(&spec.gamma_true * v + xi), &spec.library_size_law, &mut rng)?;
        responses.push(class);
        counts.push(x);
    }
    Ok(Labeled { responses, counts })
}

/// Distance between estimated and true `Gamma`, up to sign (`d = 1`) or a
/// right orthogonal rotation (`d > 1`, orthogonal Procrustes).
pub fn gamma_distance(gamma_hat: &DMatrix<f64>, gamma_true: &DMatrix<f64>) -> Result<f64> {
    if gamma_hat.shape() != gamma_true.shape() {
        return Err(Error::Dimension(format!(
            "gamma_hat {:?} vs gamma_true {:?}",
            gamma_hat.shape(),
            gamma_true.shape()
        )));
    }
    if gamma_hat.ncols() == 1 {
        let plus = (gamma_hat - gamma_true).norm();
        let minus = (gamma_hat + gamma_true).norm();
        return Ok(plus.min(minus));
    }
    let svd = (gamma_hat.transpose() * gamma_true).svd(true, true);
    let rot = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    Ok((gamma_hat * rot - gamma_true).norm())
}

/// Mean squared prediction error.
pub fn perr(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(truths)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / predictions.len() as f64)
}
