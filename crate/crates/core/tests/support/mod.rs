//! Independent oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use pamir_core::rng::rng_from_seed;
use pamir_core::sim::sample_multinomial;
use pamir_core::{alr_inv, BasisSpec, CountVector, Dataset, LatentVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub struct Problem {
    pub data: Dataset,
    pub latent: Vec<DVector<f64>>,
}

/// Latent vectors from a rank-one model with a cubic mean, plus counts drawn
/// from them so a `Dataset` can be built.
pub fn problem(n: usize, p: usize, seed: u64) -> Problem {
    let mut rng = rng_from_seed(seed);
    let k = p - 1;
    let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.4);
    let sigma = &a * a.transpose() + DMatrix::identity(k, k) * 0.5;
    let l = sigma.clone().cholesky().unwrap().l();
    let gamma = DVector::from_fn(k, |i, _| if i % 2 == 0 { 0.6 } else { -0.4 });
    let mut responses = Vec::new();
    let mut latent = Vec::new();
    let mut counts = Vec::new();
    for _ in 0..n {
        let y: f64 = rng.sample(StandardNormal);
        let xi = &l * DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &gamma * (2.0 * y + 0.5 * y * y * y) + xi;
        let z = alr_inv(&LatentVector::new(w.clone()).unwrap());
        counts.push(CountVector::new(sample_multinomial(500, z.probs(), &mut rng)).unwrap());
        responses.push(y);
        latent.push(w);
    }
    Problem {
        data: Dataset::new(responses, counts, BasisSpec::Polynomial { degree: 3 }).unwrap(),
        latent,
    }
}

pub fn sym_pow(m: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.powf(power)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

pub struct Mle {
    pub coef: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

/// Reduced-rank regression MLE of centered W on centered H with rank d.
pub fn reduced_rank_mle(latent: &[DVector<f64>], data: &Dataset, d: usize) -> Mle {
    let n = latent.len();
    let k = latent[0].len();
    let mean = latent.iter().fold(DVector::zeros(k), |acc, w| acc + w) / n as f64;
    let wc = DMatrix::from_fn(k, n, |i, j| latent[j][i] - mean[i]);
    let h = data.h_matrix().clone();
    let gram_inv = (&h * h.transpose()).try_inverse().unwrap();
    let b_ols = &wc * h.transpose() * gram_inv;
    let fitted = &b_ols * &h;
    let s_hat = &wc * wc.transpose() / n as f64;
    let explained = &fitted * fitted.transpose() / n as f64;
    let sigma_ols = &s_hat - &explained;

    let root = sym_pow(&sigma_ols, 0.5);
    let inv_root = sym_pow(&sigma_ols, -0.5);
    let e = SymmetricEigen::new(&inv_root * &explained * &inv_root);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let v = DMatrix::from_fn(k, d, |i, j| e.eigenvectors[(i, order[j])]);
    let proj = &v * v.transpose();
    let coef = &root * &proj * &inv_root * &b_ols;
    let rest = DMatrix::identity(k, k) - &proj;
    let sigma = &sigma_ols + &root * &rest * &inv_root * &explained * &inv_root * &rest * &root;

    // Gamma spans the coefficient columns and satisfies Gamma' Sigma^-1 Gamma = I.
    let s_root = sym_pow(&sigma, 0.5);
    let s_inv_root = sym_pow(&sigma, -0.5);
    let e2 = SymmetricEigen::new(&s_inv_root * &coef * h.clone() * h.transpose() * coef.transpose() * &s_inv_root);
    let top = (0..k).max_by(|&a, &b| e2.eigenvalues[a].total_cmp(&e2.eigenvalues[b])).unwrap();
    let gamma = &s_root * e2.eigenvectors.columns(top, d);
    Mle { coef, sigma, gamma }
}

/// Unnormalized log target at p = 2: binomial likelihood times a normal prior.
pub fn binomial_normal_log_target(w: f64, k: f64, m: f64, mean: f64, var: f64) -> f64 {
    let softplus = if w > 0.0 { w + (-w).exp().ln_1p() } else { w.exp().ln_1p() };
    k * w - m * softplus - (w - mean).powi(2) / (2.0 * var)
}

/// CDF on a uniform grid by cumulative Simpson's rule over pairs of cells.
pub fn quadrature_cdf(lo: f64, hi: f64, cells: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / cells as f64;
    let xs: Vec<f64> = (0..=cells).map(|i| lo + i as f64 * h).collect();
    let fx: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut cdf = vec![0.0; cells + 1];
    for i in (2..=cells).step_by(2) {
        cdf[i] = cdf[i - 2] + h / 3.0 * (fx[i - 2] + 4.0 * fx[i - 1] + fx[i]);
        // Midpoint of the pair by the trapezoid rule on the first cell.
        cdf[i - 1] = cdf[i - 2] + h / 2.0 * (fx[i - 2] + fx[i - 1]);
    }
    let total = cdf[cells];
    (xs, cdf.into_iter().map(|c| c / total).collect())
}

pub fn ks_distance(samples: &mut [f64], xs: &[f64], cdf: &[f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let interp = |w: f64| {
        let h = xs[1] - xs[0];
        let t = ((w - xs[0]) / h).clamp(0.0, (xs.len() - 1) as f64 - 1e-9);
        let i = t.floor() as usize;
        let frac = t - i as f64;
        cdf[i] + frac * (cdf[i + 1] - cdf[i])
    };
    samples
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let f = interp(w);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}


pub fn latent_mean(latent: &[DVector<f64>]) -> DVector<f64> {
    let k = latent[0].len();
    latent.iter().fold(DVector::zeros(k), |acc, w| acc + w) / latent.len() as f64
}
