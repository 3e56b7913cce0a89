//! With the latent vectors observed exactly, one EM pass must land on the
//! closed-form reduced-rank Gaussian MLE.

mod support;

use nalgebra::DMatrix;
use pamir_core::fitter::{fit_with, ObservedLatent};
use pamir_core::FitConfig;
use support::{latent_mean, problem, reduced_rank_mle};

#[test]
fn one_pass_matches_reduced_rank_mle() {
    for (n, p, seed) in [(50usize, 3usize, 1u64), (50, 5, 2), (50, 3, 3), (50, 5, 4), (200, 7, 5)] {
        let prob = problem(n, p, seed);
        let cfg = FitConfig {
            d: 1,
            max_em_iters: 1,
            inner_max_iters: 100_000,
            inner_tol: 1e-15,
            ..FitConfig::default()
        };
        let result = fit_with(&prob.data, &cfg, &mut ObservedLatent(prob.latent.clone())).unwrap();
        let oracle = reduced_rank_mle(&prob.latent, &prob.data, 1);
        let theta = &result.theta;
        let coef = &theta.gamma * &theta.beta;
        assert!((&coef - &oracle.coef).amax() < 1e-8, "coef n={n} p={p}: {}", (&coef - &oracle.coef).amax());
        assert!((&theta.sigma - &oracle.sigma).amax() < 1e-8, "sigma n={n} p={p}");
        let sign = if theta.gamma.dot(&oracle.gamma) < 0.0 { -1.0 } else { 1.0 };
        assert!((&theta.gamma * sign - &oracle.gamma).amax() < 1e-8, "gamma n={n} p={p}");
        assert!((&theta.mu - latent_mean(&prob.latent)).amax() < 1e-12);
        assert!(theta.constraint_violation().unwrap() < 1e-8);
    }
}

#[test]
fn oracle_is_full_rank_ols_when_d_is_maximal() {
    // With d = min(p - 1, r) the rank restriction is vacuous.
    let prob = problem(120, 4, 9);
    let oracle = reduced_rank_mle(&prob.latent, &prob.data, 3);
    let n = prob.latent.len();
    let mean = latent_mean(&prob.latent);
    let wc = DMatrix::from_fn(3, n, |i, j| prob.latent[j][i] - mean[i]);
    let h = prob.data.h_matrix();
    let b_ols = &wc * h.transpose() * (h * h.transpose()).try_inverse().unwrap();
    assert!((&oracle.coef - &b_ols).amax() < 1e-9);
}
