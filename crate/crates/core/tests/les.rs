mod common;

use common::ou_problem;
use stoch_les::fbm::GeneratorKind;
use stoch_les::les::{noise_increments, solve_spde, solve_spde_ensemble};

fn final_moments(h: f64, generator: GeneratorKind, members: usize) -> (f64, f64) {
    let mut p = ou_problem(0.5, 1.0, h, 1.0, 0.01, 11);
    p.generator = generator;
    let run = solve_spde_ensemble(&p, members).unwrap();
    let last = run.members[0].n_times() - 1;
    let v: Vec<f64> = run.members.iter().map(|m| m.get(last, 1)).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var)
}

/// The mean solves the noise-free equation. WM paths are not normalized,
/// so the tolerance is four standard errors of the sample mean.
#[test]
fn fractional_ou_mean_is_noise_free() {
    let exact = (-1.0f64).exp();
    for generator in [GeneratorKind::Exact, GeneratorKind::Wm] {
        let members = 4000;
        let (mean, var) = final_moments(0.75, generator, members);
        let tol = 4.0 * (var / members as f64).sqrt();
        assert!(
            (mean - exact).abs() < tol,
            "{generator:?}: mean {mean}, tolerance {tol}"
        );
    }
}

/// With `U_t = −U + σ₀ Ḃ^H`, `Var U_T = σ₀² ∫∫ e^{−(T−s)} e^{−(T−r)} dR_H(s, r)`,
/// which for `H = 0.75` exceeds the Brownian value; the discrete scheme's own
/// variance is `σ₀² gᵀ C g` with `g_k = (1 − dt)^{N−1−k}` and `C` the
/// covariance of the fBM increments.
#[test]
fn fractional_ou_variance_matches_discrete_formula() {
    let (h, dt, n) = (0.75f64, 0.01f64, 100usize);
    let cov = |a: f64, b: f64| 0.5 * (a.powf(2.0 * h) + b.powf(2.0 * h) - (a - b).abs().powf(2.0 * h));
    let inc_cov = |i: usize, j: usize| {
        let (ti, tj) = (i as f64 * dt, j as f64 * dt);
        cov(ti + dt, tj + dt) - cov(ti + dt, tj) - cov(ti, tj + dt) + cov(ti, tj)
    };
    let g: Vec<f64> = (0..n).map(|k| (1.0 - dt).powi((n - 1 - k) as i32)).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += g[i] * g[j] * inc_cov(i, j);
        }
    }
    let expected = 0.25 * quad;
    let (_, var) = final_moments(h, GeneratorKind::Exact, 10_000);
    assert!((var - expected).abs() < 0.05 * expected, "var {var} vs {expected}");
}

#[test]
fn same_seed_same_path() {
    let p = ou_problem(0.5, 1.0, 0.75, 1.0, 0.01, 5);
    assert_eq!(solve_spde(&p).unwrap(), solve_spde(&p).unwrap());
    assert_eq!(noise_increments(&p, 5).unwrap().len(), 100);
    assert_ne!(noise_increments(&p, 5).unwrap(), noise_increments(&p, 6).unwrap());
}
