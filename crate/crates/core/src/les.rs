//! Stochastic LES model on the coarse grid:
//!
//! ```text
//! U_t = U_xx + U − U³ + ∫₀ᵗ K(t−s) U ds + f(U) + σ(x) dB^H/dt
//! ```
//!
//! Each step is the deterministic IMEX step with the cubic drift `f(U)`
//! added to the explicit terms, followed by the additive increment
//! `σ(x) (B^H(t_{n+1}) − B^H(t_n))`. One scalar fBM path drives all grid
//! points of a realization; realizations use independent paths.

use crate::ensemble::{run_members, EnsembleRun};
use crate::error::{Error, Result};
use crate::fbm::{generate_wm, uniform_times, ExactFbm, GeneratorKind, WmConfig};
use crate::grid::FieldSeries;
use crate::memory_pde::{integrate, PdeProblem, StepExtras};
use crate::rng;
use crate::sgs::SgsClosure;

#[derive(Debug, Clone)]
pub struct SpdeProblem {
    pub base: PdeProblem,
    pub closure: SgsClosure,
    pub noise_seed: u64,
    pub generator: GeneratorKind,
}

impl SpdeProblem {
    pub fn new(base: PdeProblem, closure: SgsClosure, noise_seed: u64, generator: GeneratorKind) -> Result<Self> {
        let p = Self {
            base,
            closure,
            noise_seed,
            generator,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.closure.validate()?;
        if self.closure.sigma_profile.len() != self.base.grid.n_points() {
            return Err(Error::invalid(format!(
                "closure intensity has {} points, grid has {}",
                self.closure.sigma_profile.len(),
                self.base.grid.n_points()
            )));
        }
        Ok(())
    }

    fn noise_times(&self) -> Vec<f64> {
        uniform_times(self.base.n_steps(), self.base.n_steps() as f64 * self.base.dt)
    }
}

/// fBM increments on the solver's time grid, one path per seed.
enum NoiseSource {
    Exact(ExactFbm),
    Wm(Vec<f64>),
    Silent(usize),
}

impl NoiseSource {
    fn new(problem: &SpdeProblem) -> Result<Self> {
        let n = problem.base.n_steps();
        if problem.closure.sigma_profile.iter().all(|&s| s == 0.0) {
            return Ok(Self::Silent(n));
        }
        let times = problem.noise_times();
        Ok(match problem.generator {
            GeneratorKind::Exact => Self::Exact(ExactFbm::new(&times, problem.closure.hurst)?),
            GeneratorKind::Wm => Self::Wm(times),
        })
    }

    fn increments(&self, problem: &SpdeProblem, seed: u64) -> Result<Vec<f64>> {
        let values = match self {
            Self::Silent(n) => return Ok(vec![0.0; *n]),
            Self::Exact(gen) => gen.sample_values(seed),
            Self::Wm(times) => generate_wm(times, problem.closure.hurst, &WmConfig::with_seed(seed))?.values,
        };
        Ok(values.windows(2).map(|w| w[1] - w[0]).collect())
    }
}

/// Solve with caller-supplied noise increments (`len == n_steps`).
pub fn solve_spde_with_increments(problem: &SpdeProblem, increments: &[f64], seed: Option<u64>) -> Result<FieldSeries> {
    problem.validate()?;
    integrate(
        &problem.base,
        &StepExtras {
            drift: Some(problem.closure.cubic_coeffs),
            noise: Some((&problem.closure.sigma_profile, increments)),
            seed,
        },
    )
}

/// One realization driven by the fBM path with seed `noise_seed`.
pub fn solve_spde(problem: &SpdeProblem) -> Result<FieldSeries> {
    problem.validate()?;
    let source = NoiseSource::new(problem)?;
    let incs = source.increments(problem, problem.noise_seed)?;
    solve_spde_with_increments(problem, &incs, Some(problem.noise_seed))
}

/// Member `k` uses noise seed `noise_seed ^ k`.
pub fn solve_spde_ensemble(problem: &SpdeProblem, n_members: usize) -> Result<EnsembleRun> {
    if n_members == 0 {
        return Err(Error::invalid("SPDE ensemble needs at least one member"));
    }
    problem.validate()?;
    let source = NoiseSource::new(problem)?;
    let seeds: Vec<u64> = (0..n_members)
        .map(|k| rng::member_seed(problem.noise_seed, k))
        .collect();
    let members = run_members(n_members, |k| {
        let incs = source.increments(problem, seeds[k])?;
        solve_spde_with_increments(problem, &incs, Some(seeds[k]))
    })?;
    Ok(EnsembleRun { members, seeds })
}

/// Noise increments for `seed` on the problem's time grid.
pub fn noise_increments(problem: &SpdeProblem, seed: u64) -> Result<Vec<f64>> {
    NoiseSource::new(problem)?.increments(problem, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::HurstParam;
    use crate::grid::{BoundaryCondition, Grid1D};
    use crate::memory_pde::{solve, ConstantForcing, MemoryKernelSpec};
    use std::sync::Arc;

    fn standard_problem() -> PdeProblem {
        PdeProblem::standard(Grid1D::new(101).unwrap(), 0.5, 0.01).unwrap()
    }

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn zero_closure_reduces_to_deterministic() {
        let base = standard_problem();
        let closure = SgsClosure::zero(101, h(0.75), 0.5);
        let p = SpdeProblem::new(base.clone(), closure, 3, GeneratorKind::Exact).unwrap();
        assert_eq!(solve_spde(&p).unwrap(), solve(&base).unwrap());
    }

    #[test]
    fn constant_drift_matches_forced_solve() {
        let base = standard_problem();
        let mut closure = SgsClosure::zero(101, h(0.75), 0.5);
        closure.cubic_coeffs[0] = 0.25;
        let p = SpdeProblem::new(base.clone(), closure, 3, GeneratorKind::Exact).unwrap();
        let forced = base.with_forcing(Arc::new(ConstantForcing(0.25))).unwrap();
        let a = solve_spde(&p).unwrap();
        let b = solve(&forced).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let closure = SgsClosure::zero(51, h(0.75), 0.5);
        assert!(SpdeProblem::new(standard_problem(), closure, 0, GeneratorKind::Exact).is_err());
    }

    fn noisy_problem(gen: GeneratorKind) -> SpdeProblem {
        let base = standard_problem();
        let mut closure = SgsClosure::zero(101, h(0.75), 0.5);
        closure.sigma_profile = base.grid.sample(|x| 0.01 * (1.0 - x * x));
        SpdeProblem::new(base, closure, 40, gen).unwrap()
    }

    #[test]
    fn ensemble_contracts() {
        for gen in [GeneratorKind::Exact, GeneratorKind::Wm] {
            let p = noisy_problem(gen);
            let one = solve_spde_ensemble(&p, 1).unwrap();
            assert_eq!(one.members[0], solve_spde(&p).unwrap());
            let a = solve_spde_ensemble(&p, 4).unwrap();
            let b = solve_spde_ensemble(&p, 4).unwrap();
            assert_eq!(a, b);
            for row in a.members.iter().flat_map(|m| m.rows()) {
                assert_eq!(row[0], -1.0);
                assert_eq!(row[100], 1.0);
            }
            assert_ne!(a.members[0], a.members[1]);
        }
        let mut silent = noisy_problem(GeneratorKind::Exact);
        silent.closure.sigma_profile.iter_mut().for_each(|s| *s = 0.0);
        let e = solve_spde_ensemble(&silent, 3).unwrap();
        assert_eq!(e.members[0], e.members[2]);
        assert!(solve_spde_ensemble(&silent, 0).is_err());
    }

    #[test]
    fn distinct_members_get_distinct_paths() {
        use sha2::{Digest, Sha256};
        let p = noisy_problem(GeneratorKind::Exact);
        let hashes: Vec<Vec<u8>> = (0..16u64)
            .map(|k| {
                let incs = noise_increments(&p, rng::member_seed(p.noise_seed, k as usize)).unwrap();
                let mut hasher = Sha256::new();
                for v in incs {
                    hasher.update(v.to_le_bytes());
                }
                hasher.finalize().to_vec()
            })
            .collect();
        for i in 0..hashes.len() {
            for j in i + 1..hashes.len() {
                assert_ne!(hashes[i], hashes[j]);
            }
        }
    }

    /// `U_t = −U + σ₀ dB/dt` on a 3-point grid: diffusion and memory switched
    /// off, the cubic cancelled and the linear term flipped by the closure.
    pub(crate) fn ou_problem(sigma0: f64, u0: f64, hurst: f64, t_end: f64, dt: f64) -> SpdeProblem {
        use crate::memory_pde::TermCoefficients;
        let g = Grid1D::new(3).unwrap();
        let base = PdeProblem::new(
            g,
            BoundaryCondition::new(0.0, 0.0).unwrap(),
            MemoryKernelSpec::new(2.0).unwrap(),
            vec![0.0, u0, 0.0],
            t_end,
            dt,
        )
        .unwrap()
        .with_terms(TermCoefficients {
            diffusion: 0.0,
            reaction: 1.0,
            memory: 0.0,
        })
        .unwrap();
        let closure = SgsClosure {
            cubic_coeffs: [0.0, -2.0, 0.0, 1.0],
            sigma_profile: vec![0.0, sigma0, 0.0],
            hurst: h(hurst),
            horizon: t_end,
        };
        SpdeProblem::new(base, closure, 0, GeneratorKind::Exact).unwrap()
    }

    #[test]
    fn noise_enters_linearly_for_small_intensity() {
        let small = ou_problem(1e-3, 1.0, 0.5, 1.0, 0.01);
        let incs = noise_increments(&small, 9).unwrap();
        let mut det = small.clone();
        det.closure.sigma_profile = vec![0.0; 3];
        let mut double = small.clone();
        double.closure.sigma_profile = vec![0.0, 2e-3, 0.0];
        let u_det = solve_spde_with_increments(&det, &incs, None).unwrap();
        let u1 = solve_spde_with_increments(&small, &incs, None).unwrap();
        let u2 = solve_spde_with_increments(&double, &incs, None).unwrap();
        assert_ne!(u1, u2);
        let d1: Vec<f64> = u1.data().iter().zip(u_det.data()).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = u2.data().iter().zip(u_det.data()).map(|(a, b)| a - b).collect();
        let num: f64 = d2
            .iter()
            .zip(&d1)
            .map(|(b, a)| (b - 2.0 * a).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = d1.iter().map(|a| (2.0 * a).powi(2)).sum::<f64>().sqrt();
        assert!(num < 0.1 * den, "relative discrepancy {}", num / den);
    }
}
