#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use stoch_les::fbm::{uniform_times, ExactFbm, GeneratorKind, HurstParam};
use stoch_les::grid::{BoundaryCondition, FieldSeries, Grid1D};
use stoch_les::les::SpdeProblem;
use stoch_les::memory_pde::{Forcing, MemoryKernelSpec, PdeProblem, TermCoefficients};
use stoch_les::sgs::{SgsClosure, SgsField};

/// Manufactured solution `u*(x,t) = (1 − t) x + γ sin(πx)` for the β = 2
/// memory equation. `u*` is linear in `t` and `u*_xx` does not depend on
/// `t`, so the IMEX time stepping is exact and only the spatial and
/// quadrature errors remain.
pub struct Mms {
    pub gamma: f64,
}

impl Mms {
    pub fn exact(&self, x: f64, t: f64) -> f64 {
        (1.0 - t) * x + self.gamma * (PI * x).sin()
    }

    /// `∫₀ᵗ u*(x,s) / (1 + (t−s)²) ds` in closed form.
    pub fn memory(&self, x: f64, t: f64) -> f64 {
        let a = x + self.gamma * (PI * x).sin();
        let b = -x;
        a * t.atan() + b * (t * t.atan() - 0.5 * (1.0 + t * t).ln())
    }
}

impl Forcing for Mms {
    fn source(&self, x: f64, t: f64) -> f64 {
        let u = self.exact(x, t);
        let u_t = -x;
        let u_xx = -self.gamma * PI * PI * (PI * x).sin();
        u_t - u_xx - (u - u * u * u) - self.memory(x, t)
    }

    fn boundary(&self, t: f64) -> Option<BoundaryCondition> {
        Some(BoundaryCondition {
            left: -(1.0 - t),
            right: 1.0 - t,
        })
    }
}

pub fn mms_problem(n_points: usize, dt: f64, t_end: f64, gamma: f64) -> PdeProblem {
    let g = Grid1D::new(n_points).unwrap();
    let mms = Mms { gamma };
    let u0 = g.sample(|x| mms.exact(x, 0.0));
    PdeProblem::new(
        g,
        BoundaryCondition::new(-1.0, 1.0).unwrap(),
        MemoryKernelSpec::new(2.0).unwrap(),
        u0,
        t_end,
        dt,
    )
    .unwrap()
    .with_forcing(Arc::new(mms))
    .unwrap()
}

pub fn mms_exact_field(problem: &PdeProblem, gamma: f64) -> FieldSeries {
    let mms = Mms { gamma };
    FieldSeries::from_fn(problem.grid, problem.dt, problem.n_steps() + 1, |x, t| mms.exact(x, t)).unwrap()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    stoch_les::fbm::ls_slope(&lx, &ly)
}

/// Node-wise derivative of a path whose trapezoid integral telescopes to
/// `b[n] − b[0]` exactly.
pub fn node_derivative(b: &[f64], dt: f64) -> Vec<f64> {
    let n = b.len() - 1;
    (0..=n)
        .map(|i| match i {
            0 => (b[1] - b[0]) / dt,
            i if i == n => (b[n] - b[n - 1]) / dt,
            i => (b[i + 1] - b[i - 1]) / (2.0 * dt),
        })
        .collect()
}

/// Residual ensemble `R_k(x,t) = f(x) + c(x) Ḃ_k(t)` driven by exact fBM
/// paths, so that `∫₀ᵀ (R_k − f) dt = c(x) B_k(T)`.
pub fn synthetic_sgs(
    g: Grid1D,
    n_steps: usize,
    t_end: f64,
    hurst: f64,
    members: usize,
    mean: impl Fn(f64) -> f64,
    intensity: impl Fn(f64) -> f64,
) -> Vec<SgsField> {
    let dt = t_end / n_steps as f64;
    let gen = ExactFbm::new(&uniform_times(n_steps, t_end), HurstParam::new(hurst).unwrap()).unwrap();
    let f = g.sample(&mean);
    let c = g.sample(&intensity);
    (0..members)
        .map(|k| {
            let db = node_derivative(&gen.sample_values(1000 + k as u64), dt);
            let mut data = Vec::with_capacity((n_steps + 1) * g.n_points());
            for d in &db {
                data.extend(f.iter().zip(&c).map(|(f, c)| f + c * d));
            }
            SgsField(FieldSeries::new(g, dt, n_steps + 1, data).unwrap())
        })
        .collect()
}

/// Model-error ensemble `F_k = f + s ũ Ḃ_k` with Brownian `B_k` and a fixed
/// positive `ũ(x)`, returned with the matching `ũ` members.
pub fn synthetic_model_error(
    g: Grid1D,
    n_steps: usize,
    members: usize,
    s: f64,
) -> (Vec<FieldSeries>, Vec<FieldSeries>) {
    let dt = 1.0 / n_steps as f64;
    let gen = ExactFbm::new(&uniform_times(n_steps, 1.0), HurstParam::new(0.5).unwrap()).unwrap();
    let u_tilde = FieldSeries::from_fn(g, dt, n_steps + 1, |x, _| 1.0 + 0.5 * (PI * x).cos()).unwrap();
    let base = g.sample(|x| x * x - 0.3);
    let ut = g.sample(|x| 1.0 + 0.5 * (PI * x).cos());
    let f = (0..members)
        .map(|k| {
            let db = node_derivative(&gen.sample_values(5000 + k as u64), dt);
            let mut data = Vec::with_capacity((n_steps + 1) * g.n_points());
            for d in &db {
                data.extend(base.iter().zip(&ut).map(|(f, u)| f + s * u * d));
            }
            FieldSeries::new(g, dt, n_steps + 1, data).unwrap()
        })
        .collect();
    (f, vec![u_tilde; members])
}

/// `U_t = −U + σ₀ dB^H/dt` at the single interior point of a 3-point grid:
/// diffusion and memory switched off, `u − u³` turned into `−u` by the
/// closure drift `−2u + u³`.
pub fn ou_problem(sigma0: f64, u0: f64, hurst: f64, t_end: f64, dt: f64, seed: u64) -> SpdeProblem {
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
        hurst: HurstParam::new(hurst).unwrap(),
        horizon: t_end,
    };
    SpdeProblem::new(base, closure, seed, GeneratorKind::Exact).unwrap()
}

/// Smooth space-time field with a wide range of values, for fitting tests.
pub fn varied_field(g: Grid1D, dt: f64, n_times: usize) -> FieldSeries {
    FieldSeries::from_fn(g, dt, n_times, |x, t| 1.2 * (1.3 * x + 0.4 * t).sin() + 0.3 * t).unwrap()
}
