//! Method-of-lines solver for
//!
//! ```text
//! u_t = u_xx + u − u³ + ∫₀ᵗ K(t−s) u(x,s) ds + forcing,   K(τ) = 1 / (1 + τ^β)
//! ```
//!
//! on `[-1, 1]` with Dirichlet data. Space uses second-order central
//! differences. Each step is IMEX Euler: diffusion is implicit (one
//! tridiagonal solve), reaction, memory and forcing are explicit. The memory
//! integral is a full-history trapezoid sum over the stored solution.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_members, EnsembleRun};
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, FieldSeries, Grid1D};
use crate::rng;

/// Polynomially decaying memory kernel `K(τ) = 1 / (1 + τ^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernelSpec {
    pub beta: f64,
}

impl MemoryKernelSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!(
                "kernel exponent beta must be positive, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn eval(&self, tau: f64) -> f64 {
        1.0 / (1.0 + tau.abs().powf(self.beta))
    }
}

/// Multipliers on the three operator terms. The physical equation has all
/// three equal to one; verification problems switch terms off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermCoefficients {
    pub diffusion: f64,
    pub reaction: f64,
    pub memory: f64,
}

impl Default for TermCoefficients {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            reaction: 1.0,
            memory: 1.0,
        }
    }
}

/// External source term, used for manufactured-solution problems.
pub trait Forcing: Send + Sync {
    fn source(&self, x: f64, t: f64) -> f64;

    /// Time-dependent Dirichlet data overriding the problem's constant values.
    fn boundary(&self, _t: f64) -> Option<BoundaryCondition> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantForcing(pub f64);

impl Forcing for ConstantForcing {
    fn source(&self, _x: f64, _t: f64) -> f64 {
        self.0
    }
}

/// `u₀(x) = 0.53 x − 0.47 sin(1.5 π x)`, which meets `u(±1) = ±1`.
pub fn standard_initial_profile(grid: &Grid1D) -> Vec<f64> {
    let mut u = grid.sample(|x| 0.53 * x - 0.47 * (1.5 * PI * x).sin());
    let n = u.len();
    u[0] = -1.0;
    u[n - 1] = 1.0;
    u
}

#[derive(Clone)]
pub struct PdeProblem {
    pub grid: Grid1D,
    pub bc: BoundaryCondition,
    pub kernel: MemoryKernelSpec,
    pub initial_profile: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub forcing: Option<Arc<dyn Forcing>>,
    pub terms: TermCoefficients,
    /// Drop history terms whose kernel weight falls below this value.
    pub memory_cutoff: Option<f64>,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("n_points", &self.grid.n_points())
            .field("bc", &self.bc)
            .field("kernel", &self.kernel)
            .field("t_end", &self.t_end)
            .field("dt", &self.dt)
            .field("forced", &self.forcing.is_some())
            .field("terms", &self.terms)
            .field("memory_cutoff", &self.memory_cutoff)
            .finish()
    }
}

const STEP_COUNT_TOL: f64 = 1e-9;

impl PdeProblem {
    pub fn new(
        grid: Grid1D,
        bc: BoundaryCondition,
        kernel: MemoryKernelSpec,
        initial_profile: Vec<f64>,
        t_end: f64,
        dt: f64,
    ) -> Result<Self> {
        let p = Self {
            grid,
            bc,
            kernel,
            initial_profile,
            t_end,
            dt,
            forcing: None,
            terms: TermCoefficients::default(),
            memory_cutoff: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// The reference configuration: `u₀ = 0.53x − 0.47 sin(1.5πx)`, `a = −1`,
    /// `b = 1`, `β = 2`.
    pub fn standard(grid: Grid1D, t_end: f64, dt: f64) -> Result<Self> {
        Self::new(
            grid,
            BoundaryCondition::new(-1.0, 1.0)?,
            MemoryKernelSpec::new(2.0)?,
            standard_initial_profile(&grid),
            t_end,
            dt,
        )
    }

    pub fn with_forcing(mut self, forcing: Arc<dyn Forcing>) -> Result<Self> {
        self.forcing = Some(forcing);
        self.validate()?;
        Ok(self)
    }

    pub fn with_terms(mut self, terms: TermCoefficients) -> Result<Self> {
        self.terms = terms;
        self.validate()?;
        Ok(self)
    }

    pub fn boundary_at(&self, t: f64) -> BoundaryCondition {
        self.forcing.as_ref().and_then(|f| f.boundary(t)).unwrap_or(self.bc)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_points();
        if self.initial_profile.len() != n {
            return Err(Error::invalid(format!(
                "initial profile has {} points, grid has {n}",
                self.initial_profile.len()
            )));
        }
        if self.initial_profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial profile has non-finite values"));
        }
        let bc0 = self.boundary_at(0.0);
        if (self.initial_profile[0] - bc0.left).abs() > 1e-12 || (self.initial_profile[n - 1] - bc0.right).abs() > 1e-12
        {
            return Err(Error::invalid(format!(
                "initial profile endpoints ({}, {}) disagree with boundary data ({}, {})",
                self.initial_profile[0],
                self.initial_profile[n - 1],
                bc0.left,
                bc0.right
            )));
        }
        if !(self.t_end > 0.0) || !(self.dt > 0.0) {
            return Err(Error::Configuration(format!(
                "t_end and dt must be positive (t_end = {}, dt = {})",
                self.t_end, self.dt
            )));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > STEP_COUNT_TOL * steps.max(1.0) || steps.round() < 1.0 {
            return Err(Error::Configuration(format!(
                "t_end = {} is not a whole number of steps dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    /// Amplitude scale used by the stability bound.
    pub(crate) fn amplitude_scale(&self) -> f64 {
        let u0 = self.initial_profile.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        1.0f64.max(u0).max(self.bc.left.abs()).max(self.bc.right.abs())
    }

    /// Largest admissible step, `0.5 / L` with `L` the Lipschitz scale of the
    /// explicit reaction `|1 − 3u²| ≤ 1 + 3U²` plus `extra_lipschitz`.
    pub fn stability_bound(&self, extra_lipschitz: f64) -> f64 {
        let u = self.amplitude_scale();
        let lip = self.terms.reaction.abs() * (1.0 + 3.0 * u * u) + extra_lipschitz;
        if lip > 0.0 {
            0.5 / lip
        } else {
            f64::INFINITY
        }
    }
}

/// Extra explicit terms used by the stochastic solver.
#[derive(Default)]
pub(crate) struct StepExtras<'a> {
    /// Cubic drift coefficients `a0..a3` evaluated at the current state.
    pub drift: Option<[f64; 4]>,
    /// Per-point intensity and per-step scalar noise increments.
    pub noise: Option<(&'a [f64], &'a [f64])>,
    pub seed: Option<u64>,
}

/// Constant-coefficient tridiagonal system `−r u_{i−1} + (1+2r) u_i − r u_{i+1}`
/// on the interior points, with the Thomas sweep factors cached.
struct ImplicitDiffusion {
    r: f64,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl ImplicitDiffusion {
    fn new(n_interior: usize, r: f64) -> Self {
        let (a, b, c) = (-r, 1.0 + 2.0 * r, -r);
        let mut c_prime = vec![0.0; n_interior];
        let mut inv_denom = vec![0.0; n_interior];
        for i in 0..n_interior {
            let denom = if i == 0 { b } else { b - a * c_prime[i - 1] };
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = c * inv_denom[i];
        }
        Self { r, c_prime, inv_denom }
    }

    /// Solves in place: `rhs` holds the interior right-hand side on entry.
    fn solve(&self, rhs: &mut [f64], left: f64, right: f64) {
        let n = rhs.len();
        rhs[0] += self.r * left;
        rhs[n - 1] += self.r * right;
        let a = -self.r;
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - a * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

pub(crate) fn integrate(problem: &PdeProblem, extras: &StepExtras<'_>) -> Result<FieldSeries> {
    problem.validate()?;
    let drift_lip = extras.drift.map_or(0.0, |a| {
        let u = problem.amplitude_scale();
        a[1].abs() + 2.0 * a[2].abs() * u + 3.0 * a[3].abs() * u * u
    });
    let bound = problem.stability_bound(drift_lip);
    if problem.dt > bound {
        return Err(Error::Configuration(format!(
            "dt = {} exceeds the explicit stability bound {bound}",
            problem.dt
        )));
    }

    let grid = problem.grid;
    let p = grid.n_points();
    let h = grid.spacing();
    let dt = problem.dt;
    let n_steps = problem.n_steps();
    if let Some((sigma, incs)) = extras.noise {
        if sigma.len() != p || incs.len() < n_steps {
            return Err(Error::invalid(format!(
                "noise needs {p} intensities and {n_steps} increments, got {} and {}",
                sigma.len(),
                incs.len()
            )));
        }
    }
    let xs = grid.points();
    let terms = problem.terms;
    let kernel: Vec<f64> = (0..=n_steps).map(|k| problem.kernel.eval(k as f64 * dt)).collect();
    let diffusion = ImplicitDiffusion::new(p - 2, terms.diffusion * dt / (h * h));

    let mut data = Vec::with_capacity((n_steps + 1) * p);
    data.extend_from_slice(&problem.initial_profile);
    let mut memory = vec![0.0; p];
    let mut rhs = vec![0.0; p - 2];

    for n in 0..n_steps {
        let t = n as f64 * dt;
        let current = &data[n * p..(n + 1) * p];

        memory.iter_mut().for_each(|m| *m = 0.0);
        if n > 0 && terms.memory != 0.0 {
            for m in 0..=n {
                let k = kernel[n - m];
                if problem.memory_cutoff.is_some_and(|c| k < c) {
                    continue;
                }
                let w = if m == 0 || m == n { 0.5 * dt * k } else { dt * k };
                let past = &data[m * p..(m + 1) * p];
                for (acc, u) in memory[1..p - 1].iter_mut().zip(&past[1..p - 1]) {
                    *acc += w * u;
                }
            }
        }

        for i in 1..p - 1 {
            let u = current[i];
            let mut e = terms.reaction * (u - u * u * u) + terms.memory * memory[i];
            if let Some(f) = &problem.forcing {
                e += f.source(xs[i], t);
            }
            if let Some(a) = extras.drift {
                e += a[0] + a[1] * u + a[2] * u * u + a[3] * u * u * u;
            }
            rhs[i - 1] = u + dt * e;
        }

        let bc = problem.boundary_at(t + dt);
        diffusion.solve(&mut rhs, bc.left, bc.right);
        if let Some((sigma, incs)) = extras.noise {
            let db = incs[n];
            for (v, s) in rhs.iter_mut().zip(&sigma[1..p - 1]) {
                *v += s * db;
            }
        }

        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: t + dt,
                seed: extras.seed,
            });
        }
        data.push(bc.left);
        data.extend_from_slice(&rhs);
        data.push(bc.right);
    }
    Ok(FieldSeries::from_parts_unchecked(grid, dt, n_steps + 1, data))
}

/// Deterministic solve on `t_n = n·dt`, `n = 0..=t_end/dt`.
pub fn solve(problem: &PdeProblem) -> Result<FieldSeries> {
    integrate(problem, &StepExtras::default())
}

/// Smooth low-mode perturbation `ε Σ_m ξ_m sin(mπ(x+1)/2)` of initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub n_modes: usize,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64, n_modes: usize, seed: u64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "perturbation amplitude must be >= 0, got {epsilon}"
            )));
        }
        if n_modes == 0 {
            return Err(Error::invalid("perturbation needs at least one mode"));
        }
        Ok(Self { epsilon, n_modes, seed })
    }

    /// Mode coefficients `ξ_1..ξ_M` drawn from the seed.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut rng = rng::seeded(self.seed);
        (0..self.n_modes).map(|_| rng::standard_normal(&mut rng)).collect()
    }
}

/// Endpoint values are returned unchanged.
pub fn perturbed_initial(base: &[f64], spec: &PerturbationSpec, grid: &Grid1D) -> Result<Vec<f64>> {
    let n = grid.n_points();
    if base.len() != n {
        return Err(Error::invalid(format!(
            "base profile has {} points, grid has {n}",
            base.len()
        )));
    }
    if spec.epsilon == 0.0 {
        return Ok(base.to_vec());
    }
    let xi = spec.coefficients();
    let mut out = base.to_vec();
    for (i, v) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        let s = 0.5 * PI * (grid.x(i) + 1.0);
        let pert: f64 = xi.iter().enumerate().map(|(m, c)| c * ((m + 1) as f64 * s).sin()).sum();
        *v += spec.epsilon * pert;
    }
    Ok(out)
}

/// Member `k` starts from the initial profile perturbed with seed `base_seed ^ k`.
pub fn solve_ensemble(
    problem: &PdeProblem,
    spec: &PerturbationSpec,
    n_members: usize,
    base_seed: u64,
) -> Result<EnsembleRun> {
    if n_members < 2 {
        return Err(Error::invalid(format!(
            "ensemble needs at least 2 members, got {n_members}"
        )));
    }
    let seeds: Vec<u64> = (0..n_members).map(|k| rng::member_seed(base_seed, k)).collect();
    let members = run_members(n_members, |k| {
        let member_spec = PerturbationSpec {
            seed: seeds[k],
            ..*spec
        };
        let mut p = problem.clone();
        p.initial_profile = perturbed_initial(&problem.initial_profile, &member_spec, &problem.grid)?;
        integrate(
            &p,
            &StepExtras {
                seed: Some(seeds[k]),
                ..StepExtras::default()
            },
        )
    })?;
    Ok(EnsembleRun { members, seeds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_problem(n: usize) -> PdeProblem {
        let g = Grid1D::new(n).unwrap();
        PdeProblem::new(
            g,
            BoundaryCondition::new(0.0, 0.0).unwrap(),
            MemoryKernelSpec::new(2.0).unwrap(),
            vec![0.0; n],
            1.0,
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn kernel_values() {
        let k = MemoryKernelSpec::new(2.0).unwrap();
        assert_eq!(k.eval(0.0), 1.0);
        assert_eq!(k.eval(1.0), 0.5);
        assert!((k.eval(3.0) - 0.1).abs() < 1e-15);
        assert!(MemoryKernelSpec::new(0.0).is_err());
    }

    #[test]
    fn zero_is_equilibrium() {
        let u = solve(&zero_problem(21)).unwrap();
        assert_eq!(u.n_times(), 101);
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn validation_errors() {
        let g = Grid1D::new(11).unwrap();
        let bc = BoundaryCondition::new(-1.0, 1.0).unwrap();
        let k = MemoryKernelSpec::new(2.0).unwrap();
        assert!(PdeProblem::new(g, bc, k, vec![0.0; 11], 1.0, 0.1).is_err());
        assert!(PdeProblem::new(g, bc, k, vec![0.0; 5], 1.0, 0.1).is_err());
        let lin = g.sample(|x| x);
        assert!(PdeProblem::new(g, bc, k, lin.clone(), 1.0, 0.3).is_err());
        assert!(PdeProblem::new(g, bc, k, lin.clone(), -1.0, 0.1).is_err());
        let p = PdeProblem::new(g, bc, k, lin, 1.0, 0.2).unwrap();
        // reaction Lipschitz scale 4 gives a bound of 0.125
        assert!((p.stability_bound(0.0) - 0.125).abs() < 1e-15);
        assert!(matches!(solve(&p), Err(Error::Configuration(_))));
    }

    #[test]
    fn boundary_pinned_every_step() {
        let g = Grid1D::new(251).unwrap();
        let p = PdeProblem::standard(g, 1.0, 0.008).unwrap();
        let u = solve(&p).unwrap();
        for row in u.rows() {
            assert_eq!(row[0], -1.0);
            assert_eq!(row[250], 1.0);
        }
    }

    #[test]
    fn standard_configuration_stays_bounded() {
        let g = Grid1D::with_spacing(0.004).unwrap();
        let p = PdeProblem::standard(g, 1.0, 0.004).unwrap();
        let u = solve(&p).unwrap();
        let max = u.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1.5, "max |u| = {max}");
    }

    #[test]
    fn perturbation_properties() {
        let g = Grid1D::new(101).unwrap();
        let base = standard_initial_profile(&g);
        let zero = PerturbationSpec::new(0.0, 4, 3).unwrap();
        assert_eq!(perturbed_initial(&base, &zero, &g).unwrap(), base);
        let spec = PerturbationSpec::new(1e-3, 4, 3).unwrap();
        let p = perturbed_initial(&base, &spec, &g).unwrap();
        assert_eq!(p[0], base[0]);
        assert_eq!(p[100], base[100]);
        let bound = 1e-3 * spec.coefficients().iter().map(|c| c.abs()).sum::<f64>();
        let dev = p.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev > 0.0 && dev <= bound);
        assert!(perturbed_initial(&base[..50], &spec, &g).is_err());
        assert!(PerturbationSpec::new(-1.0, 4, 0).is_err());
    }

    #[test]
    fn ensemble_contracts() {
        let g = Grid1D::new(51).unwrap();
        let p = PdeProblem::standard(g, 0.2, 0.02).unwrap();
        let none = PerturbationSpec::new(0.0, 4, 0).unwrap();
        let e = solve_ensemble(&p, &none, 2, 11).unwrap();
        assert_eq!(e.members[0], e.members[1]);

        let spec = PerturbationSpec::new(1e-3, 4, 0).unwrap();
        let a = solve_ensemble(&p, &spec, 8, 11).unwrap();
        let b = solve_ensemble(&p, &spec, 8, 11).unwrap();
        assert_eq!(a, b);
        let spread = a.std_dev().unwrap();
        let max_sd = spread.row(1).iter().fold(0.0f64, |m, &v| m.max(v));
        assert!(max_sd > 0.0);
        assert_eq!(a.seeds, (0..8).map(|k| 11 ^ k).collect::<Vec<u64>>());
        assert!(solve_ensemble(&p, &spec, 1, 11).is_err());
    }

    #[test]
    fn blow_up_reports_time() {
        let g = Grid1D::new(5).unwrap();
        let p = PdeProblem::new(
            g,
            BoundaryCondition::new(0.0, 0.0).unwrap(),
            MemoryKernelSpec::new(2.0).unwrap(),
            vec![0.0, 1.0, 1.0, 1.0, 0.0],
            1.0,
            0.01,
        )
        .unwrap()
        .with_forcing(Arc::new(ConstantForcing(1e308)))
        .unwrap();
        match solve(&p) {
            Err(Error::BlowUp { time, .. }) => assert!(time > 0.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
