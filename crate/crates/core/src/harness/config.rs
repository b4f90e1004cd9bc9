//! Experiment configuration, read from a TOML file of flat `key = value`
//! sections. Every key is optional; omitted keys take the default preset
//! values (the scaled-down geometry, Δx = 0.004).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fbm::{GeneratorKind, HurstParam};
use crate::filter::{FilterSpec, GaussianFilter};
use crate::grid::{restrict_profile, BoundaryCondition, Grid1D};
use crate::memory_pde::{standard_initial_profile, MemoryKernelSpec, PdeProblem, PerturbationSpec};

pub const OUTPUT_DIR_ENV: &str = "STOCH_LES_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub time: TimeSection,
    pub filter: FilterSection,
    pub ensemble: EnsembleSection,
    pub noise: NoiseSection,
    pub closure: ClosureSection,
    pub les: LesSection,
    pub memory: MemorySection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub fine_points: usize,
    pub coarse_factor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// `0.53 x − 0.47 sin(1.5 π x)`
    Standard,
    /// Linear interpolation of the boundary values.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub beta: f64,
    pub hurst: f64,
    pub left: f64,
    pub right: f64,
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub fine_members: usize,
    pub les_members: usize,
    pub epsilon: f64,
    pub n_modes: usize,
    pub fine_seed: u64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub generator: GeneratorKind,
}

/// Switches for degenerate-closure experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ClosureSection {
    pub zero_sigma: bool,
    pub zero_drift: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesInitial {
    /// Filtered fine initial profile, restricted to the coarse grid.
    Filtered,
    /// Restricted unfiltered profile, the same start as the baseline.
    Unfiltered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LesSection {
    pub initial: LesInitial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    /// Drop history terms with kernel weight below this value (off when absent).
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write every fine and LES member field.
    pub write_members: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            fine_points: 501,
            coarse_factor: 4,
        }
    }
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            beta: 2.0,
            hurst: 0.75,
            left: -1.0,
            right: 1.0,
            initial: InitialCondition::Standard,
        }
    }
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { t_end: 1.0, dt: 0.004 }
    }
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { delta: 0.04 }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            fine_members: 64,
            les_members: 16,
            epsilon: 1e-3,
            n_modes: 4,
            fine_seed: 20081020,
            noise_seed: 7,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Exact,
        }
    }
}

impl Default for LesSection {
    fn default() -> Self {
        Self {
            initial: LesInitial::Filtered,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            write_members: false,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset()
    }
}

impl ExperimentConfig {
    /// Scaled-down reference preset: Δx = 0.004, δ = 10 Δx, dt = Δx, T = 1.
    pub fn preset() -> Self {
        Self {
            grid: GridSection::default(),
            physics: PhysicsSection::default(),
            time: TimeSection::default(),
            filter: FilterSection::default(),
            ensemble: EnsembleSection::default(),
            noise: NoiseSection::default(),
            closure: ClosureSection::default(),
            les: LesSection::default(),
            memory: MemorySection::default(),
            output: OutputSection::default(),
        }
    }

    /// Switch to the fine geometry Δx = 0.001, δ = 0.01, dt = Δx.
    pub fn full_scale(mut self) -> Self {
        self.grid.fine_points = 2001;
        self.filter.delta = 0.01;
        self.time.dt = 0.001;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Configuration(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        Self::from_toml(&text)
    }

    /// Output directory, honoring the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.dir.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Configuration(m));
        if self.grid.fine_points < 3 {
            return cfg_err(format!("fine_points must be >= 3, got {}", self.grid.fine_points));
        }
        if self.grid.coarse_factor == 0 || !(self.grid.fine_points - 1).is_multiple_of(self.grid.coarse_factor) {
            return cfg_err(format!(
                "coarse_factor {} must divide fine_points - 1 = {}",
                self.grid.coarse_factor,
                self.grid.fine_points - 1
            ));
        }
        if (self.grid.fine_points - 1) / self.grid.coarse_factor < 2 {
            return cfg_err("coarse grid would have fewer than 3 points".into());
        }
        HurstParam::new(self.physics.hurst).map_err(|e| Error::Configuration(e.to_string()))?;
        MemoryKernelSpec::new(self.physics.beta).map_err(|e| Error::Configuration(e.to_string()))?;
        BoundaryCondition::new(self.physics.left, self.physics.right)
            .map_err(|e| Error::Configuration(e.to_string()))?;
        if self.physics.initial == InitialCondition::Standard
            && (self.physics.left != -1.0 || self.physics.right != 1.0)
        {
            return cfg_err("the standard initial profile requires left = -1 and right = 1".into());
        }
        FilterSpec::new(self.filter.delta).map_err(|e| Error::Configuration(e.to_string()))?;
        if self.ensemble.fine_members < 2 {
            return cfg_err("fine_members must be >= 2".into());
        }
        if self.ensemble.les_members < 1 {
            return cfg_err("les_members must be >= 1".into());
        }
        PerturbationSpec::new(self.ensemble.epsilon, self.ensemble.n_modes, 0)
            .map_err(|e| Error::Configuration(e.to_string()))?;
        if let Some(c) = self.memory.cutoff {
            if !(c > 0.0 && c < 1.0) {
                return cfg_err(format!("memory cutoff must lie in (0, 1), got {c}"));
            }
        }
        // surfaces non-integral step counts as configuration errors
        self.fine_problem()?;
        Ok(())
    }

    /// Hash of everything that affects results (the output section is excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn hurst(&self) -> HurstParam {
        HurstParam::new(self.physics.hurst).expect("validated")
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            delta: self.filter.delta,
        }
    }

    pub fn fine_grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.fine_points)
    }

    pub fn coarse_grid(&self) -> Result<Grid1D> {
        self.fine_grid()?.coarsen(self.grid.coarse_factor)
    }

    pub fn bc(&self) -> BoundaryCondition {
        BoundaryCondition {
            left: self.physics.left,
            right: self.physics.right,
        }
    }

    pub fn initial_profile(&self, grid: &Grid1D) -> Vec<f64> {
        match self.physics.initial {
            InitialCondition::Standard => standard_initial_profile(grid),
            InitialCondition::Linear => {
                let (a, b) = (self.physics.left, self.physics.right);
                let mut u = grid.sample(|x| a + (b - a) * (x + 1.0) / 2.0);
                let n = u.len();
                u[0] = a;
                u[n - 1] = b;
                u
            }
        }
    }

    pub fn perturbation(&self) -> PerturbationSpec {
        PerturbationSpec {
            epsilon: self.ensemble.epsilon,
            n_modes: self.ensemble.n_modes,
            seed: self.ensemble.fine_seed,
        }
    }

    fn problem_on(&self, grid: Grid1D, initial: Vec<f64>) -> Result<PdeProblem> {
        let mut p = PdeProblem::new(
            grid,
            self.bc(),
            MemoryKernelSpec::new(self.physics.beta)?,
            initial,
            self.time.t_end,
            self.time.dt,
        )
        .map_err(|e| match e {
            Error::InvalidInput(m) => Error::Configuration(m),
            other => other,
        })?;
        p.memory_cutoff = self.memory.cutoff;
        Ok(p)
    }

    pub fn fine_problem(&self) -> Result<PdeProblem> {
        let g = self.fine_grid()?;
        self.problem_on(g, self.initial_profile(&g))
    }

    /// Coarse problem starting from `initial`.
    pub fn coarse_problem(&self, initial: Vec<f64>) -> Result<PdeProblem> {
        self.problem_on(self.coarse_grid()?, initial)
    }

    /// Restricted unfiltered initial profile (the no-model baseline start).
    pub fn baseline_initial(&self) -> Result<Vec<f64>> {
        let g = self.fine_grid()?;
        restrict_profile(&self.initial_profile(&g), self.grid.coarse_factor)
    }

    /// Filtered fine initial profile, restricted, with the endpoints reset to
    /// the Dirichlet values.
    pub fn les_initial(&self) -> Result<Vec<f64>> {
        if self.les.initial == LesInitial::Unfiltered {
            return self.baseline_initial();
        }
        let g = self.fine_grid()?;
        let u0 = self.initial_profile(&g);
        let filter = GaussianFilter::new(g, self.filter_spec())?;
        let mut filtered = vec![0.0; u0.len()];
        filter.apply_profile(&u0, &mut filtered);
        let mut coarse = restrict_profile(&filtered, self.grid.coarse_factor)?;
        let n = coarse.len();
        coarse[0] = self.physics.left;
        coarse[n - 1] = self.physics.right;
        Ok(coarse)
    }
}
