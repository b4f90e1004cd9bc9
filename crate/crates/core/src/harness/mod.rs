//! End-to-end experiment: fine ensemble, closure estimation, no-model and
//! stochastic LES coarse solves, and the comparison against the filtered
//! fine reference.

mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    ClosureSection, EnsembleSection, ExperimentConfig, FilterSection, GridSection, InitialCondition, LesInitial,
    LesSection, MemorySection, NoiseSection, OutputSection, PhysicsSection, TimeSection, OUTPUT_DIR_ENV,
};

use crate::ensemble::mean_field;
use crate::error::{Error, Result};
use crate::grid::{l2_error_per_time, l2_spacetime_error, FieldSeries};
use crate::io;
use crate::les::{solve_spde_ensemble, SpdeProblem};
use crate::memory_pde::{solve, solve_ensemble};
use crate::sgs::{build_closure, ClosureFile, SgsClosure};

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const CLOSURE_FILE: &str = "closure.json";
pub const FINE_MEAN_FILE: &str = "fine/mean.csv";
pub const REFERENCE_FILE: &str = "coarse/reference.csv";
pub const NO_MODEL_FILE: &str = "coarse/no_model.csv";
pub const LES_MEAN_FILE: &str = "coarse/les_mean.csv";
pub const LES_MEMBER_FILE: &str = "coarse/les_member_000.csv";
pub const MEAN_R_FILE: &str = "sgs/mean_r.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurves {
    pub times: Vec<f64>,
    pub no_model: Vec<f64>,
    pub stochastic_les: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub fine_seed: u64,
    pub noise_seed: u64,
    pub fine_member_seeds: Vec<u64>,
    pub les_member_seeds: Vec<u64>,
    pub version: String,
}

/// Relative space-time L² errors of both coarse models against the
/// ensemble-mean filtered fine solution on the coarse grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub err_no_model: f64,
    pub err_stochastic_les: f64,
    pub per_time: ErrorCurves,
    pub closure: ClosureFile,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub command: String,
    pub inputs: Vec<String>,
    /// Some history terms were dropped by the memory cutoff.
    pub truncated_memory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub stages: Vec<StageEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

/// Wall times in seconds, kept out of the report so that it is reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: ComparisonReport,
    pub manifest: Manifest,
    pub timings: Timings,
    pub out_dir: PathBuf,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Recorder<'a> {
    out: &'a Path,
    config_path: String,
    artifacts: Vec<ArtifactEntry>,
    stages: Vec<StageEntry>,
    timings: Timings,
    clock: Instant,
}

impl Recorder<'_> {
    fn command(&self, stage: &str) -> String {
        format!(
            "stoch-les pipeline --config {} --stage {stage} --out {}",
            self.config_path,
            self.out.display()
        )
    }

    fn stage<T>(
        &mut self,
        name: &str,
        inputs: &[&str],
        truncated: bool,
        run: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        log::info!("stage {name}");
        let command = self.command(name);
        let value = run(self).map_err(|e| Error::Stage {
            stage: name.to_string(),
            command: command.clone(),
            source: Box::new(e),
        })?;
        self.stages.push(StageEntry {
            name: name.to_string(),
            command,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            truncated_memory: truncated,
        });
        self.timings
            .stages
            .push((name.to_string(), start.elapsed().as_secs_f64()));
        Ok(value)
    }

    fn field(&mut self, rel: &str, stage: &str, field: &FieldSeries, seeds: &[u64]) -> Result<()> {
        let path = self.out.join(rel);
        io::write_field(&path, field)?;
        self.record(rel, stage, seeds)
    }

    fn json<T: Serialize>(&mut self, rel: &str, stage: &str, value: &T, seeds: &[u64]) -> Result<()> {
        io::write_json(&self.out.join(rel), value)?;
        self.record(rel, stage, seeds)
    }

    fn finish(
        self,
        cfg: &ExperimentConfig,
        report: Option<ComparisonReport>,
    ) -> Result<(Option<ComparisonReport>, Manifest, Timings)> {
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            stages: self.stages,
            artifacts: self.artifacts,
        };
        io::write_json(&self.out.join(MANIFEST_FILE), &manifest)?;
        let mut timings = self.timings;
        timings
            .stages
            .push(("total".into(), self.clock.elapsed().as_secs_f64()));
        io::write_json(&self.out.join(TIMINGS_FILE), &timings)?;
        Ok((report, manifest, timings))
    }

    fn record(&mut self, rel: &str, stage: &str, seeds: &[u64]) -> Result<()> {
        self.artifacts.push(ArtifactEntry {
            path: rel.to_string(),
            stage: stage.to_string(),
            sha256: sha256_file(&self.out.join(rel))?,
            seeds: seeds.to_vec(),
        });
        Ok(())
    }
}

/// Apply the degenerate-closure switches of the configuration.
pub fn configured_closure(cfg: &ExperimentConfig, closure: &SgsClosure) -> SgsClosure {
    let mut c = closure.clone();
    if cfg.closure.zero_drift {
        c.cubic_coeffs = [0.0; 4];
    }
    if cfg.closure.zero_sigma {
        c.sigma_profile.iter_mut().for_each(|s| *s = 0.0);
    }
    c
}

/// Whether the memory cutoff drops any history term before `t_end`.
pub fn memory_truncated(cfg: &ExperimentConfig) -> bool {
    cfg.memory
        .cutoff
        .is_some_and(|c| (1.0 + cfg.time.t_end.powf(cfg.physics.beta)).recip() < c)
}

pub const STAGES: [&str; 5] = ["fine", "closure", "baseline", "les", "compare"];

/// Run every stage and write artifacts below `out_dir`. `config_path` is
/// only used to print reproduction commands.
pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: &Path, config_path: &str) -> Result<PipelineOutput> {
    let (report, manifest, timings) = run_stages(cfg, out_dir, config_path, "compare")?;
    Ok(PipelineOutput {
        report: report.expect("compare stage ran"),
        manifest,
        timings,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Run the stages up to and including `last`, rewriting their artifacts.
/// Every stage is seeded, so this reproduces the artifacts of a full run.
pub fn run_pipeline_through(cfg: &ExperimentConfig, out_dir: &Path, config_path: &str, last: &str) -> Result<Manifest> {
    Ok(run_stages(cfg, out_dir, config_path, last)?.1)
}

fn run_stages(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    config_path: &str,
    last: &str,
) -> Result<(Option<ComparisonReport>, Manifest, Timings)> {
    let Some(last_index) = STAGES.iter().position(|s| *s == last) else {
        return Err(Error::Configuration(format!(
            "unknown stage `{last}`, expected one of {}",
            STAGES.join(", ")
        )));
    };
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rec = Recorder {
        out: out_dir,
        config_path: config_path.to_string(),
        artifacts: Vec::new(),
        stages: Vec::new(),
        timings: Timings::default(),
        clock: Instant::now(),
    };
    let truncated = memory_truncated(cfg);
    let factor = cfg.grid.coarse_factor;

    let fine = rec.stage("fine", &[], truncated, |rec| {
        let problem = cfg.fine_problem()?;
        let run = solve_ensemble(
            &problem,
            &cfg.perturbation(),
            cfg.ensemble.fine_members,
            cfg.ensemble.fine_seed,
        )?;
        let mean = run.mean()?;
        rec.field(FINE_MEAN_FILE, "fine", &mean, &run.seeds)?;
        if cfg.output.write_members {
            for (k, m) in run.members.iter().enumerate() {
                rec.field(&format!("fine/member_{k:03}.csv"), "fine", m, &[run.seeds[k]])?;
            }
        }
        Ok(run)
    })?;
    if last_index == 0 {
        return rec.finish(cfg, None);
    }

    let (closure_est, reference) = rec.stage("closure", &[FINE_MEAN_FILE], false, |rec| {
        let est = build_closure(&fine.members, &cfg.filter_spec(), cfg.hurst())?;
        let reference = mean_field(&est.u_bar_members)?.restrict(factor)?;
        rec.field(MEAN_R_FILE, "closure", &est.mean_r, &fine.seeds)?;
        rec.field(REFERENCE_FILE, "closure", &reference, &fine.seeds)?;
        Ok((est, reference))
    })?;
    drop(fine);

    let coarse_closure = configured_closure(cfg, &closure_est.closure.restrict(factor)?);
    let closure_file = ClosureFile::new(&coarse_closure, Some(closure_est.diagnostics.clone()));
    rec.json(CLOSURE_FILE, "closure", &closure_file, &[cfg.ensemble.fine_seed])?;
    drop(closure_est);
    if last_index == 1 {
        return rec.finish(cfg, None);
    }

    let no_model = rec.stage("baseline", &[], truncated, |rec| {
        let u = solve(&cfg.coarse_problem(cfg.baseline_initial()?)?)?;
        rec.field(NO_MODEL_FILE, "baseline", &u, &[])?;
        Ok(u)
    })?;
    if last_index == 2 {
        return rec.finish(cfg, None);
    }

    let les = rec.stage("les", &[CLOSURE_FILE], truncated, |rec| {
        let problem = SpdeProblem::new(
            cfg.coarse_problem(cfg.les_initial()?)?,
            coarse_closure.clone(),
            cfg.ensemble.noise_seed,
            cfg.noise.generator,
        )?;
        let run = solve_spde_ensemble(&problem, cfg.ensemble.les_members)?;
        let mean = run.mean()?;
        rec.field(LES_MEAN_FILE, "les", &mean, &run.seeds)?;
        rec.field(LES_MEMBER_FILE, "les", &run.members[0], &run.seeds[..1])?;
        if cfg.output.write_members {
            for (k, m) in run.members.iter().enumerate().skip(1) {
                rec.field(&format!("coarse/les_member_{k:03}.csv"), "les", m, &[run.seeds[k]])?;
            }
        }
        Ok((mean, run.seeds))
    })?;
    let (les_mean, les_seeds) = les;
    if last_index == 3 {
        return rec.finish(cfg, None);
    }

    let report = rec.stage(
        "compare",
        &[REFERENCE_FILE, NO_MODEL_FILE, LES_MEAN_FILE],
        false,
        |rec| {
            let report = ComparisonReport {
                err_no_model: l2_spacetime_error(&no_model, &reference)?,
                err_stochastic_les: l2_spacetime_error(&les_mean, &reference)?,
                per_time: ErrorCurves {
                    times: reference.times(),
                    no_model: l2_error_per_time(&no_model, &reference)?,
                    stochastic_les: l2_error_per_time(&les_mean, &reference)?,
                },
                closure: closure_file.clone(),
                provenance: Provenance {
                    config_hash: cfg.hash(),
                    fine_seed: cfg.ensemble.fine_seed,
                    noise_seed: cfg.ensemble.noise_seed,
                    fine_member_seeds: (0..cfg.ensemble.fine_members)
                        .map(|k| crate::rng::member_seed(cfg.ensemble.fine_seed, k))
                        .collect(),
                    les_member_seeds: les_seeds.clone(),
                    version: env!("CARGO_PKG_VERSION").to_string(),
                },
            };
            rec.json(REPORT_FILE, "compare", &report, &[])?;
            Ok(report)
        },
    )?;

    rec.finish(cfg, Some(report))
}

/// Long-format `x,t,u` tables for surface plots, read back from a completed
/// run directory. Returns the written paths.
pub fn emit_plot_data(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let sources = [
        (FINE_MEAN_FILE, "fine.csv"),
        (NO_MODEL_FILE, "no_model.csv"),
        (LES_MEMBER_FILE, "les_member.csv"),
        (LES_MEAN_FILE, "les_mean.csv"),
    ];
    for (src, _) in &sources {
        let p = run_dir.join(src);
        if !p.exists() {
            return Err(Error::MissingArtifact(p));
        }
    }
    let mut written = Vec::new();
    for (src, dst) in &sources {
        let field = io::read_field(&run_dir.join(src))?;
        let path = run_dir.join("plot").join(dst);
        io::write_text(&path, &io::field_to_long_csv(&field))?;
        written.push(path);
    }
    Ok(written)
}

/// Verify every manifest entry against the files on disk.
pub fn verify_manifest(run_dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = io::read_json(&run_dir.join(MANIFEST_FILE))?;
    for a in &manifest.artifacts {
        let h = sha256_file(&run_dir.join(&a.path))?;
        if h != a.sha256 {
            return Err(Error::Numerical(format!(
                "artifact {} does not match its recorded hash",
                a.path
            )));
        }
    }
    Ok(manifest)
}
