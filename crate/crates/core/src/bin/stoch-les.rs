use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stoch_les::ensemble::mean_field;
use stoch_les::error::{exit_code, Error, Result};
use stoch_les::fbm::{generate, uniform_times, GeneratorKind, HurstParam};
use stoch_les::filter::{filter_field, FilterSpec, GaussianFilter};
use stoch_les::grid::{l2_error_per_time, l2_spacetime_error, FieldSeries};
use stoch_les::harness::{self, ExperimentConfig, OUTPUT_DIR_ENV};
use stoch_les::io;
use stoch_les::les::{solve_spde_ensemble, SpdeProblem};
use stoch_les::memory_pde::{solve, solve_ensemble};
use stoch_les::sgs::{closure_from_residuals, extract_sgs_with, ClosureFile, SgsField};

/// Stochastic LES of a reaction-diffusion equation with memory.
#[derive(Parser)]
#[command(name = "stoch-les", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a fractional Brownian motion path to `t,value` CSV.
    Fbm(FbmArgs),
    /// Fine-grid ensemble of the memory PDE.
    SolveFine(SolveArgs),
    /// Gaussian-filter a field CSV.
    Filter(FilterArgs),
    /// Per-member subgrid residuals from fine member CSVs.
    ExtractSgs(ExtractArgs),
    /// Fit the cubic drift and noise intensity to extracted residuals.
    Fit(FitArgs),
    /// Coarse stochastic LES ensemble (or the no-model solve).
    SolveLes(LesArgs),
    /// Relative space-time L2 error of a field against a reference.
    Compare(CompareArgs),
    /// Full experiment driven by a TOML config.
    Pipeline(PipelineArgs),
    /// Long-format surface tables from a finished pipeline run.
    PlotData(PlotArgs),
    /// Print the default configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Args)]
struct FbmArgs {
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value = "exact")]
    generator: GeneratorKind,
    /// Number of samples, including t = 0.
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct ConfigSource {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the Δx = 0.001 geometry.
    #[arg(long)]
    full_scale: bool,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(),
        };
        let cfg = if self.full_scale { cfg.full_scale() } else { cfg };
        cfg.validate()?;
        Ok(cfg)
    }

    fn label(&self) -> String {
        self.config
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<defaults>".into())
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    delta: f64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    out: PathBuf,
    /// Fine member field CSVs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Residual CSVs `R_k`.
    #[arg(long, num_args = 1.., required = true)]
    residuals: Vec<PathBuf>,
    /// Filtered member CSVs `ū_k`, in the same order.
    #[arg(long, num_args = 1.., required = true)]
    filtered: Vec<PathBuf>,
    #[arg(long)]
    hurst: f64,
    /// Restrict the closure by this factor before writing it.
    #[arg(long, default_value_t = 1)]
    coarse_factor: usize,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct LesArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    closure: Option<PathBuf>,
    /// Coarse initial profile as `x,u` CSV; derived from the config when omitted.
    #[arg(long)]
    initial: Option<PathBuf>,
    /// Deterministic coarse solve without any closure.
    #[arg(long)]
    no_closure: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Several files on either side are averaged first; a finer reference is
/// restricted onto the field's grid.
#[derive(Args)]
struct CompareArgs {
    #[arg(long, num_args = 1.., required = true)]
    field: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    reference: Vec<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Stop after this stage.
    #[arg(long)]
    stage: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Output directory of a pipeline run.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    full_scale: bool,
}

#[derive(Serialize)]
struct FbmSidecar {
    hurst: f64,
    generator: GeneratorKind,
    samples: usize,
    horizon: f64,
    seed: u64,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: ExperimentConfig,
    config_hash: String,
    members: Vec<MemberEntry>,
    wall_time_s: f64,
    truncated_memory: bool,
}

#[derive(Serialize)]
struct MemberEntry {
    path: String,
    seed: u64,
}

#[derive(Serialize)]
struct CompareOutput {
    relative_l2: f64,
    times: Vec<f64>,
    per_time: Vec<f64>,
}

fn out_dir(explicit: &Option<PathBuf>, cfg: &ExperimentConfig, sub: &str) -> PathBuf {
    if std::env::var_os(OUTPUT_DIR_ENV).is_some() {
        return cfg.output_dir().join(sub);
    }
    explicit.clone().unwrap_or_else(|| cfg.output_dir().join(sub))
}

fn cmd_fbm(a: &FbmArgs) -> Result<()> {
    if a.samples < 2 {
        return Err(Error::Configuration("need at least 2 samples".into()));
    }
    let hurst = HurstParam::new(a.hurst).map_err(|e| Error::Configuration(e.to_string()))?;
    let path = generate(&uniform_times(a.samples - 1, a.horizon), hurst, a.generator, a.seed)?;
    let mut csv = String::from("t,value\n");
    for (t, v) in path.times.iter().zip(&path.values) {
        csv.push_str(&format!("{t},{v}\n"));
    }
    io::write_text(&a.output, &csv)?;
    io::write_json(
        &io::sidecar_path(&a.output),
        &FbmSidecar {
            hurst: a.hurst,
            generator: a.generator,
            samples: a.samples,
            horizon: a.horizon,
            seed: a.seed,
        },
    )
}

fn cmd_solve_fine(a: &SolveArgs) -> Result<()> {
    let cfg = a.source.load()?;
    let out = out_dir(&a.out, &cfg, "fine");
    let start = Instant::now();
    let run = solve_ensemble(
        &cfg.fine_problem()?,
        &cfg.perturbation(),
        cfg.ensemble.fine_members,
        cfg.ensemble.fine_seed,
    )?;
    let mut members = Vec::new();
    for (k, m) in run.members.iter().enumerate() {
        let name = format!("member_{k:03}.csv");
        io::write_field(&out.join(&name), m)?;
        members.push(MemberEntry {
            path: name,
            seed: run.seeds[k],
        });
    }
    io::write_json(
        &out.join("manifest.json"),
        &RunManifest {
            command: "solve-fine".into(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            members,
            wall_time_s: start.elapsed().as_secs_f64(),
            truncated_memory: harness::memory_truncated(&cfg),
        },
    )?;
    println!("wrote {} members to {}", run.members.len(), out.display());
    Ok(())
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let field = io::read_field(&a.input)?;
    let filtered = filter_field(&field, &FilterSpec::new(a.delta)?)?;
    io::write_field(&a.output, &filtered)
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let spec = FilterSpec::new(a.delta)?;
    let mut filter: Option<GaussianFilter> = None;
    for (k, input) in a.inputs.iter().enumerate() {
        let member = io::read_field(input)?;
        let f = match &filter {
            Some(f) if f.grid() == member.grid() => f,
            _ => filter.insert(GaussianFilter::new(*member.grid(), spec)?),
        };
        let (u_bar, r) = extract_sgs_with(f, &member).map_err(|e| e.for_member(k))?;
        io::write_field(&a.out.join(format!("ubar_{k:03}.csv")), &u_bar)?;
        io::write_field(&a.out.join(format!("R_{k:03}.csv")), r.field())?;
    }
    println!("wrote {} residual fields to {}", a.inputs.len(), a.out.display());
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    if a.residuals.len() != a.filtered.len() {
        return Err(Error::Configuration(format!(
            "{} residual files but {} filtered files",
            a.residuals.len(),
            a.filtered.len()
        )));
    }
    let hurst = HurstParam::new(a.hurst).map_err(|e| Error::Configuration(e.to_string()))?;
    let r = a
        .residuals
        .iter()
        .map(|p| io::read_field(p).map(SgsField))
        .collect::<Result<Vec<_>>>()?;
    let u = a
        .filtered
        .iter()
        .map(|p| io::read_field(p))
        .collect::<Result<Vec<_>>>()?;
    let est = closure_from_residuals(u, r, hurst)?;
    if est.fit.rank_deficient {
        log::warn!(
            "cubic fit is rank deficient (rank {}), using the minimum-norm solution",
            est.fit.rank
        );
    }
    let closure = est.closure.restrict(a.coarse_factor)?;
    io::write_json(&a.output, &ClosureFile::new(&closure, Some(est.diagnostics)))
}

fn cmd_solve_les(a: &LesArgs) -> Result<()> {
    let cfg = a.source.load()?;
    let out = out_dir(&a.out, &cfg, if a.no_closure { "no_model" } else { "les" });
    let initial = match &a.initial {
        Some(p) => io::profile_from_csv(&io::read_text(p)?)?,
        None if a.no_closure => cfg.baseline_initial()?,
        None => cfg.les_initial()?,
    };
    let problem = cfg.coarse_problem(initial)?;
    let start = Instant::now();
    let mut members = Vec::new();
    if a.no_closure {
        io::write_field(&out.join("no_model.csv"), &solve(&problem)?)?;
        members.push(MemberEntry {
            path: "no_model.csv".into(),
            seed: 0,
        });
    } else {
        let Some(closure_path) = &a.closure else {
            return Err(Error::Configuration(
                "--closure is required unless --no-closure is given".into(),
            ));
        };
        let file: ClosureFile = io::read_json(closure_path)?;
        let closure = harness::configured_closure(&cfg, &file.closure()?);
        let spde = SpdeProblem::new(problem, closure, cfg.ensemble.noise_seed, cfg.noise.generator)?;
        let run = solve_spde_ensemble(&spde, cfg.ensemble.les_members)?;
        for (k, m) in run.members.iter().enumerate() {
            let name = format!("member_{k:03}.csv");
            io::write_field(&out.join(&name), m)?;
            members.push(MemberEntry {
                path: name,
                seed: run.seeds[k],
            });
        }
        io::write_field(&out.join("mean.csv"), &run.mean()?)?;
    }
    io::write_json(
        &out.join("manifest.json"),
        &RunManifest {
            command: if a.no_closure {
                "solve-les --no-closure"
            } else {
                "solve-les"
            }
            .into(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            members,
            wall_time_s: start.elapsed().as_secs_f64(),
            truncated_memory: harness::memory_truncated(&cfg),
        },
    )?;
    println!("wrote coarse solution to {}", out.display());
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let read_mean = |paths: &[PathBuf]| -> Result<FieldSeries> {
        let fields = paths.iter().map(|p| io::read_field(p)).collect::<Result<Vec<_>>>()?;
        mean_field(&fields)
    };
    let field = read_mean(&a.field)?;
    let mut reference = read_mean(&a.reference)?;
    let (nf, nr) = (field.n_points() - 1, reference.n_points() - 1);
    if nr > nf && nr % nf == 0 {
        reference = reference.restrict(nr / nf)?;
    }
    let out = CompareOutput {
        relative_l2: l2_spacetime_error(&field, &reference)?,
        times: reference.times(),
        per_time: l2_error_per_time(&field, &reference)?,
    };
    println!("relative L2 error: {:.6e}", out.relative_l2);
    if let Some(p) = &a.output {
        io::write_json(p, &out)?;
    }
    Ok(())
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = a.source.load()?;
    let out = match (&a.out, std::env::var_os(OUTPUT_DIR_ENV)) {
        (_, Some(dir)) => PathBuf::from(dir),
        (Some(dir), None) => dir.clone(),
        (None, None) => cfg.output.dir.clone(),
    };
    let label = a.source.label();
    match &a.stage {
        Some(stage) => {
            let m = harness::run_pipeline_through(&cfg, &out, &label, stage)?;
            println!(
                "ran through stage {stage}; {} artifacts in {}",
                m.artifacts.len(),
                out.display()
            );
        }
        None => {
            let run = harness::run_pipeline(&cfg, &out, &label)?;
            let r = &run.report;
            println!("err_no_model       = {:.6e}", r.err_no_model);
            println!("err_stochastic_les = {:.6e}", r.err_stochastic_les);
            println!("artifacts in {}", out.display());
        }
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    for p in harness::emit_plot_data(&a.dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fbm(a) => cmd_fbm(a),
        Command::SolveFine(a) => cmd_solve_fine(a),
        Command::Filter(a) => cmd_filter(a),
        Command::ExtractSgs(a) => cmd_extract(a),
        Command::Fit(a) => cmd_fit(a),
        Command::SolveLes(a) => cmd_solve_les(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::PlotData(a) => cmd_plot(a),
        Command::Config(a) => {
            let cfg = ExperimentConfig::preset();
            let cfg = if a.full_scale { cfg.full_scale() } else { cfg };
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit_code::CONFIG
            } else {
                exit_code::SUCCESS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
