//! Command-line harness: dataset generation, training, evaluation,
//! cross-validated sweeps and standalone projection checks.
//!
//! Exit codes: 0 success, 1 replay mismatch or other failure, 2 usage,
//! 3 infeasible constraint, 4 I/O or data error.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rankfair_core::{CsvSchema, KappaMode, SolverConfig};

use commands::{
    EvaluateSettings, GenerateSettings, Invocation, ProjectSettings, SweepSettings, TrainSettings,
};
use config::ConfigFile;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Invalid flag values or config contents.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "rankfair",
    version,
    about = "Fair multi-task regression under a rank constraint"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Seed for data generation, solver initialization, fold splits and fuzzing.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Directory for all outputs (default: current directory).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Primary output name: the CSV for `generate`, a file stem otherwise.
    #[arg(short = 'o', long = "output", global = true)]
    pub output: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Train on a dataset and write weights, predictions and the iterate trace.
    Train(TrainArgs),
    /// Score predictions against a dataset.
    Evaluate(EvaluateArgs),
    /// Cross-validated grid over beta and epsilon.
    Sweep(SweepArgs),
    /// Project one vector onto the rank band, or fuzz the heuristics against the exhaustive oracle.
    Project(ProjectArgs),
    /// Re-run a manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Target AUC between the partitions, in (0.5, 1).
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 40)]
    pub k: usize,
    #[arg(long, default_value_t = 25)]
    pub h: usize,
    /// Columns including the protected indicator.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sd: f64,
    /// Override the calibrated mean gap between partitions.
    #[arg(long)]
    pub mean_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KappaArg {
    Derived,
    Printed,
}

impl From<KappaArg> for KappaMode {
    fn from(k: KappaArg) -> Self {
        match k {
            KappaArg::Derived => KappaMode::Derived,
            KappaArg::Printed => KappaMode::Printed,
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct SchemaArgs {
    #[arg(long)]
    pub task_column: Option<String>,
    #[arg(long)]
    pub protected_column: Option<String>,
    #[arg(long)]
    pub target_column: Option<String>,
    /// Protected value mapped to partition A.
    #[arg(long)]
    pub a_label: Option<String>,
}

impl SchemaArgs {
    fn resolve(&self, file: &ConfigFile) -> CsvSchema {
        let mut s = file.schema(CsvSchema::default());
        if let Some(v) = &self.task_column {
            s.task_column = v.clone();
        }
        if let Some(v) = &self.protected_column {
            s.protected_column = v.clone();
        }
        if let Some(v) = &self.target_column {
            s.target_column = v.clone();
        }
        if self.a_label.is_some() {
            s.a_label = self.a_label.clone();
        }
        s
    }
}

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Flat key/value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tau: Option<u64>,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    #[arg(long)]
    pub inner_iters: Option<usize>,
    /// Train without the rank constraint.
    #[arg(long)]
    pub no_fairness: bool,
    #[arg(long, value_enum)]
    pub kappa_mode: Option<KappaArg>,
    /// Replace the band's lower bound C.
    #[arg(long, allow_hyphen_values = true)]
    pub lower_bound: Option<f64>,
}

impl SolverArgs {
    fn resolve(&self, file: &ConfigFile, seed: Option<u64>) -> anyhow::Result<SolverConfig> {
        let mut c = file.solver(SolverConfig::default());
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { c.$field = v; })*
            };
        }
        take!(
            rho,
            beta,
            gamma,
            theta,
            epsilon,
            tau,
            outer_iters,
            inner_iters
        );
        if let Some(s) = seed {
            c.seed = s;
        }
        if self.no_fairness {
            c.fairness_enabled = false;
        }
        if let Some(k) = self.kappa_mode {
            c.kappa_mode = k.into();
        }
        if self.lower_bound.is_some() {
            c.lower_bound = self.lower_bound;
        }
        c.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV with a `raw` column and optional `projected` and `demoted` columns.
    pub predictions: PathBuf,
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated beta grid (default: 1e-4, 1e-3, ..., 1e4).
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Comma-separated epsilon values (default: 0.01, 0.05, 0.1, 0.25).
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Independent fold splits; metrics report mean and standard deviation over them.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// CSV with `value` and `protected` columns and an optional `offset` column.
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = rankfair_core::projection::DEFAULT_TAU)]
    pub tau: u64,
    #[arg(long, value_enum, default_value = "derived")]
    pub kappa_mode: KappaArg,
    #[arg(long, allow_hyphen_values = true)]
    pub lower_bound: Option<f64>,
    /// Also run the exhaustive oracle (at most 16 entries).
    #[arg(long)]
    pub oracle: bool,
    /// Fuzz this many random instances against the oracle instead of reading input.
    #[arg(long)]
    pub fuzz: Option<usize>,
    /// Largest fuzz instance.
    #[arg(long, default_value_t = 12)]
    pub fuzz_size: usize,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("bad path {}", path.display()))
}

/// Split `-o` into a directory and a name, relative to `--output-dir`.
fn output_location(common: &CommonArgs, default: &str) -> anyhow::Result<(PathBuf, String)> {
    let base = common
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    let raw = common.output.clone().unwrap_or_else(|| default.to_string());
    let raw = Path::new(&raw);
    let name = raw
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| UsageError(format!("bad output name {}", raw.display())))?
        .to_string();
    let dir = match raw.parent() {
        Some(p) if !p.as_os_str().is_empty() => base.join(p),
        _ => base,
    };
    Ok((absolute(&dir)?, name))
}

fn check_jobs(jobs: usize) -> anyhow::Result<()> {
    if jobs == 0 {
        return Err(UsageError("--jobs must be at least 1".into()).into());
    }
    Ok(())
}

/// Resolve flags and config into an invocation and its output directory.
pub fn resolve(cli: &Cli) -> anyhow::Result<Option<(Invocation, PathBuf)>> {
    let common = &cli.common;
    check_jobs(common.jobs)?;
    let inv = match &cli.command {
        Command::Generate(a) => {
            let (dir, name) = output_location(common, "synthetic.csv")?;
            let inv = Invocation::Generate(GenerateSettings {
                alpha: a.alpha,
                k: a.k,
                h: a.h,
                n: a.n,
                sd: a.sd,
                mean_gap: a.mean_gap,
                seed: common.seed.unwrap_or(0),
                output: name,
            });
            (inv, dir)
        }
        Command::Train(a) => {
            let file = ConfigFile::load_optional(a.solver.config.as_deref())?;
            let (dir, stem) = output_location(common, "train")?;
            let inv = Invocation::Train(TrainSettings {
                data: absolute(&a.data)?,
                schema: a.schema.resolve(&file),
                solver: a.solver.resolve(&file, common.seed)?,
                stem,
            });
            (inv, dir)
        }
        Command::Evaluate(a) => {
            let file = ConfigFile::load_optional(a.config.as_deref())?;
            let (dir, stem) = output_location(common, "report")?;
            let inv = Invocation::Evaluate(EvaluateSettings {
                predictions: absolute(&a.predictions)?,
                data: absolute(&a.data)?,
                schema: a.schema.resolve(&file),
                stem,
            });
            (inv, dir)
        }
        Command::Sweep(a) => {
            let file = ConfigFile::load_optional(a.solver.config.as_deref())?;
            let (dir, stem) = output_location(common, "sweep")?;
            let betas = a
                .betas
                .clone()
                .or_else(|| file.betas.clone())
                .unwrap_or_else(commands::sweep::default_betas);
            let epsilons = a
                .epsilons
                .clone()
                .or_else(|| file.epsilons.clone())
                .unwrap_or_else(commands::sweep::default_epsilons);
            let inv = Invocation::Sweep(SweepSettings {
                data: absolute(&a.data)?,
                schema: a.schema.resolve(&file),
                solver: a.solver.resolve(&file, common.seed)?,
                betas,
                epsilons,
                folds: a.folds.or(file.folds).unwrap_or(10),
                repeats: a.repeats.or(file.repeats).unwrap_or(1),
                jobs: common.jobs,
                stem,
            });
            (inv, dir)
        }
        Command::Project(a) => {
            let (dir, stem) = output_location(common, "project")?;
            let inv = Invocation::Project(ProjectSettings {
                input: a.input.as_deref().map(absolute).transpose()?,
                epsilon: a.epsilon,
                tau: a.tau,
                kappa_mode: a.kappa_mode.into(),
                lower_bound: a.lower_bound,
                oracle: a.oracle,
                fuzz: a.fuzz,
                fuzz_size: a.fuzz_size,
                seed: common.seed.unwrap_or(0),
                stem,
            });
            (inv, dir)
        }
        Command::Replay(_) => return Ok(None),
    };
    inv.0.validate()?;
    Ok(Some(inv))
}

/// Run the parsed command line. Returns the process exit code on success.
pub fn execute(cli: Cli) -> anyhow::Result<i32> {
    if let Command::Replay(a) = &cli.command {
        return commands::replay::replay(&a.manifest, cli.common.output_dir.as_deref());
    }
    let (inv, dir) = resolve(&cli)?.expect("non-replay commands resolve");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let manifest = commands::run_invocation(&inv, &dir)?;
    println!("manifest: {}", manifest.display());
    Ok(0)
}

/// Map an error chain onto the stable exit codes.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use rankfair_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Infeasible { .. } => EXIT_INFEASIBLE,
                E::InvalidParameter { .. } | E::InstanceTooLarge { .. } => EXIT_USAGE,
                _ => EXIT_IO,
            };
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<csv::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return EXIT_IO;
        }
    }
    EXIT_FAILURE
}
