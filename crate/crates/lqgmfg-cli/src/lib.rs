//! Command-line experiment runner for graphon mean field game policy optimisation.

pub mod config;
pub mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{ExperimentConfig, Preset};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lqgmfg::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 configuration, 3 numerical divergence, 4 oracle non-convergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use lqgmfg::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::DivergedRun { .. } | E::IntegrationBlowup { .. } | E::PicardDivergence { .. } | E::SingularCovariance { .. } => 3,
                E::OracleNotConverged { .. } => 4,
                E::NonPositiveDefiniteR { .. }
                | E::DegenerateInitialCovariance { .. }
                | E::IncompatibleGrids { .. }
                | E::OutOfRangeLabel(_)
                | E::GridMismatch(_)
                | E::Invalid(_) => 2,
                E::EmptyBatch | E::Io(_) | E::Csv(_) => 1,
            },
            CliError::Io(_) => 1,
        }
    }

    /// Copy preserving the message and exit code.
    pub fn duplicate(&self) -> CliError {
        match self {
            CliError::Config(s) => CliError::Config(s.clone()),
            CliError::Io(e) => CliError::Io(std::io::Error::new(e.kind(), e.to_string())),
            CliError::Core(e) => {
                use lqgmfg::Error as E;
                CliError::Core(match e {
                    E::NonPositiveDefiniteR { time, eigenvalue } => E::NonPositiveDefiniteR { time: *time, eigenvalue: *eigenvalue },
                    E::DegenerateInitialCovariance { player, eigenvalue } => E::DegenerateInitialCovariance { player: *player, eigenvalue: *eigenvalue },
                    E::IncompatibleGrids { dt, dtau } => E::IncompatibleGrids { dt: *dt, dtau: *dtau },
                    E::OutOfRangeLabel(a) => E::OutOfRangeLabel(*a),
                    E::IntegrationBlowup { what, time } => E::IntegrationBlowup { what, time: *time },
                    E::SingularCovariance { time, eigenvalue } => E::SingularCovariance { time: *time, eigenvalue: *eigenvalue },
                    E::EmptyBatch => E::EmptyBatch,
                    E::PicardDivergence { iterations, change } => E::PicardDivergence { iterations: *iterations, change: *change },
                    E::OracleNotConverged { iterations, omega, change } => E::OracleNotConverged { iterations: *iterations, omega: *omega, change: *change },
                    E::DivergedRun { iteration, j1 } => E::DivergedRun { iteration: *iteration, j1: *j1 },
                    E::GridMismatch(s) => E::GridMismatch(s.clone()),
                    E::Invalid(s) => E::Invalid(s.clone()),
                    E::Io(io) => E::Io(std::io::Error::new(io.kind(), io.to_string())),
                    E::Csv(c) => E::Invalid(c.to_string()),
                })
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lqgmfg", about = "Policy optimisation experiments for linear-quadratic graphon mean field games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured experiment or sweep.
    Run(CommonArgs),
    /// Evaluate the convergence constants for the configured model.
    Diagnose(CommonArgs),
    /// Solve for the Nash equilibrium on the reference grid.
    Equilibrium(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration; preset defaults fill every missing key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `sampling.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Preset name (overrides the file's `preset`).
    #[arg(long)]
    pub preset: Option<String>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let preset = self.preset.as_deref().map(Preset::parse).transpose()?;
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p, preset)?,
            None => {
                let c = ExperimentConfig::preset(preset.unwrap_or(Preset::SingleRun));
                c.validate()?;
                c
            }
        };
        if let Some(s) = self.seed {
            cfg.sampling.seed = s;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        cfg.output_dir = out.clone();
        Ok((cfg, out))
    }
}

pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (args, run): (&CommonArgs, fn(&ExperimentConfig, &std::path::Path) -> Result<Vec<PathBuf>, CliError>) = match &cli.command {
        Command::Run(a) => (a, experiment::run_experiment),
        Command::Diagnose(a) => (a, experiment::diagnose),
        Command::Equilibrium(a) => (a, experiment::equilibrium),
    };
    let (cfg, out) = args.resolve()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| run(&cfg, &out))
}

/// Parses `args`, runs, and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
