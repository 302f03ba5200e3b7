use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "nhjunction", version, about = "Lossy spin-orbit-coupled bosonic Josephson junction")]
struct Cli {
    /// TOML experiment description. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set model.interaction=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads for grid sweeps. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Lossy and PT-symmetric many-body spectra.
    Spectrum,
    /// PT-breaking threshold over the configured grid.
    Threshold,
    /// Single-particle phase diagram over (gamma, beta).
    PhaseDiagram,
    /// Trajectories of the quantum and/or mean-field dynamics.
    Evolve {
        #[arg(long, value_enum, default_value_t = Side::Both)]
        side: Side,
    },
    /// Quantum vs mean-field comparison with breakdown and sync reports.
    Compare,
    /// Time-averaged imbalance over interaction and particle number.
    SweepZbar,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Quantum,
    Meanfield,
    Both,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Threshold => "threshold",
            Command::PhaseDiagram => "phase-diagram",
            Command::Evolve { .. } => "evolve",
            Command::Compare => "compare",
            Command::SweepZbar => "sweep-zbar",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(nhjunction::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<nhjunction::Error> for CliError {
    fn from(e: nhjunction::Error) -> Self {
        match e {
            nhjunction::Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    std::fs::create_dir_all(&cli.out)?;
    let ctx = commands::Context {
        cfg,
        out: cli.out.clone(),
        command: cli.command.name(),
        exec: execution(cli.jobs),
    };
    with_pool(cli.jobs, || match cli.command {
        Command::Spectrum => commands::spectrum(&ctx),
        Command::Threshold => commands::threshold(&ctx),
        Command::PhaseDiagram => commands::phase_diagram(&ctx),
        Command::Evolve { side } => commands::evolve(&ctx, side),
        Command::Compare => commands::compare(&ctx),
        Command::SweepZbar => commands::sweep_zbar(&ctx),
    })
}

fn execution(jobs: usize) -> nhjunction::Execution {
    if jobs == 1 {
        nhjunction::Execution::Sequential
    } else {
        nhjunction::Execution::default()
    }
}

#[cfg(feature = "parallel")]
fn with_pool<F>(jobs: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_pool<F>(jobs: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError>,
{
    if jobs > 1 {
        log::warn!("built without the parallel feature; ignoring --jobs {jobs}");
    }
    f()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Dense solves stay single-threaded so output is independent of --jobs.
    nhjunction::exec::pin_linear_algebra_sequential();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nhjunction {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
