//! Command-line front end for the `adbid_core` solver and simulator.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure while writing output |
//! | 2 | invalid command line or configuration |
//! | 3 | solver or simulation error (sweep: some rows failed) |
//! | 4 | Monte Carlo z-score beyond the threshold |
//! | 5 | a monotonicity verdict reported a violation |

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use adbid_core::solver::Schedule;
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use crate::commands::{Artifact, SimulateArgs};
use crate::config::{Format, RunConfig};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_Z: u8 = 4;
pub const EXIT_VERDICT: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: anyhow::Error) -> Self {
        Self { code, error }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adbid", version, about = "Optimal bids for advertising auctions, with Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (default: the config's `output.path`, else stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `sim.paths`.
    #[arg(long)]
    pub paths: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal value and smallest optimal bid or policy.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Solve population rows independently instead of by dichotomy.
        #[arg(long)]
        naive: bool,
    },
    /// Monte Carlo estimate checked against the exact value.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Policy table CSV to simulate (population model).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Constant bid to simulate (single-individual models).
        #[arg(long)]
        bid: Option<f64>,
        /// Write every simulated event as TSV (runs sequentially).
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// One solve per value of `sweep.param`, with monotonicity verdicts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        naive: bool,
    },
    /// Finite-population values against the mean-field integral.
    Meanfield {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve { common, .. }
            | Command::Simulate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Meanfield { common } => common,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<u8, Failure> {
    let common = cli.command.common();
    let cfg = RunConfig::load(&common.config).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let format = common.format.or(cfg.output.format).unwrap_or(Format::Table);
    let out = common.out.clone().or_else(|| cfg.output.path.clone());

    let artifact = match common.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::new(EXIT_CONFIG, anyhow!("invalid `--threads`: {e}")))?;
            pool.install(|| dispatch(cli, &cfg, format))?
        }
        None => dispatch(cli, &cfg, format)?,
    };

    match &out {
        Some(path) => fs::write(path, &artifact.body)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(|e| Failure::new(EXIT_IO, e))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(artifact.body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::new(EXIT_IO, e.into()))?;
        }
    }
    for line in &artifact.notes {
        eprintln!("{line}");
    }
    Ok(artifact.code)
}

fn dispatch(cli: &Cli, cfg: &RunConfig, format: Format) -> Result<Artifact, Failure> {
    let schedule = |naive: bool| if naive { Schedule::Naive } else { Schedule::Dichotomy };
    match &cli.command {
        Command::Solve { naive, .. } => commands::solve(cfg, format, schedule(*naive)),
        Command::Sweep { naive, .. } => commands::sweep(cfg, format, schedule(*naive)),
        Command::Meanfield { .. } => commands::meanfield(cfg, format),
        Command::Simulate { common, policy, bid, event_log } => {
            let mut sim = cfg
                .sim
                .ok_or_else(|| Failure::new(EXIT_CONFIG, anyhow!("invalid `sim`: simulate needs a `sim` section")))?;
            if let Some(seed) = common.seed {
                sim = sim.with_seed(seed);
            }
            if let Some(paths) = common.paths {
                sim = sim.with_paths(paths).map_err(|e| Failure::new(EXIT_CONFIG, e.into()))?;
            }
            let args = SimulateArgs { policy: policy.as_deref(), bid: *bid, event_log: event_log.as_deref() };
            commands::simulate(cfg, &sim, format, &args)
        }
    }
}
