//! Command-line driver for the dyadic cascade models.
//!
//! Every subcommand reads one JSON [`config::RunConfig`] and writes its results to
//! an output directory. Exit codes: 0 on success, 1 for configuration errors, 2 for
//! numerical failures.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod spectrum;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dyadic", version, about = "Dyadic cascade model simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel kernels.
    #[arg(long, env = "DYADIC_CASCADE_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and write trajectory.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write the full state at the first output time at or after this time to state.dyad.
        #[arg(long, value_name = "T")]
        dump_state: Option<f64>,
    },
    /// Solve for the stationary profile; writes profile.csv and regime.json.
    Stationary {
        #[command(flatten)]
        common: Common,
    },
    /// Solve for the self-similar profile; writes selfsimilar.csv and selfsimilar.json.
    Selfsimilar {
        #[command(flatten)]
        common: Common,
    },
    /// Lift classic initial data to the tree; writes lift.csv, lift.json and lifted.dyad.
    Lift {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the dissipation-time bound; writes dissipation.json.
    DissipationBound {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the decay exponent of the initial state's spectrum; writes spectrum.csv and fit.json.
    FitSpectrum {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Stationary { common }
            | Command::Selfsimilar { common }
            | Command::Lift { common }
            | Command::DissipationBound { common }
            | Command::FitSpectrum { common } => common,
        }
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<String, CliError> {
    let out = command.common().out.as_deref();
    Ok(match command {
        Command::Simulate { dump_state, .. } => {
            let o = run::run_simulate(cfg, out, *dump_state)?;
            format!(
                "t = {:e}: E = {:e} ({} steps, {} rejected)",
                o.summary.final_time, o.summary.final_energy, o.summary.stats.accepted, o.summary.stats.rejected
            )
        }
        Command::Stationary { .. } => {
            let o = run::run_stationary(cfg, out)?;
            format!("{} Z_0 = {:?}", o.report.regime, o.report.z0)
        }
        Command::Selfsimilar { .. } => {
            let r = run::run_selfsimilar(cfg, out)?;
            format!("b_{} = {:e}", r.n0, r.b0)
        }
        Command::Lift { .. } => {
            let r = run::run_lift(cfg, out)?;
            format!("branching {}, defect {:e}", r.branching, r.defect)
        }
        Command::DissipationBound { .. } => format!("{:e}", run::run_dissipation(cfg, out)?.time),
        Command::FitSpectrum { .. } => {
            let r = run::run_fit(cfg, out)?;
            format!("eta = {:e} (residual {:e})", r.eta, r.residual)
        }
    })
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let common = cli.command.common();
    let cfg = RunConfig::from_path(&common.config)?;
    match common.threads {
        None => dispatch(&cli.command, &cfg),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(&cli.command, &cfg))
        }
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
