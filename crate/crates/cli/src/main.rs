//! `ratio-index`: indices, certification and simulation from the command line.
//!
//! Exit codes: 0 success, 1 certification failure, 2 input error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::output::Numeric;

#[derive(Debug, Parser)]
#[command(name = "ratio-index", version, about = "Ratio and Gittins index policies for budgeted learning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// How exact quantities are printed.
    #[arg(long, global = true, value_enum)]
    mode: Option<Numeric>,
    /// Overrides the seed of a config or suite.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the trial count of a config or suite.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file instead of stdout (CSV for simulate and certify).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ratio index, profit curve and ratio policy of one arm state.
    Index {
        arm: PathBuf,
        #[arg(long)]
        h: usize,
        /// State id; defaults to the root.
        #[arg(long)]
        state: Option<String>,
        /// Also report the Gittins index at discount 1 - 1/h.
        #[arg(long)]
        gittins: bool,
    },
    /// Gittins indices of an arm.
    Gittins {
        arm: PathBuf,
        /// Discount factor, e.g. 3/4 or 0.75.
        #[arg(long, conflicts_with = "h", required_unless_present = "h")]
        theta: Option<String>,
        /// Use discount 1 - 1/h.
        #[arg(long)]
        h: Option<usize>,
        /// State id; defaults to every state.
        #[arg(long)]
        state: Option<String>,
        /// Bisection tolerance (float mode).
        #[arg(long, default_value_t = ratio_index::gittins::DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Runs the claim suite on random instances or on a config's arms.
    Certify {
        config: Option<PathBuf>,
        /// Criteria to run, e.g. 2,4,7; defaults to all.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        /// Random instances in the sweep.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Monte Carlo evaluation of the strategies in a config.
    Simulate {
        config: PathBuf,
        /// Fill the `seconds` column with wall-clock time.
        #[arg(long)]
        timing: bool,
    },
    /// Checks arm files against every structural invariant.
    Validate {
        #[arg(required = true)]
        arms: Vec<PathBuf>,
    },
}

pub enum Outcome {
    Ok,
    CertificationFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Index { arm, h, state, gittins } => commands::index(&cli.common, &arm, h, state.as_deref(), gittins),
        Command::Gittins { arm, theta, h, state, tolerance } => {
            commands::gittins(&cli.common, &arm, theta.as_deref(), h, state.as_deref(), tolerance)
        }
        Command::Certify { config, criteria, instances } => {
            commands::certify(&cli.common, config.as_deref(), &criteria, instances)
        }
        Command::Simulate { config, timing } => commands::simulate(&cli.common, &config, timing),
        Command::Validate { arms } => commands::validate(&arms),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CertificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
