use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccpo_cli::commands::{cmd_compare, cmd_sweep, cmd_train, cmd_verify};

/// Counterfactual-credit training and verification harness for small
/// cooperative agent teams.
#[derive(Parser)]
#[command(name = "ccpo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training experiment from a config file.
    Train {
        /// Flat key/value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: runs/<run-id>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite against the theory oracles.
    Verify {
        /// One of: unbiasedness, variance, baseline, kl, trust-region,
        /// pivotality, all.
        #[arg(long)]
        suite: String,
        /// Seed for the suite's random draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON summary path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train counterfactual and shared credit on the same task and seed and
    /// emit paired learning curves.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run one config while varying a single key over a list of values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Config key to vary, e.g. trainer.learning_rate.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out } => cmd_train(&config, out.as_deref()),
        Command::Verify { suite, seed, out } => cmd_verify(&suite, seed, out.as_deref()),
        Command::Compare { config, out } => cmd_compare(&config, out.as_deref()),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => cmd_sweep(&config, &param, &values, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
