use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hbflow::counterterms::structure;
use hbflow::experiments::{load_config, output_root, run_experiment};
use hbflow::Error;

#[derive(Parser)]
#[command(name = "hbflow", version, about = "Heavy-ball flows, counter terms and implicit-bias experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config. Outputs go under $HBFLOW_OUTPUT_ROOT.
    Run {
        config: PathBuf,
        /// Maximum number of sweep cells run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the counter-term structure for an order as JSON.
    DumpCt {
        #[arg(long)]
        alpha: usize,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=4))]
        sigma: u8,
    },
}

/// Prints a line, ignoring a closed pipe.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, jobs } => run_experiment(&config, &output_root(), jobs).map(|dir| emit(&dir.display().to_string())),
        Command::Validate { config } => load_config(&config).map(|(cfg, hash)| {
            emit(&format!("ok: {} ({})", cfg.experiment.name(), &hash[..12]));
        }),
        Command::DumpCt { alpha, sigma } => serde_json::to_string_pretty(&structure(alpha, sigma as usize))
            .map(|s| emit(&s))
            .map_err(Error::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
