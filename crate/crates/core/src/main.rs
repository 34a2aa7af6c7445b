use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use brokered::harness::figures;
use brokered::harness::node::{run_client, serve_broker, BrokerNodeConfig, ClientNodeConfig};
use brokered::harness::{run_experiment_to, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "brokered", version, about = "Brokered private multi-party learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a broker.
    Broker {
        #[command(subcommand)]
        action: BrokerAction,
    },
    /// Run a client against a broker.
    Client {
        #[command(subcommand)]
        action: ClientAction,
    },
    /// Run experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum BrokerAction {
    /// Serve until the curated model completes.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum ClientAction {
    /// Join, train and exit when the model completes.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run one experiment and write metrics.csv, summary.json and model.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every figure grid and write one CSV per figure.
    Figures {
        #[arg(long)]
        out: PathBuf,
        /// Seeds per grid cell.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Broker { action: BrokerAction::Serve { config } } => {
            let cfg = BrokerNodeConfig::load(&config)?;
            let report = serve_broker(&cfg, |addr| eprintln!("broker listening on {addr}"))?;
            print_json(&report)
        }
        Command::Client { action: ClientAction::Run { config } } => {
            let cfg = ClientNodeConfig::load(&config)?;
            print_json(&run_client(&cfg)?)
        }
        Command::Experiment { action: ExperimentAction::Run { config, out } } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment_to(&cfg, &out)?;
            print_json(&report.summary)
        }
        Command::Experiment { action: ExperimentAction::Figures { out, seeds } } => {
            if seeds == 0 {
                return Err(HarnessError::Config("--seeds must be >= 1".into()));
            }
            let seeds: Vec<u64> = (0..seeds).collect();
            for fig in figures::write_all(&out, &seeds)? {
                eprintln!("wrote {}", out.join(format!("{}.csv", fig.name)).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
