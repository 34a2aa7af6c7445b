//! Experiment harness: data preparation, scenario orchestration, metrics
//! output and the figure grids.

pub mod config;
pub mod data;
pub mod figures;
pub mod node;
pub mod run;

use thiserror::Error;

pub use config::{ClientGroup, DatasetSource, ExperimentConfig, Role, Scenario};
pub use data::{bootstrap_sample, load_csv_dataset, partition_even, prepare, split_train_test, synth_dataset, Prepared};
pub use run::{run_experiment, run_experiment_to, train_centralized, ExperimentReport, MetricsRow, Summary};

use crate::broker::BrokerError;
use crate::numeric::NumericError;
use crate::protocol::ProtocolError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl HarnessError {
    /// Process exit code: 2 for bad configuration or input data, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Data(_) => 2,
            _ => 3,
        }
    }
}
