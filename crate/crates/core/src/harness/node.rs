//! Standalone broker and client processes over TCP, as driven by the
//! `broker serve` and `client run` commands.

use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::Role;
use super::data::load_csv_dataset;
use super::HarnessError;
use crate::adversary::poisoner;
use crate::broker::{BrokerConfig, BrokerService, LearningTask};
use crate::client::{Client, ClientConfig, ClientOutcome};
use crate::numeric::{HyperParams, ParameterVector};
use crate::pow::DEFAULT_DIFFICULTY_CAP;
use crate::privacy::{Epsilon, PrivacyConfig};
use crate::protocol::transport::{run_party, TcpConnection, TcpServer, TransportConfig};

fn default_listen() -> String {
    "127.0.0.1:7700".into()
}

fn default_grace_ms() -> u64 {
    2000
}

/// A task curated at startup from a local validation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub model_id: String,
    pub min_clients: u32,
    pub max_clients: u32,
    pub max_iterations: u64,
    /// Features plus trailing label; an intercept column is appended.
    pub validation_csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerNodeConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub broker: BrokerConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    /// Without a task the broker waits for a `curate` message.
    #[serde(default)]
    pub task: Option<TaskSpec>,
    /// Where to write `model.json` once training completes.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// How long to keep answering polls after completion.
    #[serde(default = "default_grace_ms")]
    pub grace_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrokerNodeReport {
    pub model_id: String,
    pub iteration: u64,
    pub validation_error: f64,
    pub model: ParameterVector,
    pub penalties: usize,
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

impl BrokerNodeConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let cfg: Self = load_json(path.as_ref())?;
        cfg.broker.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn resolve(addr: &str) -> Result<SocketAddr, HarnessError> {
    addr.to_socket_addrs()
        .map_err(|e| HarnessError::Config(format!("address {addr}: {e}")))?
        .next()
        .ok_or_else(|| HarnessError::Config(format!("address {addr} resolves to nothing")))
}

/// Binds, curates the configured task (if any), serves until the model is
/// complete plus the grace period, then writes and returns the result.
/// `on_ready` receives the bound address before any client is accepted.
pub fn serve_broker(
    cfg: &BrokerNodeConfig,
    on_ready: impl FnOnce(SocketAddr),
) -> Result<BrokerNodeReport, HarnessError> {
    let mut service = BrokerService::new(cfg.broker.clone(), "");
    if let Some(wanted) = &cfg.task {
        let validation_set = load_csv_dataset(&wanted.validation_csv)?;
        let task = LearningTask {
            model_id: wanted.model_id.clone(),
            dim: validation_set.dim(),
            min_clients: wanted.min_clients,
            max_clients: wanted.max_clients,
            max_iterations: wanted.max_iterations,
            validation_set,
        };
        service.curate(task).map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let endpoint = Arc::new(Mutex::new(service));
    let server = TcpServer::bind(resolve(&cfg.listen)?, Arc::clone(&endpoint), cfg.transport.clone())?;
    let addr = server.local_addr()?;
    endpoint.lock().expect("endpoint mutex").set_address(addr.to_string());
    let stop = server.stop_handle();
    let server_thread = thread::spawn(move || server.serve());
    on_ready(addr);

    let mut completed_at: Option<Instant> = None;
    loop {
        if server_thread.is_finished() {
            break;
        }
        let complete = endpoint
            .lock()
            .expect("endpoint mutex")
            .broker()
            .is_some_and(|b| b.is_complete());
        match completed_at {
            None if complete => completed_at = Some(Instant::now()),
            Some(t) if t.elapsed() >= Duration::from_millis(cfg.grace_ms) => break,
            _ => {}
        }
        thread::sleep(Duration::from_millis(20));
    }
    stop.store(true, Ordering::Relaxed);
    server_thread
        .join()
        .map_err(|_| HarnessError::Runtime("server thread panicked".into()))??;

    let service = endpoint.lock().expect("endpoint mutex");
    let broker = service
        .broker()
        .ok_or_else(|| HarnessError::Runtime("server stopped before any model was curated".into()))?;
    let published = broker.publish_model()?;
    let report = BrokerNodeReport {
        model_id: broker.task().model_id.clone(),
        iteration: published.iteration,
        validation_error: published.validation_error,
        model: published.model,
        penalties: broker.penalties().len(),
    };
    if let Some(out) = &cfg.out {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
        let path = out.join("model.json");
        let text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Io(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}

fn default_k() -> u32 {
    1
}

fn default_retries() -> u32 {
    50
}

fn default_retry_ms() -> u64 {
    10
}

fn default_cap() -> u32 {
    DEFAULT_DIFFICULTY_CAP
}

fn default_role() -> Role {
    Role::Honest
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientNodeConfig {
    pub broker_addr: String,
    pub model_id: String,
    /// Features plus trailing label; an intercept column is appended.
    pub data_csv: PathBuf,
    /// `honest` or `poisoner`.
    #[serde(default = "default_role")]
    pub role: Role,
    #[serde(default = "Epsilon::infinite")]
    pub epsilon: Epsilon,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_local_iterations: Option<u64>,
    #[serde(default = "default_cap")]
    pub difficulty_cap: u32,
    #[serde(default = "default_retries")]
    pub connect_retries: u32,
    /// Reconnect and backoff delay, in milliseconds.
    #[serde(default = "default_retry_ms")]
    pub retry_ms: u64,
}

impl ClientNodeConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let cfg: Self = load_json(path.as_ref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !matches!(self.role, Role::Honest | Role::Poisoner) {
            return Err(HarnessError::Config(format!(
                "role {} is not available as a standalone client",
                self.role.as_str()
            )));
        }
        if self.k == 0 {
            return Err(HarnessError::Config("k must be >= 1".into()));
        }
        self.hyper.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientNodeReport {
    pub outcome: String,
    pub updates_sent: u64,
    pub updates_applied: u64,
    pub total_work: u64,
    pub last_model: Option<ParameterVector>,
}

/// Joins the broker and trains until the model completes or the client
/// stops for another reason. Fails unless the run ended normally.
pub fn run_client(cfg: &ClientNodeConfig) -> Result<ClientNodeReport, HarnessError> {
    cfg.validate()?;
    let data = load_csv_dataset(&cfg.data_csv)?;
    let client_cfg = ClientConfig {
        model_id: cfg.model_id.clone(),
        privacy: PrivacyConfig { epsilon: cfg.epsilon, min_clients: cfg.k },
        hyper: cfg.hyper,
        data,
        seed: cfg.seed,
        max_local_iterations: cfg.max_local_iterations,
        difficulty_cap: cfg.difficulty_cap,
    };
    let mut client: Client<_> = match cfg.role {
        Role::Poisoner => poisoner(&client_cfg),
        _ => Client::honest(&client_cfg),
    };
    let mut conn =
        TcpConnection::new(resolve(&cfg.broker_addr)?).with_retry(cfg.connect_retries, Duration::from_millis(cfg.retry_ms));
    run_party(&mut client, &mut conn)?;
    let report = ClientNodeReport {
        outcome: client.outcome().to_string(),
        updates_sent: client.updates_sent(),
        updates_applied: client.updates_applied(),
        total_work: client.total_work(),
        last_model: client.last_model().cloned(),
    };
    match client.outcome() {
        ClientOutcome::Complete | ClientOutcome::LocalBudgetReached => Ok(report),
        other => Err(HarnessError::Runtime(format!("client stopped: {other}"))),
    }
}
