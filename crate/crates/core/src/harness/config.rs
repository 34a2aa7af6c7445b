use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::adversary::AttackMode;
use crate::broker::BrokerConfig;
use crate::numeric::HyperParams;
use crate::privacy::Epsilon;
use crate::protocol::transport::{TransportConfig, TransportKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Convergence,
    Scaling,
    Inversion,
    Poisoning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv { path: PathBuf },
    Synthetic { d: usize, n: usize, separation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    Poisoner,
    Victim,
    Attacker,
    Bystander,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Honest => "honest",
            Role::Poisoner => "poisoner",
            Role::Victim => "victim",
            Role::Attacker => "attacker",
            Role::Bystander => "bystander",
        }
    }
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

/// `count` identically configured clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientGroup {
    pub role: Role,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "Epsilon::infinite")]
    pub epsilon: Epsilon,
    /// Overrides the experiment-wide batch size.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "one_u32")]
    pub k: u32,
    #[serde(default = "default_attack_mode")]
    pub attack_mode: AttackMode,
}

fn default_attack_mode() -> AttackMode {
    AttackMode::HonestGradients
}

impl ClientGroup {
    pub fn new(role: Role, count: usize) -> Self {
        Self {
            role,
            count,
            epsilon: Epsilon::Infinite,
            batch_size: None,
            k: 1,
            attack_mode: AttackMode::HonestGradients,
        }
    }

    pub fn epsilon(mut self, epsilon: Epsilon) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn batch_size(mut self, b: usize) -> Self {
        self.batch_size = Some(b);
        self
    }

    pub fn k(mut self, k: u32) -> Self {
        self.k = k;
        self
    }

    pub fn attack_mode(mut self, mode: AttackMode) -> Self {
        self.attack_mode = mode;
        self
    }
}

fn default_train_frac() -> f64 {
    0.7
}

fn default_validation_size() -> usize {
    500
}

fn default_max_iterations() -> u64 {
    1000
}

/// One experiment run. Loaded from JSON with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub dataset: DatasetSource,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    /// Curator validation rows, taken from the train shard.
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    /// Bootstrap sample size per client; defaults to the train shard size.
    /// Ignored for inversion, where the train shard is partitioned evenly.
    #[serde(default)]
    pub shard_size: Option<usize>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    #[serde(default)]
    pub min_clients: Option<u32>,
    /// Total client count; must match the groups when given.
    #[serde(default)]
    pub clients: Option<usize>,
    #[serde(default)]
    pub hyper: HyperParams,
    pub groups: Vec<ClientGroup>,
    #[serde(default)]
    pub broker: BrokerConfig,
    /// Overrides `broker.client_timeout_ms`. Defaults to 1000 virtual ms
    /// in-process and the broker default over TCP.
    #[serde(default)]
    pub client_timeout_ms: Option<u64>,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub seed: u64,
    /// Iterations of the centralized victim-only reference model.
    #[serde(default)]
    pub victim_iterations: Option<u64>,
    /// Virtual-time limit for in-process runs.
    #[serde(default)]
    pub max_time_ms: Option<u64>,
    /// Virtual milliseconds per proof-of-work attempt in-process.
    #[serde(default)]
    pub hash_cost_ms: Option<f64>,
}

impl ExperimentConfig {
    pub fn synthetic(scenario: Scenario, d: usize, n: usize, separation: f64) -> Self {
        Self {
            scenario,
            dataset: DatasetSource::Synthetic { d, n, separation },
            train_frac: default_train_frac(),
            validation_size: default_validation_size(),
            shard_size: None,
            max_iterations: default_max_iterations(),
            min_clients: None,
            clients: None,
            hyper: HyperParams::default(),
            groups: Vec::new(),
            broker: BrokerConfig::default(),
            client_timeout_ms: None,
            transport: TransportConfig::default(),
            seed: 0,
            victim_iterations: None,
            max_time_ms: None,
            hash_cost_ms: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn total_clients(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    pub fn count(&self, role: Role) -> usize {
        self.groups.iter().filter(|g| g.role == role).map(|g| g.count).sum()
    }

    /// Broker settings after applying the experiment-level overrides.
    pub fn effective_broker(&self) -> BrokerConfig {
        let mut b = self.broker.clone();
        b.seed = super::run::derive_seed(self.seed, 4, self.broker.seed);
        b.client_timeout_ms = match (self.client_timeout_ms, self.transport.kind) {
            (Some(t), _) => t,
            (None, TransportKind::InProcess) => 1000,
            (None, TransportKind::Tcp) => b.client_timeout_ms,
        };
        b
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.groups.is_empty() || self.groups.iter().any(|g| g.count == 0) {
            return bad("every client group needs count >= 1, and at least one group is required".into());
        }
        if self.clients.is_some_and(|c| c != self.total_clients()) {
            return bad(format!(
                "clients = {} but groups add up to {}",
                self.clients.unwrap_or_default(),
                self.total_clients()
            ));
        }
        if self.groups.iter().any(|g| g.k == 0) {
            return bad("k must be >= 1".into());
        }
        if self.groups.iter().any(|g| g.batch_size == Some(0)) {
            return bad("batch_size must be >= 1".into());
        }
        self.hyper.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.effective_broker()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.hash_cost_ms.is_some_and(|c| !(c >= 0.0 && c.is_finite())) {
            return bad("hash_cost_ms must be finite and >= 0".into());
        }
        if self.max_iterations == 0 || self.validation_size == 0 || self.shard_size == Some(0) {
            return bad("max_iterations, validation_size and shard_size must be >= 1".into());
        }
        if self.min_clients.is_some_and(|m| m == 0 || m as usize > self.total_clients()) {
            return bad("min_clients must be in 1..=total clients".into());
        }
        match &self.dataset {
            DatasetSource::Csv { path } if !path.exists() => {
                return bad(format!("dataset {} does not exist", path.display()))
            }
            DatasetSource::Synthetic { d, n, .. } if *d == 0 || *n < 2 => {
                return bad("synthetic data needs d >= 1 and n >= 2".into())
            }
            _ => {}
        }
        let (victims, attackers) = (self.count(Role::Victim), self.count(Role::Attacker));
        match self.scenario {
            Scenario::Inversion => {
                if victims != 1 || attackers != 1 {
                    return bad("inversion needs exactly one victim and one attacker".into());
                }
                if self.count(Role::Poisoner) > 0 {
                    return bad("inversion does not use poisoners".into());
                }
            }
            _ if victims + attackers > 0 => {
                return bad("victim and attacker roles are only valid for inversion".into());
            }
            Scenario::Convergence | Scenario::Scaling if self.count(Role::Poisoner) > 0 => {
                return bad("poisoners are only valid for the poisoning scenario".into());
            }
            _ => {}
        }
        Ok(())
    }
}
