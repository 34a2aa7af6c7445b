use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, ExperimentConfig, Role, Scenario};
use super::data::{bootstrap_sample, load_csv_dataset, partition_even, prepare, synth_dataset, Prepared};
use super::HarnessError;
use crate::adversary::{inversion_attacker, poisoner, reconstruction_error, InversionAttacker};
use crate::broker::{BrokerService, LearningTask};
use crate::client::{Client, ClientConfig, ClientOutcome, HonestStrategy, UpdateStrategy};
use crate::numeric::{classification_error, HyperParams, LabeledDataset, ParameterVector};
use crate::privacy::{Epsilon, PrivacyConfig};
use crate::protocol::inproc::{SimConfig, Simulation};
use crate::protocol::transport::{run_party, TcpConnection, TcpServer, TransportKind};
use crate::protocol::{Action, Message, Party};

pub const MODEL_ID: &str = "experiment";

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Virtual milliseconds in-process, wall milliseconds over TCP.
    pub wall_ms: u64,
    pub iteration: u64,
    /// Error of the sampled model on the full train shard.
    pub training_error: f64,
    /// Error on the curator's validation set.
    pub validation_error: f64,
    /// Per-client difficulty; `None` once a client is no longer registered.
    pub difficulties: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRecord {
    pub client: usize,
    pub role: Role,
    pub iteration: u64,
    pub time_ms: u64,
    pub new_difficulty: u32,
    pub blacklisted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub index: usize,
    pub role: Role,
    pub k: u32,
    pub outcome: String,
    pub updates_applied: u64,
    pub penalties: usize,
    pub final_difficulty: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub complete: bool,
    pub iterations: u64,
    pub end_time_ms: u64,
    pub final_validation_error: f64,
    pub final_training_error: f64,
    pub test_error: f64,
    pub reconstruction_error: Option<f64>,
    /// Disagreement between the final global model and the victim reference.
    pub baseline_reconstruction_error: Option<f64>,
    pub penalties: Vec<PenaltyRecord>,
    pub clients: Vec<ClientSummary>,
    pub timed_out: bool,
    pub client_errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    pub final_model: ParameterVector,
    pub shadow_model: Option<ParameterVector>,
    pub victim_optimal: Option<ParameterVector>,
}

impl ExperimentReport {
    /// First sampled iteration whose training error is at most `threshold`.
    pub fn iterations_to_error(&self, threshold: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.training_error <= threshold).map(|r| r.iteration)
    }

    pub fn first_penalty_iteration(&self, role: Role) -> Option<u64> {
        self.summary.penalties.iter().filter(|p| p.role == role).map(|p| p.iteration).min()
    }

    /// Clients of `role` with at least one penalty.
    pub fn penalized(&self, role: Role) -> usize {
        self.summary.clients.iter().filter(|c| c.role == role && c.penalties > 0).count()
    }

    pub fn clients_with_role(&self, role: Role) -> usize {
        self.summary.clients.iter().filter(|c| c.role == role).count()
    }

    pub fn metrics_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let n = self.summary.clients.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "wall_ms".to_owned(),
            "iteration".to_owned(),
            "training_error".to_owned(),
            "validation_error".to_owned(),
        ];
        header.extend((0..n).map(|i| format!("difficulty_client{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.wall_ms.to_string(),
                r.iteration.to_string(),
                r.training_error.to_string(),
                r.validation_error.to_string(),
            ];
            rec.extend(r.difficulties.iter().map(|d| d.map(|d| d.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))
    }

    /// Writes `metrics.csv`, `summary.json` and `model.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv()?).map_err(io_err)?;
        let summary = serde_json::to_string_pretty(&self.summary).map_err(|e| HarnessError::Io(e.to_string()))?;
        fs::write(dir.join("summary.json"), summary).map_err(io_err)?;
        let model = serde_json::json!({
            "model_id": MODEL_ID,
            "iteration": self.summary.iterations,
            "model": self.final_model,
        });
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&model).expect("json value")).map_err(io_err)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

fn io_err(e: std::io::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// Independent, reproducible sub-seed for stream `stream`, member `index`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise-free (or private, per `epsilon`) single-machine SGD with the same
/// batch sampling and learning-rate schedule a lone client would see.
pub fn train_centralized(
    data: &LabeledDataset,
    hyper: HyperParams,
    epsilon: Epsilon,
    iterations: u64,
    seed: u64,
) -> ParameterVector {
    let mut s = HonestStrategy::new(data.clone(), hyper, epsilon, seed);
    let mut w = ParameterVector::zeros(data.dim());
    for t in 0..iterations {
        let delta = s.compute(&w, t);
        w = w.add(&delta).expect("same dimension");
    }
    w
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let raw = match &cfg.dataset {
        DatasetSource::Csv { path } => load_csv_dataset(path)?,
        DatasetSource::Synthetic { d, n, separation } => synth_dataset(*d, *n, *separation, derive_seed(cfg.seed, 1, 0))?,
    };
    prepare(raw, cfg.train_frac, derive_seed(cfg.seed, 2, 0))
}

enum Agent {
    Honest(Client<HonestStrategy>),
    Attacker(InversionAttacker),
}

impl Agent {
    fn token(&self) -> Option<&str> {
        match self {
            Agent::Honest(c) => c.token(),
            Agent::Attacker(c) => c.token(),
        }
    }

    fn outcome(&self) -> ClientOutcome {
        match self {
            Agent::Honest(c) => c.outcome(),
            Agent::Attacker(c) => c.outcome(),
        }
    }

    fn updates_applied(&self) -> u64 {
        match self {
            Agent::Honest(c) => c.updates_applied(),
            Agent::Attacker(c) => c.updates_applied(),
        }
    }
}

impl Party for Agent {
    fn start(&mut self) -> Action {
        match self {
            Agent::Honest(c) => c.start(),
            Agent::Attacker(c) => c.start(),
        }
    }

    fn on_reply(&mut self, reply: Message) -> Action {
        match self {
            Agent::Honest(c) => c.on_reply(reply),
            Agent::Attacker(c) => c.on_reply(reply),
        }
    }

    fn on_wake(&mut self) -> Action {
        match self {
            Agent::Honest(c) => c.on_wake(),
            Agent::Attacker(c) => c.on_wake(),
        }
    }
}

struct Member {
    role: Role,
    k: u32,
    agent: Agent,
}

struct Roster {
    members: Vec<Member>,
    victim: Option<(LabeledDataset, HyperParams, u64)>,
}

fn build_roster(cfg: &ExperimentConfig, train: &LabeledDataset) -> Result<Roster, HarnessError> {
    let total = cfg.total_clients();
    let shards = match cfg.scenario {
        Scenario::Inversion => Some(partition_even(train, total)?),
        _ => None,
    };
    let cap = cfg.broker.difficulty_cap;
    let mut members = Vec::with_capacity(total);
    let mut victim = None;
    let mut index = 0usize;
    for g in &cfg.groups {
        for _ in 0..g.count {
            let seed = derive_seed(cfg.seed, 10, index as u64);
            let data = match &shards {
                Some(s) => s[index].clone(),
                None => bootstrap_sample(train, cfg.shard_size.unwrap_or(train.len()), derive_seed(cfg.seed, 11, index as u64))?,
            };
            let data = if g.role == Role::Victim { data.flip_labels() } else { data };
            let hyper = HyperParams {
                batch_size: g.batch_size.unwrap_or(cfg.hyper.batch_size),
                ..cfg.hyper
            };
            if g.role == Role::Victim {
                victim = Some((data.clone(), hyper, seed));
            }
            let cc = ClientConfig {
                model_id: MODEL_ID.into(),
                privacy: PrivacyConfig {
                    epsilon: g.epsilon,
                    min_clients: g.k,
                },
                hyper,
                data,
                seed,
                max_local_iterations: None,
                difficulty_cap: cap,
            };
            let agent = match g.role {
                Role::Attacker => Agent::Attacker(inversion_attacker(g.attack_mode, &cc)),
                Role::Poisoner => Agent::Honest(poisoner(&cc)),
                Role::Honest | Role::Victim | Role::Bystander => Agent::Honest(Client::honest(&cc)),
            };
            members.push(Member {
                role: g.role,
                k: g.k,
                agent,
            });
            index += 1;
        }
    }
    Ok(Roster { members, victim })
}

/// Runs one experiment and returns everything it measured. A run that
/// hits the virtual time limit or loses a TCP client still returns a
/// report; see [`Summary::timed_out`] and [`Summary::client_errors`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let vs = cfg.validation_size.min(data.train.len());
    let validation_set = data.train.select(&(0..vs).collect::<Vec<_>>())?;
    let mut roster = build_roster(cfg, &data.train)?;
    let total = roster.members.len();
    let task = LearningTask {
        model_id: MODEL_ID.into(),
        dim: data.train.dim(),
        min_clients: cfg.min_clients.unwrap_or(total as u32),
        max_clients: total as u32,
        max_iterations: cfg.max_iterations,
        validation_set,
    };
    let broker_cfg = cfg.effective_broker();
    let mut service = BrokerService::new(broker_cfg.clone(), "inproc");
    service.curate(task)?;

    let (service, end_time_ms, timed_out, client_errors) = match cfg.transport.kind {
        TransportKind::InProcess => {
            let defaults = SimConfig::default();
            let sim_cfg = SimConfig {
                latency_ms_max: cfg.transport.latency_ms_max,
                seed: derive_seed(cfg.seed, 3, cfg.transport.seed),
                max_time_ms: cfg.max_time_ms.unwrap_or(defaults.max_time_ms),
                hash_cost_ms: cfg.hash_cost_ms.unwrap_or(defaults.hash_cost_ms),
                ..defaults
            };
            let mut sim = Simulation::new(service, sim_cfg);
            let mut parties: Vec<&mut dyn Party> = roster.members.iter_mut().map(|m| &mut m.agent as &mut dyn Party).collect();
            let report = sim.run(&mut parties, |_, _| {});
            (sim.into_endpoint(), report.end_time_ms, report.timed_out, Vec::new())
        }
        TransportKind::Tcp => run_tcp(cfg, service, &mut roster, broker_cfg)?,
    };

    let broker = service.broker().expect("curated above");
    let token_index: HashMap<&str, usize> = roster
        .members
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.agent.token().map(|t| (t, i)))
        .collect();
    let rows = broker
        .metrics()
        .iter()
        .map(|m| {
            let mut difficulties = vec![None; total];
            for (token, d) in &m.difficulties {
                if let Some(&i) = token_index.get(token.as_str()) {
                    difficulties[i] = Some(*d);
                }
            }
            Ok(MetricsRow {
                wall_ms: m.time_ms,
                iteration: m.iteration,
                training_error: classification_error(&m.model, &data.train)?,
                validation_error: m.validation_error,
                difficulties,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let penalties: Vec<PenaltyRecord> = broker
        .penalties()
        .iter()
        .filter_map(|p| {
            let &client = token_index.get(p.client_token.as_str())?;
            Some(PenaltyRecord {
                client,
                role: roster.members[client].role,
                iteration: p.iteration,
                time_ms: p.time_ms,
                new_difficulty: p.new_difficulty,
                blacklisted: p.blacklisted,
            })
        })
        .collect();
    let clients = roster
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| ClientSummary {
            index: i,
            role: m.role,
            k: m.k,
            outcome: m.agent.outcome().to_string(),
            updates_applied: m.agent.updates_applied(),
            penalties: penalties.iter().filter(|p| p.client == i).count(),
            // expired clients leave the registry; fall back to the last sampled value
            final_difficulty: m
                .agent
                .token()
                .and_then(|t| broker.client(t))
                .map(|c| c.difficulty)
                .or_else(|| rows.iter().rev().find_map(|r| r.difficulties[i])),
        })
        .collect();

    let final_model = broker.model().clone();
    let shadow_model = roster.members.iter().find_map(|m| match &m.agent {
        Agent::Attacker(a) => Some(a.strategy().shadow().model().clone()),
        Agent::Honest(_) => None,
    });
    let victim_optimal = roster.victim.as_ref().map(|(d, hyper, seed)| {
        let iters = cfg.victim_iterations.unwrap_or(cfg.max_iterations);
        train_centralized(d, *hyper, Epsilon::Infinite, iters, derive_seed(*seed, 12, 0))
    });
    let (reconstruction, baseline) = match (&shadow_model, &victim_optimal) {
        (Some(s), Some(v)) => (
            Some(reconstruction_error(s, v, &data.test)?),
            Some(reconstruction_error(&final_model, v, &data.test)?),
        ),
        _ => (None, None),
    };
    let summary = Summary {
        scenario: cfg.scenario,
        complete: broker.is_complete(),
        iterations: broker.iteration(),
        end_time_ms,
        final_validation_error: broker.validation_error(&final_model),
        final_training_error: classification_error(&final_model, &data.train)?,
        test_error: classification_error(&final_model, &data.test)?,
        reconstruction_error: reconstruction,
        baseline_reconstruction_error: baseline,
        penalties,
        clients,
        timed_out,
        client_errors,
    };
    Ok(ExperimentReport {
        rows,
        summary,
        final_model,
        shadow_model,
        victim_optimal,
    })
}

type TcpOutcome = (BrokerService, u64, bool, Vec<String>);

fn run_tcp(
    cfg: &ExperimentConfig,
    service: BrokerService,
    roster: &mut Roster,
    broker_cfg: crate::broker::BrokerConfig,
) -> Result<TcpOutcome, HarnessError> {
    let started = Instant::now();
    let endpoint = Arc::new(Mutex::new(service));
    let mut transport = cfg.transport.clone();
    transport.seed = derive_seed(cfg.seed, 3, cfg.transport.seed);
    let server = TcpServer::bind("127.0.0.1:0", Arc::clone(&endpoint), transport)?;
    let addr = server.local_addr()?;
    endpoint.lock().expect("endpoint mutex").set_address(addr.to_string());
    let stop = server.stop_handle();
    let server_thread = thread::spawn(move || server.serve());

    let members = std::mem::take(&mut roster.members);
    let workers: Vec<_> = members
        .into_iter()
        .map(|mut m| {
            thread::spawn(move || {
                let mut conn = TcpConnection::new(addr).with_retry(50, Duration::from_millis(10));
                let result = run_party(&mut m.agent, &mut conn);
                (m, result)
            })
        })
        .collect();
    let mut errors = Vec::new();
    for (i, w) in workers.into_iter().enumerate() {
        let (m, result) = w.join().map_err(|_| HarnessError::Runtime(format!("client {i} panicked")))?;
        if let Err(e) = result {
            errors.push(format!("client {i}: {e}"));
        }
        roster.members.push(m);
    }
    stop.store(true, Ordering::Relaxed);
    server_thread
        .join()
        .map_err(|_| HarnessError::Runtime("broker thread panicked".into()))??;
    let service = std::mem::replace(
        &mut *endpoint.lock().expect("endpoint mutex"),
        BrokerService::new(broker_cfg, ""),
    );
    Ok((service, started.elapsed().as_millis() as u64, false, errors))
}

/// Runs, writes the outputs into `out`, and fails if the run did not finish
/// cleanly (time limit, lost clients).
pub fn run_experiment_to(cfg: &ExperimentConfig, out: impl AsRef<Path>) -> Result<ExperimentReport, HarnessError> {
    let report = run_experiment(cfg)?;
    report.write_to(out)?;
    if report.summary.timed_out {
        return Err(HarnessError::Runtime("virtual time limit reached before the run finished".into()));
    }
    if !report.summary.client_errors.is_empty() {
        return Err(HarnessError::Runtime(report.summary.client_errors.join("; ")));
    }
    Ok(report)
}
