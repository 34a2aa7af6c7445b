//! The broker: admission control, minimum-client gating, asynchronous
//! aggregation, disguised RONI validation rounds and adaptive proof of work.
//!
//! [`Broker`] is a synchronous state machine driven by
//! [`Broker::handle`]; every transport funnels requests through it one at a
//! time.

mod registry;
mod service;
mod validation;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{classification_error, LabeledDataset, NumericError, ParameterVector};
use crate::pow::{self, Puzzle, Solution, DEFAULT_DIFFICULTY_CAP};
use crate::protocol::{ConnId, ErrorCode, Message, Status};

pub use registry::ClientRecord;
pub use service::BrokerService;
pub use validation::ValidationRound;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrokerError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid broker config: {0}")]
    InvalidConfig(String),
    #[error("model {0:?} already curated")]
    DuplicateModel(String),
    #[error("model not complete: {iteration}/{max_iterations} iterations")]
    NotComplete { iteration: u64, max_iterations: u64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningTask {
    pub model_id: String,
    pub dim: usize,
    pub min_clients: u32,
    pub max_clients: u32,
    pub max_iterations: u64,
    pub validation_set: LabeledDataset,
}

impl LearningTask {
    pub fn validate(&self) -> Result<(), BrokerError> {
        let bad = |m: String| Err(BrokerError::InvalidTask(m));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if self.min_clients == 0 || self.min_clients > self.max_clients {
            return bad(format!(
                "need 1 <= min_clients <= max_clients, got {}..{}",
                self.min_clients, self.max_clients
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1".into());
        }
        if self.validation_set.dim() != self.dim {
            return bad(format!(
                "validation set has {} features, task dim is {}",
                self.validation_set.dim(),
                self.dim
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrokerConfig {
    pub admission_difficulty: u32,
    pub update_difficulty: u32,
    pub difficulty_cap: u32,
    /// Probability per applied update of starting a validation round.
    pub validation_rate: f64,
    /// Penalty fires when a client's accumulated RONI drops below `-roni_threshold`.
    pub roni_threshold: f64,
    pub client_timeout_ms: u64,
    pub metrics_every: u64,
    pub seed: u64,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            admission_difficulty: 4,
            update_difficulty: 0,
            difficulty_cap: DEFAULT_DIFFICULTY_CAP,
            validation_rate: 0.1,
            roni_threshold: 0.02,
            client_timeout_ms: 30_000,
            metrics_every: 10,
            seed: 0,
        }
    }
}

impl BrokerConfig {
    pub fn validate(&self) -> Result<(), BrokerError> {
        let bad = |m: String| Err(BrokerError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.validation_rate) {
            return bad(format!("validation_rate {} not in [0, 1]", self.validation_rate));
        }
        if !(self.roni_threshold >= 0.0 && self.roni_threshold.is_finite()) {
            return bad(format!("roni_threshold {}", self.roni_threshold));
        }
        if self.admission_difficulty > self.difficulty_cap || self.update_difficulty > self.difficulty_cap {
            return bad("difficulties must not exceed difficulty_cap".into());
        }
        if self.difficulty_cap > pow::MAX_DIGITS {
            return bad(format!("difficulty_cap above {}", pow::MAX_DIGITS));
        }
        if self.metrics_every == 0 {
            return bad("metrics_every must be >= 1".into());
        }
        Ok(())
    }
}

/// Model snapshot taken every `metrics_every` applied updates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSample {
    pub time_ms: u64,
    pub iteration: u64,
    pub validation_error: f64,
    pub model: ParameterVector,
    /// `(client_token, difficulty)` for every registered client.
    pub difficulties: Vec<(String, u32)>,
}

impl MetricsSample {
    /// `wall_ms,iteration,validation_error`
    pub fn csv_line(&self) -> String {
        format!("{},{},{}", self.time_ms, self.iteration, self.validation_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEvent {
    pub client_token: String,
    pub iteration: u64,
    pub time_ms: u64,
    pub new_difficulty: u32,
    pub blacklisted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoniScore {
    pub client_token: String,
    pub iteration: u64,
    pub score: f64,
    pub total: f64,
}

/// Final model handed back to the curator.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedModel {
    pub model: ParameterVector,
    pub iteration: u64,
    pub validation_error: f64,
}

pub struct Broker {
    task: LearningTask,
    config: BrokerConfig,
    model: ParameterVector,
    iteration: u64,
    started: bool,
    complete: bool,
    clients: BTreeMap<String, ClientRecord>,
    provisional: HashMap<ConnId, Puzzle>,
    round: Option<ValidationRound>,
    nonce_rng: ChaCha8Rng,
    coin_rng: ChaCha8Rng,
    token_rng: ChaCha8Rng,
    metrics: Vec<MetricsSample>,
    penalties: Vec<PenaltyEvent>,
    roni_log: Vec<RoniScore>,
    expired: Vec<String>,
}

impl Broker {
    /// Creates the broker for one task with a zero initial model.
    pub fn curate(task: LearningTask, config: BrokerConfig) -> Result<Self, BrokerError> {
        task.validate()?;
        config.validate()?;
        let seed = config.seed;
        Ok(Self {
            model: ParameterVector::zeros(task.dim),
            task,
            config,
            iteration: 0,
            started: false,
            complete: false,
            clients: BTreeMap::new(),
            provisional: HashMap::new(),
            round: None,
            nonce_rng: ChaCha8Rng::seed_from_u64(seed),
            coin_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
            token_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(2)),
            metrics: Vec::new(),
            penalties: Vec::new(),
            roni_log: Vec::new(),
            expired: Vec::new(),
        })
    }

    pub fn task(&self) -> &LearningTask {
        &self.task
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    pub fn model(&self) -> &ParameterVector {
        &self.model
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn clients(&self) -> impl Iterator<Item = &ClientRecord> {
        self.clients.values()
    }

    pub fn client(&self, token: &str) -> Option<&ClientRecord> {
        self.clients.get(token)
    }

    pub fn validation_round(&self) -> Option<&ValidationRound> {
        self.round.as_ref()
    }

    pub fn penalties(&self) -> &[PenaltyEvent] {
        &self.penalties
    }

    pub fn roni_scores(&self) -> &[RoniScore] {
        &self.roni_log
    }

    pub fn expired_clients(&self) -> &[String] {
        &self.expired
    }

    pub fn metrics(&self) -> &[MetricsSample] {
        &self.metrics
    }

    pub fn drain_metrics(&mut self) -> Vec<MetricsSample> {
        std::mem::take(&mut self.metrics)
    }

    pub fn validation_error(&self, model: &ParameterVector) -> f64 {
        classification_error(model, &self.task.validation_set).expect("validated task dimension")
    }

    /// Live, admitted, non-blacklisted clients.
    pub fn live_clients(&self) -> usize {
        self.clients.values().filter(|c| c.counts_toward_gating()).count()
    }

    /// Training may proceed iff enough live clients exist for the curator's
    /// minimum and for every live client's own `k`.
    pub fn gating_check(&self) -> bool {
        let live = self.clients.values().filter(|c| c.counts_toward_gating());
        let n = live.clone().count() as u64;
        let max_k = live.map(|c| u64::from(c.k)).max().unwrap_or(u64::MAX);
        n >= u64::from(self.task.min_clients) && n >= max_k
    }

    fn refresh_gating(&mut self) -> bool {
        let active = self.gating_check();
        if active {
            self.started = true;
        }
        active
    }

    fn issue_puzzle(&mut self, difficulty: u32) -> Puzzle {
        pow::new_puzzle(&mut self.nonce_rng, difficulty.min(self.config.difficulty_cap), self.config.difficulty_cap)
            .expect("difficulty clamped to cap")
    }

    fn new_token(&mut self) -> String {
        loop {
            let bytes: [u8; 16] = self.token_rng.random();
            let token = hex::encode(bytes);
            if !self.clients.contains_key(&token) {
                return token;
            }
        }
    }

    /// Handles one request from connection `conn` at time `now_ms`.
    pub fn handle(&mut self, conn: ConnId, msg: Message, now_ms: u64) -> Message {
        self.expire_clients(now_ms);
        match msg {
            Message::Join { model_id } => self.check_model(&model_id).unwrap_or_else(|| self.handle_join(conn)),
            Message::Solve {
                model_id,
                solution,
                k,
                dim,
            } => self
                .check_model(&model_id)
                .unwrap_or_else(|| self.handle_solve(conn, &solution, k, dim, now_ms)),
            Message::Poll {
                model_id,
                client_token,
            } => self
                .check_model(&model_id)
                .unwrap_or_else(|| self.handle_poll(&client_token, now_ms)),
            Message::GradientUpdate {
                model_id,
                client_token,
                solution,
                delta,
            } => self
                .check_model(&model_id)
                .unwrap_or_else(|| self.handle_gradient_update(&client_token, &solution, delta, now_ms)),
            other => Message::error(
                ErrorCode::Malformed,
                format!("{} is not a broker request", other.type_name()),
            ),
        }
    }

    fn check_model(&self, model_id: &str) -> Option<Message> {
        (model_id != self.task.model_id)
            .then(|| Message::error(ErrorCode::NotStarted, format!("no model {model_id:?} on this broker")))
    }

    pub fn handle_join(&mut self, conn: ConnId) -> Message {
        if self.complete {
            return Message::error(ErrorCode::ModelComplete, "training finished");
        }
        if self.clients.len() as u64 >= u64::from(self.task.max_clients) {
            return Message::error(ErrorCode::NotAdmitted, "max clients reached");
        }
        let puzzle = self.issue_puzzle(self.config.admission_difficulty);
        let reply = Message::Puzzle {
            model_id: self.task.model_id.clone(),
            nonce_hex: puzzle.nonce_hex(),
            difficulty: puzzle.difficulty(),
        };
        self.provisional.insert(conn, puzzle);
        reply
    }

    pub fn handle_solve(&mut self, conn: ConnId, solution: &str, k: u32, dim: usize, now_ms: u64) -> Message {
        if self.complete {
            return Message::error(ErrorCode::ModelComplete, "training finished");
        }
        let Some(puzzle) = self.provisional.get(&conn) else {
            return Message::error(ErrorCode::NotAdmitted, "no admission puzzle issued on this connection");
        };
        let Ok(solution) = Solution::from_wire(solution) else {
            return Message::error(ErrorCode::BadSolution, "solution too long");
        };
        if !pow::verify(puzzle, &solution) {
            return Message::error(ErrorCode::BadSolution, "admission solution does not verify");
        }
        if dim != self.task.dim {
            return Message::error(
                ErrorCode::SchemaMismatch,
                format!("client has {dim} features, task needs {}", self.task.dim),
            );
        }
        if k == 0 {
            return Message::error(ErrorCode::Malformed, "k must be >= 1");
        }
        if self.clients.len() as u64 >= u64::from(self.task.max_clients) {
            return Message::error(ErrorCode::NotAdmitted, "max clients reached");
        }
        self.provisional.remove(&conn);
        let token = self.new_token();
        self.clients.insert(
            token.clone(),
            ClientRecord::admitted(token.clone(), k, self.config.update_difficulty, now_ms),
        );
        let (status, model, iteration, puzzle) = self.serve_client_state(&token);
        Message::SolveAck {
            client_token: token,
            status,
            model,
            iteration,
            nonce_hex: puzzle.as_ref().map(Puzzle::nonce_hex),
            difficulty: puzzle.as_ref().map(Puzzle::difficulty),
        }
    }

    /// Status plus (when active) the model to train on and the client's
    /// outstanding update puzzle.
    fn serve_client_state(&mut self, token: &str) -> (Status, Option<ParameterVector>, Option<u64>, Option<Puzzle>) {
        if self.complete {
            return (Status::Complete, Some(self.model.clone()), Some(self.iteration), None);
        }
        if !self.refresh_gating() {
            return (Status::Waiting, None, None, None);
        }
        let model = self.model_for(token);
        let difficulty = self.clients[token].difficulty;
        let puzzle = match self.clients[token].outstanding_puzzle.clone() {
            Some(p) => p,
            None => {
                let p = self.issue_puzzle(difficulty);
                self.clients.get_mut(token).expect("known client").outstanding_puzzle = Some(p.clone());
                p
            }
        };
        (Status::Active, Some(model), Some(self.iteration), Some(puzzle))
    }

    /// The model this client should see next: the snapshot while a
    /// validation response is owed, otherwise the live model.
    fn model_for(&mut self, token: &str) -> ParameterVector {
        match self.round.as_mut() {
            Some(round) if round.is_awaiting(token) => round.snapshot().clone(),
            Some(round) => {
                if round.take_for_serving(token) {
                    round.snapshot().clone()
                } else {
                    self.model.clone()
                }
            }
            None => self.model.clone(),
        }
    }

    pub fn handle_poll(&mut self, token: &str, now_ms: u64) -> Message {
        if self.complete {
            return Message::PollAck {
                status: Status::Complete,
                model: Some(self.model.clone()),
                iteration: Some(self.iteration),
                nonce_hex: None,
                difficulty: None,
            };
        }
        let Some(record) = self.clients.get_mut(token) else {
            return Message::error(ErrorCode::NotAdmitted, "unknown client token");
        };
        if record.blacklisted {
            return Message::error(ErrorCode::Blacklisted, "client is blacklisted");
        }
        record.last_seen = now_ms;
        let (status, model, iteration, puzzle) = self.serve_client_state(token);
        Message::PollAck {
            status,
            model,
            iteration,
            nonce_hex: puzzle.as_ref().map(Puzzle::nonce_hex),
            difficulty: puzzle.as_ref().map(Puzzle::difficulty),
        }
    }

    pub fn handle_gradient_update(&mut self, token: &str, solution: &str, delta: ParameterVector, now_ms: u64) -> Message {
        if self.complete {
            return Message::error(ErrorCode::ModelComplete, "training finished");
        }
        match self.clients.get(token) {
            None => return Message::error(ErrorCode::NotAdmitted, "unknown client token"),
            Some(record) if record.blacklisted => {
                return Message::error(ErrorCode::Blacklisted, "client is blacklisted")
            }
            Some(_) => {}
        }
        if delta.dim() != self.task.dim {
            return Message::error(
                ErrorCode::SchemaMismatch,
                format!("delta has {} values, task needs {}", delta.dim(), self.task.dim),
            );
        }
        if !self.refresh_gating() {
            return if self.started {
                Message::error(ErrorCode::PausedBelowMin, "too few live clients; training paused")
            } else {
                Message::error(ErrorCode::NotStarted, "training has not started")
            };
        }
        let verified = match (&self.clients[token].outstanding_puzzle, Solution::from_wire(solution)) {
            (Some(puzzle), Ok(sol)) => pow::verify(puzzle, &sol),
            _ => false,
        };
        if !verified {
            return Message::error(ErrorCode::BadSolution, "update solution does not verify");
        }
        let Ok(updated) = self.model.add(&delta) else {
            return Message::error(ErrorCode::Malformed, "update produces a non-finite model");
        };

        {
            let record = self.clients.get_mut(token).expect("checked above");
            record.outstanding_puzzle = None;
            record.last_seen = now_ms;
        }
        if self.round.as_ref().is_some_and(|r| r.is_awaiting(token)) {
            self.score_validation_response(token, &delta, now_ms);
        }
        self.model = updated;
        self.iteration += 1;
        if self.iteration.is_multiple_of(self.config.metrics_every) {
            let validation_error = self.validation_error(&self.model);
            self.metrics.push(MetricsSample {
                time_ms: now_ms,
                iteration: self.iteration,
                validation_error,
                model: self.model.clone(),
                difficulties: self.difficulty_snapshot(),
            });
        }

        // the coin is drawn on every applied update so the random stream does
        // not depend on whether a round happens to be pending
        self.close_round_if_done();
        let coin: f64 = self.coin_rng.random();
        if self.round.is_none() && coin < self.config.validation_rate {
            self.start_validation_round(now_ms);
        }

        if self.iteration >= self.task.max_iterations {
            self.complete = true;
        }

        let model = self.model_for(token);
        let difficulty = self.clients[token].difficulty;
        let puzzle = self.issue_puzzle(difficulty);
        self.clients.get_mut(token).expect("checked above").outstanding_puzzle = Some(puzzle.clone());
        Message::UpdateAck {
            model,
            iteration: self.iteration,
            nonce_hex: puzzle.nonce_hex(),
            difficulty: puzzle.difficulty(),
        }
    }

    /// Snapshots the live model and owes every live client one disguised
    /// validation response against it.
    pub fn start_validation_round(&mut self, now_ms: u64) {
        if self.round.is_some() {
            return;
        }
        let members: Vec<String> = self
            .clients
            .values()
            .filter(|c| c.counts_toward_gating())
            .map(|c| c.token.clone())
            .collect();
        if members.is_empty() {
            return;
        }
        let baseline = self.validation_error(&self.model);
        self.round = Some(ValidationRound::new(self.model.clone(), baseline, members, now_ms));
    }

    /// RONI of one response: `err(M_s) - err(M_s + delta)` on the validation set.
    pub fn score_validation_response(&mut self, token: &str, delta: &ParameterVector, now_ms: u64) -> f64 {
        let round = self.round.as_mut().expect("caller checked a round is pending");
        round.complete(token);
        let candidate = round.snapshot().add(delta).expect("dimension checked");
        let score = round.baseline_error() - classification_error(&candidate, &self.task.validation_set).expect("dim");
        let record = self.clients.get_mut(token).expect("round members are registered");
        record.roni_total += score;
        self.roni_log.push(RoniScore {
            client_token: token.to_owned(),
            iteration: self.iteration,
            score,
            total: record.roni_total,
        });
        if record.roni_total < -self.config.roni_threshold {
            self.penalize(token, now_ms);
        }
        score
    }

    /// Raises the client's per-update difficulty by one and resets its
    /// accumulated score; reaching the cap blacklists it.
    pub fn penalize(&mut self, token: &str, now_ms: u64) {
        let cap = self.config.difficulty_cap;
        let Some(record) = self.clients.get_mut(token) else {
            return;
        };
        record.difficulty = (record.difficulty + 1).min(cap);
        record.roni_total = 0.0;
        if record.difficulty == cap {
            record.blacklisted = true;
        }
        self.penalties.push(PenaltyEvent {
            client_token: token.to_owned(),
            iteration: self.iteration,
            time_ms: now_ms,
            new_difficulty: record.difficulty,
            blacklisted: record.blacklisted,
        });
        if let Some(round) = self.round.as_mut().filter(|_| record.blacklisted) {
            round.remove(token);
        }
    }

    fn close_round_if_done(&mut self) {
        if self.round.as_ref().is_some_and(ValidationRound::is_finished) {
            self.round = None;
        }
    }

    /// Drops clients silent for longer than the timeout and closes a
    /// validation round that has waited that long.
    pub fn expire_clients(&mut self, now_ms: u64) -> Vec<String> {
        let timeout = self.config.client_timeout_ms;
        let stale: Vec<String> = self
            .clients
            .values()
            .filter(|c| now_ms.saturating_sub(c.last_seen) > timeout)
            .map(|c| c.token.clone())
            .collect();
        for token in &stale {
            self.clients.remove(token);
            if let Some(round) = self.round.as_mut() {
                round.remove(token);
            }
        }
        self.expired.extend(stale.iter().cloned());
        if self.round.as_ref().is_some_and(|r| now_ms.saturating_sub(r.started_at()) > timeout) {
            self.round = None;
        }
        self.close_round_if_done();
        stale
    }

    pub fn publish_model(&self) -> Result<PublishedModel, BrokerError> {
        if !self.complete {
            return Err(BrokerError::NotComplete {
                iteration: self.iteration,
                max_iterations: self.task.max_iterations,
            });
        }
        Ok(PublishedModel {
            model: self.model.clone(),
            iteration: self.iteration,
            validation_error: self.validation_error(&self.model),
        })
    }

    pub fn difficulty_snapshot(&self) -> Vec<(String, u32)> {
        self.clients.values().map(|c| (c.token.clone(), c.difficulty)).collect()
    }
}
