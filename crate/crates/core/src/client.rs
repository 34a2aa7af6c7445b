//! Protocol client: admission, polling until training is active, then the
//! pull / subsample / private delta / proof of work / push loop.
//!
//! [`Client`] is a sans-io [`Party`]; what it contributes is decided by an
//! [`UpdateStrategy`]. [`HonestStrategy`] computes differentially private
//! SGD deltas on local data; attack clients plug in their own strategies.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numeric::{Example, HyperParams, LabeledDataset, ParameterVector};
use crate::pow::{self, Puzzle, DEFAULT_DIFFICULTY_CAP};
use crate::privacy::{dp_delta, Epsilon, PrivacyConfig};
use crate::protocol::{Action, ErrorCode, Message, Party, Status};

/// Decides the delta a client pushes for the model it was just served.
pub trait UpdateStrategy {
    /// `iteration` is the broker's applied-update count when the model was served.
    fn compute(&mut self, model: &ParameterVector, iteration: u64) -> ParameterVector;

    /// The last computed delta was refused by the broker and not applied.
    fn rejected(&mut self) {}
}

/// Subsamples `b` rows uniformly with replacement and returns a private
/// SGD delta at learning-rate step `iteration + 1`.
pub struct HonestStrategy {
    data: LabeledDataset,
    hyper: HyperParams,
    epsilon: Epsilon,
    rng: ChaCha8Rng,
}

impl HonestStrategy {
    pub fn new(data: LabeledDataset, hyper: HyperParams, epsilon: Epsilon, seed: u64) -> Self {
        Self {
            data,
            hyper,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.hyper.batch_size.min(self.data.len())
    }

    pub fn sample_batch(&mut self) -> Vec<usize> {
        let n = self.data.len();
        (0..self.batch_size()).map(|_| self.rng.random_range(0..n)).collect()
    }
}

impl UpdateStrategy for HonestStrategy {
    fn compute(&mut self, model: &ParameterVector, iteration: u64) -> ParameterVector {
        let idx = self.sample_batch();
        let batch: Vec<Example<'_>> = idx.iter().map(|&i| self.data.example(i)).collect();
        dp_delta(model, &batch, &self.hyper, self.epsilon, iteration + 1, &mut self.rng)
            .expect("client data dimension matches the task")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub model_id: String,
    pub privacy: PrivacyConfig,
    pub hyper: HyperParams,
    pub data: LabeledDataset,
    pub seed: u64,
    pub max_local_iterations: Option<u64>,
    /// Puzzles at or above this difficulty mean the broker has blacklisted us.
    pub difficulty_cap: u32,
}

impl ClientConfig {
    pub fn new(model_id: impl Into<String>, data: LabeledDataset, seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            privacy: PrivacyConfig::default(),
            hyper: HyperParams::default(),
            data,
            seed,
            max_local_iterations: None,
            difficulty_cap: DEFAULT_DIFFICULTY_CAP,
        }
    }

    pub fn honest_strategy(&self) -> HonestStrategy {
        HonestStrategy::new(self.data.clone(), self.hyper, self.privacy.epsilon, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientOutcome {
    Running,
    /// The broker published the final model.
    Complete,
    /// Our per-update difficulty reached the cap or the broker said so.
    Blacklisted,
    LocalBudgetReached,
    /// The broker refused us for a reason we cannot recover from.
    Refused(ErrorCode),
}

impl fmt::Display for ClientOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientOutcome::Running => f.write_str("running"),
            ClientOutcome::Complete => f.write_str("complete"),
            ClientOutcome::Blacklisted => f.write_str("blacklisted"),
            ClientOutcome::LocalBudgetReached => f.write_str("local_budget_reached"),
            ClientOutcome::Refused(code) => write!(f, "refused: {}", code.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Joining,
    Solving,
    Waiting,
    Training,
    Finished,
}

pub struct Client<S> {
    model_id: String,
    k: u32,
    dim: usize,
    difficulty_cap: u32,
    max_local_iterations: Option<u64>,
    strategy: S,
    phase: Phase,
    token: Option<String>,
    outcome: ClientOutcome,
    updates_sent: u64,
    updates_applied: u64,
    last_model: Option<ParameterVector>,
    total_work: u64,
}

impl Client<HonestStrategy> {
    pub fn honest(cfg: &ClientConfig) -> Self {
        Client::with_strategy(cfg, cfg.honest_strategy())
    }
}

impl<S: UpdateStrategy> Client<S> {
    pub fn with_strategy(cfg: &ClientConfig, strategy: S) -> Self {
        Self {
            model_id: cfg.model_id.clone(),
            k: cfg.privacy.min_clients,
            dim: cfg.data.dim(),
            difficulty_cap: cfg.difficulty_cap,
            max_local_iterations: cfg.max_local_iterations,
            strategy,
            phase: Phase::Joining,
            token: None,
            outcome: ClientOutcome::Running,
            updates_sent: 0,
            updates_applied: 0,
            last_model: None,
            total_work: 0,
        }
    }

    pub fn strategy(&self) -> &S {
        &self.strategy
    }

    pub fn into_strategy(self) -> S {
        self.strategy
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn outcome(&self) -> ClientOutcome {
        self.outcome
    }

    /// Gradient updates the broker acknowledged.
    pub fn updates_applied(&self) -> u64 {
        self.updates_applied
    }

    pub fn updates_sent(&self) -> u64 {
        self.updates_sent
    }

    /// Most recent model received from the broker.
    pub fn last_model(&self) -> Option<&ParameterVector> {
        self.last_model.as_ref()
    }

    pub fn total_work(&self) -> u64 {
        self.total_work
    }

    fn finish(&mut self, outcome: ClientOutcome) -> Action {
        self.phase = Phase::Finished;
        self.outcome = outcome;
        Action::Done
    }

    fn poll(&self) -> Action {
        Action::send(Message::Poll {
            model_id: self.model_id.clone(),
            client_token: self.token.clone().unwrap_or_default(),
        })
    }

    fn train_on(&mut self, model: ParameterVector, iteration: u64, nonce_hex: &str, difficulty: u32) -> Action {
        self.phase = Phase::Training;
        self.last_model = Some(model.clone());
        if self.max_local_iterations.is_some_and(|m| self.updates_sent >= m) {
            return self.finish(ClientOutcome::LocalBudgetReached);
        }
        if difficulty >= self.difficulty_cap {
            return self.finish(ClientOutcome::Blacklisted);
        }
        let Ok(puzzle) = Puzzle::from_hex(nonce_hex, difficulty) else {
            return self.finish(ClientOutcome::Refused(ErrorCode::Malformed));
        };
        let delta = self.strategy.compute(&model, iteration);
        let solved = pow::solve(&puzzle);
        self.total_work += solved.attempts;
        self.updates_sent += 1;
        Action::Send {
            msg: Message::GradientUpdate {
                model_id: self.model_id.clone(),
                client_token: self.token.clone().unwrap_or_default(),
                solution: solved.solution.to_wire(),
                delta,
            },
            work: solved.attempts,
        }
    }

    fn on_status(
        &mut self,
        status: Status,
        model: Option<ParameterVector>,
        iteration: Option<u64>,
        nonce_hex: Option<String>,
        difficulty: Option<u32>,
    ) -> Action {
        match (status, model, iteration, nonce_hex, difficulty) {
            (Status::Complete, model, ..) => {
                if model.is_some() {
                    self.last_model = model;
                }
                self.finish(ClientOutcome::Complete)
            }
            (Status::Active, Some(model), Some(it), Some(nonce), Some(d)) => self.train_on(model, it, &nonce, d),
            _ => {
                self.phase = Phase::Waiting;
                Action::Backoff
            }
        }
    }
}

impl<S: UpdateStrategy> Party for Client<S> {
    fn start(&mut self) -> Action {
        self.phase = Phase::Joining;
        Action::send(Message::Join {
            model_id: self.model_id.clone(),
        })
    }

    fn on_reply(&mut self, reply: Message) -> Action {
        match reply {
            Message::Puzzle {
                nonce_hex, difficulty, ..
            } if self.phase == Phase::Joining => {
                let Ok(puzzle) = Puzzle::from_hex(&nonce_hex, difficulty) else {
                    return self.finish(ClientOutcome::Refused(ErrorCode::Malformed));
                };
                let solved = pow::solve(&puzzle);
                self.total_work += solved.attempts;
                self.phase = Phase::Solving;
                Action::Send {
                    msg: Message::Solve {
                        model_id: self.model_id.clone(),
                        solution: solved.solution.to_wire(),
                        k: self.k,
                        dim: self.dim,
                    },
                    work: solved.attempts,
                }
            }
            Message::SolveAck {
                client_token,
                status,
                model,
                iteration,
                nonce_hex,
                difficulty,
            } => {
                self.token = Some(client_token);
                self.on_status(status, model, iteration, nonce_hex, difficulty)
            }
            Message::PollAck {
                status,
                model,
                iteration,
                nonce_hex,
                difficulty,
            } => self.on_status(status, model, iteration, nonce_hex, difficulty),
            Message::UpdateAck {
                model,
                iteration,
                nonce_hex,
                difficulty,
            } => {
                self.updates_applied += 1;
                self.train_on(model, iteration, &nonce_hex, difficulty)
            }
            Message::Error { code, .. } => {
                if self.phase == Phase::Training {
                    self.strategy.rejected();
                }
                match code {
                    ErrorCode::ModelComplete => self.finish(ClientOutcome::Complete),
                    ErrorCode::Blacklisted => self.finish(ClientOutcome::Blacklisted),
                    ErrorCode::PausedBelowMin | ErrorCode::NotStarted | ErrorCode::BadSolution
                        if self.token.is_some() =>
                    {
                        self.phase = Phase::Waiting;
                        Action::Backoff
                    }
                    ErrorCode::BadSolution => self.start(),
                    other => self.finish(ClientOutcome::Refused(other)),
                }
            }
            _ => self.finish(ClientOutcome::Refused(ErrorCode::Malformed)),
        }
    }

    fn on_wake(&mut self) -> Action {
        match self.phase {
            Phase::Finished => Action::Done,
            _ if self.token.is_some() => self.poll(),
            _ => self.start(),
        }
    }
}
