//! Attack clients: the model-inversion attacker with its shadow model, the
//! label-flip poisoner and sybil groups.
//!
//! The inversion attacker differences consecutive global models it is
//! served and subtracts its own contribution; whatever is left is what
//! everyone else pushed in between. With one other client that is exactly
//! the victim's update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{Client, ClientConfig, HonestStrategy, UpdateStrategy};
use crate::numeric::{disagreement, LabeledDataset, NumericError, ParameterVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("a sybil group needs at least one member")]
    EmptySybilGroup,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// `m_new - m_old - own_delta`: the part of the step not explained by the attacker.
pub fn recover_victim_delta(
    m_new: &ParameterVector,
    m_old: &ParameterVector,
    own_delta: &ParameterVector,
) -> Result<ParameterVector, NumericError> {
    m_new.sub(m_old)?.sub(own_delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowModel {
    pub m_shadow: ParameterVector,
    pub last_seen_global: ParameterVector,
    pub last_own_delta: ParameterVector,
}

impl ShadowModel {
    /// Starts from the broker's public initial model.
    pub fn new(initial: ParameterVector) -> Self {
        let dim = initial.dim();
        Self {
            m_shadow: initial.clone(),
            last_seen_global: initial,
            last_own_delta: ParameterVector::zeros(dim),
        }
    }

    pub fn model(&self) -> &ParameterVector {
        &self.m_shadow
    }

    /// Folds a newly served global model into the shadow and returns the
    /// recovered foreign delta.
    pub fn observe(&mut self, m_new: &ParameterVector) -> Result<ParameterVector, NumericError> {
        let recovered = recover_victim_delta(m_new, &self.last_seen_global, &self.last_own_delta)?;
        self.m_shadow = self.m_shadow.add(&recovered)?;
        self.last_seen_global = m_new.clone();
        self.last_own_delta = ParameterVector::zeros(m_new.dim());
        Ok(recovered)
    }

    pub fn record_own(&mut self, delta: ParameterVector) {
        self.last_own_delta = delta;
    }

    /// The last own delta never reached the global model.
    pub fn own_rejected(&mut self) {
        self.last_own_delta = ParameterVector::zeros(self.last_own_delta.dim());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Contribute real gradients on the attacker's own shard.
    HonestGradients,
    /// Contribute the exact zero vector.
    ZeroGradients,
}

/// Contributes per `mode` while maintaining a shadow model of everyone else.
pub struct InversionStrategy {
    mode: AttackMode,
    honest: HonestStrategy,
    shadow: ShadowModel,
    recovered: Vec<ParameterVector>,
}

impl InversionStrategy {
    pub fn new(mode: AttackMode, honest: HonestStrategy, dim: usize) -> Self {
        Self {
            mode,
            honest,
            shadow: ShadowModel::new(ParameterVector::zeros(dim)),
            recovered: Vec::new(),
        }
    }

    pub fn mode(&self) -> AttackMode {
        self.mode
    }

    pub fn shadow(&self) -> &ShadowModel {
        &self.shadow
    }

    pub fn into_shadow(self) -> ShadowModel {
        self.shadow
    }

    /// Every recovered foreign delta, in observation order.
    pub fn recovered(&self) -> &[ParameterVector] {
        &self.recovered
    }
}

impl UpdateStrategy for InversionStrategy {
    fn compute(&mut self, model: &ParameterVector, iteration: u64) -> ParameterVector {
        let recovered = self.shadow.observe(model).expect("served model has the task dimension");
        self.recovered.push(recovered);
        let delta = match self.mode {
            AttackMode::HonestGradients => self.honest.compute(model, iteration),
            AttackMode::ZeroGradients => ParameterVector::zeros(model.dim()),
        };
        self.shadow.record_own(delta.clone());
        delta
    }

    fn rejected(&mut self) {
        self.shadow.own_rejected();
    }
}

pub type InversionAttacker = Client<InversionStrategy>;

/// An attacker observing through an ordinary client; `cfg` supplies its
/// own shard (used in honest mode), seed and iteration budget.
pub fn inversion_attacker(mode: AttackMode, cfg: &ClientConfig) -> InversionAttacker {
    let strategy = InversionStrategy::new(mode, cfg.honest_strategy(), cfg.data.dim());
    Client::with_strategy(cfg, strategy)
}

/// Fraction of test rows on which the two models predict differently.
pub fn reconstruction_error(
    shadow: &ParameterVector,
    victim_optimal: &ParameterVector,
    test: &LabeledDataset,
) -> Result<f64, NumericError> {
    disagreement(shadow, victim_optimal, test)
}

/// Flips every label; features are untouched.
pub fn make_poisoned_dataset(data: &LabeledDataset) -> LabeledDataset {
    data.flip_labels()
}

/// An honest-looking client training on label-flipped data.
pub fn poisoner(cfg: &ClientConfig) -> Client<HonestStrategy> {
    let mut cfg = cfg.clone();
    cfg.data = make_poisoned_dataset(&cfg.data);
    Client::honest(&cfg)
}

/// Always contributes the zero vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroStrategy;

impl UpdateStrategy for ZeroStrategy {
    fn compute(&mut self, model: &ParameterVector, _iteration: u64) -> ParameterVector {
        ParameterVector::zeros(model.dim())
    }
}

/// `count` independent clients built from one template. Member `i` gets
/// seed `template.seed + i` and pays its own admission work.
pub fn sybil_group<S: UpdateStrategy>(
    count: usize,
    template: &ClientConfig,
    mut make: impl FnMut(&ClientConfig) -> Client<S>,
) -> Result<Vec<Client<S>>, AdversaryError> {
    if count == 0 {
        return Err(AdversaryError::EmptySybilGroup);
    }
    Ok((0..count)
        .map(|i| {
            let mut cfg = template.clone();
            cfg.seed = template.seed.wrapping_add(i as u64);
            make(&cfg)
        })
        .collect())
}

/// A group of label-flip poisoners sharing one poisoned dataset.
pub fn poisoner_sybils(count: usize, template: &ClientConfig) -> Result<Vec<Client<HonestStrategy>>, AdversaryError> {
    let mut shared = template.clone();
    shared.data = make_poisoned_dataset(&template.data);
    sybil_group(count, &shared, Client::honest)
}
