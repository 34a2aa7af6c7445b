//! Isotropic multivariate Laplace noise and the differentially private
//! update.
//!
//! The noise density is `p(z) ∝ exp(-(eps/2) * ||z||)`. Its radius is
//! `Gamma(d, 2/eps)` distributed and its direction is uniform on the sphere,
//! so samples are drawn exactly as `radius * direction` with
//! `E[||z||] = 2d / eps`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::numeric::{self, Example, HyperParams, NumericError, ParameterVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("epsilon must be positive or infinite, got {0}")]
    InvalidEpsilon(f64),
    #[error("dimension must be >= 1")]
    ZeroDimension,
    #[error("min_clients must be >= 1")]
    InvalidMinClients,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Privacy level. `Infinite` disables noise entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Finite(f64),
    Infinite,
}

impl Epsilon {
    pub fn new(value: f64) -> Result<Self, PrivacyError> {
        if value == f64::INFINITY {
            Ok(Self::Infinite)
        } else if value > 0.0 && value.is_finite() {
            Ok(Self::Finite(value))
        } else {
            Err(PrivacyError::InvalidEpsilon(value))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn infinite() -> Self {
        Self::Infinite
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Epsilon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "none" => Ok(Self::Infinite),
            other => {
                let v: f64 = other.parse().map_err(|e| format!("bad epsilon {s:?}: {e}"))?;
                Self::new(v).map_err(|e| e.to_string())
            }
        }
    }
}

// JSON has no infinity literal: finite values are numbers, the sentinel is "inf".
impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => serializer.serialize_f64(*v),
            Self::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Epsilon::new(v).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Per-client privacy preferences: noise level and the minimum number of
/// clients that must be live before any update is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub epsilon: Epsilon,
    pub min_clients: u32,
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        if let Epsilon::Finite(v) = self.epsilon {
            Epsilon::new(v)?;
        }
        if self.min_clients == 0 {
            return Err(PrivacyError::InvalidMinClients);
        }
        Ok(())
    }
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            epsilon: Epsilon::Infinite,
            min_clients: 1,
        }
    }
}

/// Draws one d-dimensional isotropic Laplace vector with scale `2/epsilon`.
pub fn sample_isotropic_laplace<R: Rng + ?Sized>(
    dim: usize,
    epsilon: Epsilon,
    rng: &mut R,
) -> Result<ParameterVector, PrivacyError> {
    if dim == 0 {
        return Err(PrivacyError::ZeroDimension);
    }
    let eps = match epsilon {
        Epsilon::Infinite => return Ok(ParameterVector::zeros(dim)),
        Epsilon::Finite(v) => Epsilon::new(v)?.value(),
    };
    let radius_dist = Gamma::new(dim as f64, 2.0 / eps).map_err(|_| PrivacyError::InvalidEpsilon(eps))?;
    // a zero Gaussian draw has probability zero, but retry rather than divide by it
    let direction = loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            break g.into_iter().map(|v| v / norm).collect::<Vec<_>>();
        }
    };
    let radius: f64 = radius_dist.sample(rng);
    Ok(ParameterVector::new(direction.into_iter().map(|u| u * radius).collect())?)
}

/// Private model update from one batch at iteration `t`:
/// `-eta_t * (lambda * w + mean_grad + z / b)` with one noise draw `z`.
///
/// With `Epsilon::Infinite` no randomness is consumed and the result is
/// exactly `-eta_t * logistic_gradient(w, batch, lambda)`.
pub fn dp_delta<R: Rng + ?Sized>(
    w_global: &ParameterVector,
    batch: &[Example<'_>],
    hyper: &HyperParams,
    epsilon: Epsilon,
    t: u64,
    rng: &mut R,
) -> Result<ParameterVector, PrivacyError> {
    let eta = numeric::learning_rate(t, hyper.eta0)?;
    let grad = numeric::logistic_gradient(w_global, batch, hyper.lambda)?;
    if epsilon.is_infinite() {
        return Ok(grad.scale(-eta)?);
    }
    let noise = sample_isotropic_laplace(w_global.dim(), epsilon, rng)?;
    let b = batch.len() as f64;
    let noisy = grad
        .as_slice()
        .iter()
        .zip(noise.as_slice())
        .map(|(g, z)| (g + z / b) * -eta)
        .collect();
    Ok(ParameterVector::new(noisy)?)
}
