use serde::{Deserialize, Serialize};

use crate::numeric::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Waiting,
    Active,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadSolution,
    NotAdmitted,
    NotStarted,
    PausedBelowMin,
    SchemaMismatch,
    ModelComplete,
    Blacklisted,
    Malformed,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BadSolution => "bad_solution",
            Self::NotAdmitted => "not_admitted",
            Self::NotStarted => "not_started",
            Self::PausedBelowMin => "paused_below_min",
            Self::SchemaMismatch => "schema_mismatch",
            Self::ModelComplete => "model_complete",
            Self::Blacklisted => "blacklisted",
            Self::Malformed => "malformed",
        }
    }
}

/// Curator validation data as carried by `curate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

/// One protocol unit. The JSON form is an object with a `type` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Curate {
        model_id: String,
        dim: usize,
        min_clients: u32,
        max_clients: u32,
        max_iterations: u64,
        validation_set: ValidationSet,
    },
    CurateAck {
        model_id: String,
        address: String,
    },
    Join {
        model_id: String,
    },
    Puzzle {
        model_id: String,
        nonce_hex: String,
        difficulty: u32,
    },
    Solve {
        model_id: String,
        solution: String,
        k: u32,
        dim: usize,
    },
    SolveAck {
        client_token: String,
        status: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ParameterVector>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iteration: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nonce_hex: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        difficulty: Option<u32>,
    },
    Poll {
        model_id: String,
        client_token: String,
    },
    PollAck {
        status: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ParameterVector>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iteration: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nonce_hex: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        difficulty: Option<u32>,
    },
    GradientUpdate {
        model_id: String,
        client_token: String,
        solution: String,
        delta: ParameterVector,
    },
    UpdateAck {
        model: ParameterVector,
        iteration: u64,
        nonce_hex: String,
        difficulty: u32,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Message {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::Error {
            code,
            message: message.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Curate { .. } => "curate",
            Self::CurateAck { .. } => "curate_ack",
            Self::Join { .. } => "join",
            Self::Puzzle { .. } => "puzzle",
            Self::Solve { .. } => "solve",
            Self::SolveAck { .. } => "solve_ack",
            Self::Poll { .. } => "poll",
            Self::PollAck { .. } => "poll_ack",
            Self::GradientUpdate { .. } => "gradient_update",
            Self::UpdateAck { .. } => "update_ack",
            Self::Error { .. } => "error",
        }
    }

    /// Every model-sized vector carried by this message.
    pub fn vectors(&self) -> Vec<&ParameterVector> {
        match self {
            Self::SolveAck { model, .. } | Self::PollAck { model, .. } => model.iter().collect(),
            Self::GradientUpdate { delta, .. } => vec![delta],
            Self::UpdateAck { model, .. } => vec![model],
            _ => Vec::new(),
        }
    }
}

pub const MESSAGE_TYPES: [&str; 11] = [
    "curate",
    "curate_ack",
    "join",
    "puzzle",
    "solve",
    "solve_ack",
    "poll",
    "poll_ack",
    "gradient_update",
    "update_ack",
    "error",
];
