//! JSON encoding of [`Message`] values.
//!
//! Floats are written in shortest round-trip form and parsed back
//! bit-exactly.

use super::message::{Message, MESSAGE_TYPES};
use super::ProtocolError;

pub fn encode(msg: &Message) -> Vec<u8> {
    serde_json::to_vec(msg).expect("messages always serialize")
}

/// Decodes one message. When `dim` is given, every model/delta payload
/// must carry exactly that many values.
pub fn decode(bytes: &[u8], dim: Option<usize>) -> Result<Message, ProtocolError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let ty = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ProtocolError::Malformed("missing string field `type`".into()))?;
    if !MESSAGE_TYPES.contains(&ty) {
        return Err(ProtocolError::UnknownType(ty.to_owned()));
    }
    let msg: Message = serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if let Some(dim) = dim {
        check_dim(&msg, dim)?;
    }
    Ok(msg)
}

pub fn check_dim(msg: &Message, dim: usize) -> Result<(), ProtocolError> {
    for v in msg.vectors() {
        if v.dim() != dim {
            return Err(ProtocolError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    if let Message::Curate {
        dim: declared,
        validation_set,
        ..
    } = msg
    {
        if let Some(row) = validation_set.features.iter().find(|r| r.len() != *declared) {
            return Err(ProtocolError::DimensionMismatch {
                expected: *declared,
                got: row.len(),
            });
        }
    }
    Ok(())
}
