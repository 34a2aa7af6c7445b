//! Wire protocol: message schema, JSON codec, length-prefixed framing and
//! the two transports (deterministic in-process, TCP).

pub mod codec;
pub mod framing;
pub mod inproc;
pub mod message;
pub mod transport;

use thiserror::Error;

pub use codec::{decode, encode};
pub use framing::{read_frame, write_frame, MAX_FRAME_LEN};
pub use message::{ErrorCode, Message, Status, ValidationSet};
pub use transport::{Action, ConnId, Endpoint, Party};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("payload has {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("frame of {0} bytes exceeds the 16 MiB limit")]
    Oversize(usize),
    #[error("zero-length frame")]
    EmptyFrame,
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for ProtocolError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
