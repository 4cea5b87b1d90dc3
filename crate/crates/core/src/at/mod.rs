//! AT command protocol: command serialization, response line classification,
//! transports and the single-flight command engine.

pub mod command;
pub mod engine;
pub mod quirks;
pub mod response;
pub mod transport;

use thiserror::Error;

pub use command::{serialize, Arg, AtCommand, CommandKind};
pub use engine::{AtEngine, AtResponse, EngineConfig, EngineStats, Payload, UrcSubscription};
pub use quirks::QuirkProfile;
pub use response::{parse_line, AtResponseLine, FinalResult, InfoLine, Line, Urc, UrcRegistry};
pub use transport::Transport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AtError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("transport closed")]
    TransportClosed,
    #[error("prompt never arrived")]
    PromptNeverArrived,
    #[error("{0} is not supported by this modem")]
    Unsupported(String),
}
