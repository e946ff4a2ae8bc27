//! Session runtime: trial loop, event log, operator mode and replay.

mod log;
pub mod operator;
mod replay;
mod simulate;

use std::io;

use thiserror::Error;

use crate::participant::SimError;
use crate::protocol::ProtocolError;

pub use log::{
    EndReason, EventBody, ExchangeAct, JsonlWriter, ParticipantDescriptor, SessionEvent,
    SessionHeader, SessionLog, SessionMode, Side, LOG_SCHEMA,
};
pub use operator::{
    run_operator_session, ControlBody, ControlMessage, Inbound, OperatorChannel, OperatorSession,
    Phase, StateSnapshot, TrialSummary,
};
pub use replay::{gaze_from_log, outcomes_from_log, replay, ReplayError};
pub use simulate::{
    run_inter_robot_script, run_simulated_session, ENGAGEMENT_FACTOR, GREETING_MS,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Participant(#[from] SimError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed log line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported log schema {0}")]
    UnsupportedSchema(u32),
    #[error("{0}")]
    Mode(String),
}
