//! Prompt/reward state machines for the three least-to-most protocols.
//!
//! Everything here is pure: no clocks, no randomness. Latencies are supplied
//! by whoever produces the participant's behaviour and compared against the
//! configured response window arithmetically.

mod behavior;
mod config;
mod stimulus;
mod trial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use behavior::{
    classify_behavior, imitation_gate, imitation_sequence, BehaviorSample, Gesture,
    GestureCommand,
};
pub use config::{
    PfEntry, ProtocolConfig, Variant, DEFAULT_EYE_CONTACT_THRESHOLD_MS,
    DEFAULT_RESPONSE_WINDOW_MS, DEFAULT_REWARD_DURATION_MS, DEFAULT_TORSO_THRESHOLD_DEG,
    JOINT_ATTENTION_TABLE, SHORT_RESPONSE_WINDOW_MS,
};
pub use stimulus::{stimulus_set, stronger, Modality, StimulusCombo, StimulusKind, StimulusRank};
pub use trial::{
    next_prompt, run_trial, Attempt, Counters, NextPrompt, ResponderError, Trial, TrialOutcome,
    TrialProgress, TrialStep,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid protocol config: {0}")]
    Config(String),
}

impl ProtocolError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        ProtocolError::Contract(msg.into())
    }
}

/// Robot number, 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RobotIndex(u8);

impl RobotIndex {
    pub const ONE: RobotIndex = RobotIndex(1);
    pub const TWO: RobotIndex = RobotIndex(2);

    pub fn new(index: u8) -> Result<Self, ProtocolError> {
        match index {
            1 | 2 => Ok(RobotIndex(index)),
            _ => Err(ProtocolError::contract(format!("robot index {index} not in {{1, 2}}"))),
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn gaze_target(self) -> GazeTarget {
        if self.0 == 1 {
            GazeTarget::Robot1
        } else {
            GazeTarget::Robot2
        }
    }
}

impl TryFrom<u8> for RobotIndex {
    type Error = ProtocolError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        RobotIndex::new(value)
    }
}

impl From<RobotIndex> for u8 {
    fn from(r: RobotIndex) -> u8 {
        r.0
    }
}

/// One prompt as delivered to the participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub level: u32,
    pub robot_action: StimulusRank,
    pub env_factor: StimulusRank,
    pub robot_index: RobotIndex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus_combo: Option<StimulusCombo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeTarget {
    Robot1,
    Robot2,
    TargetMonitor,
    NonTargetMonitor,
    Elsewhere,
}

impl GazeTarget {
    pub const ALL: [GazeTarget; 5] = [
        GazeTarget::Robot1,
        GazeTarget::Robot2,
        GazeTarget::TargetMonitor,
        GazeTarget::NonTargetMonitor,
        GazeTarget::Elsewhere,
    ];

    pub fn robot(self) -> Option<RobotIndex> {
        match self {
            GazeTarget::Robot1 => Some(RobotIndex::ONE),
            GazeTarget::Robot2 => Some(RobotIndex::TWO),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Hit,
    Miss,
    DisqualifiedBodyRotation,
    Timeout,
}

/// A classified participant response to one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub classification: Classification,
    pub latency_ms: u64,
    pub gaze_target: GazeTarget,
}

impl Response {
    pub fn is_hit(&self) -> bool {
        self.classification == Classification::Hit
    }

    /// 1 for a hit, 0 for anything else.
    pub fn rating(&self) -> u8 {
        u8::from(self.is_hit())
    }
}
