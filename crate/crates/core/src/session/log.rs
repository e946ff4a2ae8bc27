//! Session event log and its JSONL encoding.
//!
//! Line 0 is the [`SessionHeader`]; every further line is one
//! [`SessionEvent`] with exactly the fields `seq`, `t_ms`, `kind`, `payload`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SessionError;
use crate::participant::{BehaviorSample, GazeTick, ParticipantModel};
use crate::protocol::{
    Counters, GestureCommand, PromptSpec, ProtocolConfig, Response, RobotIndex, Variant,
};

pub const LOG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeAct {
    /// Robot stands up, waves and says hello.
    Greet,
    /// The other robot greets back.
    Reply,
    /// A randomly chosen robot turns to the participant.
    TurnToParticipant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Simulated,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    SessionStarted {
        mode: SessionMode,
        variant: Variant,
        trials: u32,
        /// SHA-256 of the header line.
        config_hash: String,
    },
    TrialStarted {
        trial: u32,
        target_side: Side,
    },
    PromptIssued {
        trial: u32,
        attempt: u32,
        prompt: PromptSpec,
        window_deadline_ms: u64,
        counters: Counters,
    },
    BehaviorObserved {
        trial: u32,
        attempt: u32,
        sample: BehaviorSample,
        /// Free gaze between prompt onset and the observation.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        gaze: Vec<GazeTick>,
    },
    ResponseClassified {
        trial: u32,
        attempt: u32,
        response: Response,
    },
    RewardDelivered {
        trial: u32,
        level: u32,
        duration_ms: u64,
    },
    TrialEnded {
        trial: u32,
        hit_level: Option<u32>,
        prompts_issued: u32,
        escalation_score: u32,
        rewarded: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aborted: Option<String>,
    },
    InterRobotExchange {
        step: u32,
        robot: RobotIndex,
        act: ExchangeAct,
        duration_ms: u64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        gaze: Vec<GazeTick>,
    },
    ImitationActivated {
        robot: RobotIndex,
        gestures: Vec<GestureCommand>,
    },
    SessionEnded {
        reason: EndReason,
        trials_completed: u32,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionStarted { .. } => "SessionStarted",
            EventBody::TrialStarted { .. } => "TrialStarted",
            EventBody::PromptIssued { .. } => "PromptIssued",
            EventBody::BehaviorObserved { .. } => "BehaviorObserved",
            EventBody::ResponseClassified { .. } => "ResponseClassified",
            EventBody::RewardDelivered { .. } => "RewardDelivered",
            EventBody::TrialEnded { .. } => "TrialEnded",
            EventBody::InterRobotExchange { .. } => "InterRobotExchange",
            EventBody::ImitationActivated { .. } => "ImitationActivated",
            EventBody::SessionEnded { .. } => "SessionEnded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ParticipantDescriptor {
    Simulated {
        id: String,
        /// 1-based session number within the participant's plan.
        session: u32,
        model: ParticipantModel,
    },
    Operator {
        operator_id: String,
    },
}

impl ParticipantDescriptor {
    pub fn mode(&self) -> SessionMode {
        match self {
            ParticipantDescriptor::Simulated { .. } => SessionMode::Simulated,
            ParticipantDescriptor::Operator { .. } => SessionMode::Operator,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ParticipantDescriptor::Simulated { id, session, .. } => format!("{id}/s{session}"),
            ParticipantDescriptor::Operator { operator_id } => format!("operator:{operator_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub schema: u32,
    pub config: ProtocolConfig,
    pub seed: u64,
    pub variant: Variant,
    pub participant: ParticipantDescriptor,
    pub trials: u32,
}

impl SessionHeader {
    pub fn new(config: ProtocolConfig, seed: u64, participant: ParticipantDescriptor, trials: u32) -> Self {
        Self {
            schema: LOG_SCHEMA,
            variant: config.variant,
            config,
            seed,
            participant,
            trials,
        }
    }

    /// SHA-256 over the header's JSON line.
    pub fn hash(&self) -> String {
        let line = serde_json::to_string(self).expect("header serializes");
        hex::encode(Sha256::digest(line.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub events: Vec<SessionEvent>,
}

impl SessionLog {
    pub fn new(header: SessionHeader) -> Self {
        Self {
            header,
            events: Vec::new(),
        }
    }

    /// Appends an event with the next sequence number. Timestamps never run
    /// backwards: an earlier `t_ms` is raised to the previous event's.
    pub fn push(&mut self, t_ms: u64, body: EventBody) -> &SessionEvent {
        let seq = self.events.len() as u64;
        let t_ms = self.events.last().map_or(t_ms, |e| e.t_ms.max(t_ms));
        self.events.push(SessionEvent { seq, t_ms, body });
        self.events.last().unwrap()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, SessionError> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl io::Read) -> Result<Self, SessionError> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| SessionError::Format { line: 0, msg: "empty log".into() })?;
        let header: SessionHeader = serde_json::from_str(&first?)
            .map_err(|e| SessionError::Format { line: 0, msg: e.to_string() })?;
        if header.schema != LOG_SCHEMA {
            return Err(SessionError::UnsupportedSchema(header.schema));
        }
        let mut events = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: SessionEvent = serde_json::from_str(&line)
                .map_err(|err| SessionError::Format { line: i, msg: err.to_string() })?;
            events.push(e);
        }
        Ok(Self { header, events })
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        Self::read(File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

/// Appends a log to disk one line at a time, flushing after every line.
pub struct JsonlWriter {
    file: File,
    written: usize,
}

impl JsonlWriter {
    pub fn create(path: &Path, header: &SessionHeader) -> Result<Self, SessionError> {
        let mut file = File::create(path)?;
        let mut line = serde_json::to_string(header)?;
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(Self { file, written: 0 })
    }

    /// Writes every event of `log` not yet on disk.
    pub fn sync(&mut self, log: &SessionLog) -> Result<(), SessionError> {
        for e in &log.events[self.written..] {
            let mut line = serde_json::to_string(e)?;
            line.push('\n');
            self.file.write_all(line.as_bytes())?;
        }
        self.file.flush()?;
        self.written = log.events.len();
        Ok(())
    }
}
