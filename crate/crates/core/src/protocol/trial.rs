//! Trial state machine shared by all three protocol variants.
//!
//! A trial opens with the level-1 prompt and ends on the first hit or once the
//! hierarchy is exhausted. Levels only ever move upward. The attempt counters
//! follow the improved protocol: `local` counts prompts at the current level
//! and wraps to zero when it reaches the attempts-per-level modulus, at which
//! point `global` increments. The escalation score `global * modulus + local`
//! therefore equals the number of prompts issued.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ProtocolConfig, ProtocolError, PromptSpec, Response, RobotIndex, Variant};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("responder failed: {0}")]
pub struct ResponderError(pub String);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub local: u32,
    pub global: u32,
}

impl Counters {
    /// Counts one prompt. Returns true when the local counter wrapped.
    fn record(&mut self, modulus: u32) -> bool {
        self.local += 1;
        if self.local == modulus {
            self.local = 0;
            self.global += 1;
            true
        } else {
            false
        }
    }

    pub fn score(&self, modulus: u32) -> u32 {
        self.global * modulus + self.local
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub prompt: PromptSpec,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Level of the prompt that produced the hit; `None` when every level failed.
    pub hit_level: Option<u32>,
    pub prompts_issued: u32,
    pub escalation_score: u32,
    pub attempts: Vec<Attempt>,
    pub rewarded: bool,
    /// Set when the trial was cut short; aborted trials carry no metric value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl TrialOutcome {
    pub fn is_valid(&self) -> bool {
        self.aborted.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextPrompt {
    Prompt(PromptSpec),
    Terminate,
}

/// Prompt to issue after a non-hit response to `prev`.
///
/// `local_counter` is the number of prompts already given at `prev.level`,
/// including `prev` itself. Only the improved variant repeats a level; the
/// others escalate after every miss and rely on the prompt table to repeat
/// content.
pub fn next_prompt(
    prev: &PromptSpec,
    resp: &Response,
    local_counter: u32,
    cfg: &ProtocolConfig,
) -> Result<NextPrompt, ProtocolError> {
    if prev.level == 0 || prev.level > cfg.n_max {
        return Err(ProtocolError::contract(format!(
            "previous prompt level {} outside 1..={}",
            prev.level, cfg.n_max
        )));
    }
    if resp.is_hit() {
        return Err(ProtocolError::contract("next_prompt consulted after a hit"));
    }
    let repeat = cfg.variant == Variant::ImprovedLtmMri && local_counter < cfg.max_attempts;
    let level = if repeat {
        prev.level
    } else if prev.level < cfg.n_max {
        prev.level + 1
    } else {
        return Ok(NextPrompt::Terminate);
    };
    let robot = if cfg.variant.is_multi_robot() {
        other_robot(prev.robot_index)
    } else {
        RobotIndex::ONE
    };
    cfg.prompt_at(level, robot).map(NextPrompt::Prompt)
}

fn other_robot(r: RobotIndex) -> RobotIndex {
    if r == RobotIndex::ONE {
        RobotIndex::TWO
    } else {
        RobotIndex::ONE
    }
}

/// Where the trial stands before the current prompt is answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialProgress {
    /// 0-based index of the current prompt in the trial.
    pub prompt_index: u32,
    /// Prompts already given at the current level.
    pub attempts_at_level: u32,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStep {
    Next(PromptSpec),
    Done(TrialOutcome),
}

/// Incremental trial driver: feed it one response per prompt.
#[derive(Debug, Clone)]
pub struct Trial {
    cfg: ProtocolConfig,
    current: PromptSpec,
    attempts_at_level: u32,
    counters: Counters,
    attempts: Vec<Attempt>,
    requested_level: Option<u32>,
}

impl Trial {
    pub fn start(cfg: &ProtocolConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        let current = cfg.prompt_at(1, RobotIndex::ONE)?;
        Ok(Self {
            cfg: cfg.clone(),
            current,
            attempts_at_level: 0,
            counters: Counters::default(),
            attempts: Vec::new(),
            requested_level: None,
        })
    }

    pub fn current_prompt(&self) -> &PromptSpec {
        &self.current
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn requested_level(&self) -> Option<u32> {
        self.requested_level
    }

    pub fn progress(&self) -> TrialProgress {
        TrialProgress {
            prompt_index: self.attempts.len() as u32,
            attempts_at_level: self.attempts_at_level,
            counters: self.counters,
        }
    }

    /// Asks for the next prompt to be at least `level`. Only upward requests
    /// are accepted; the current prompt is left untouched.
    pub fn request_level(&mut self, level: u32) -> Result<(), ProtocolError> {
        let floor = self.requested_level.unwrap_or(self.current.level);
        if level <= floor {
            return Err(ProtocolError::contract(format!(
                "prompt level may only move upward (current {floor}, requested {level})"
            )));
        }
        if level > self.cfg.n_max {
            return Err(ProtocolError::contract(format!(
                "requested level {level} above n_max {}",
                self.cfg.n_max
            )));
        }
        self.requested_level = Some(level);
        Ok(())
    }

    /// Records the response to the current prompt.
    pub fn record(&mut self, response: Response) -> Result<TrialStep, ProtocolError> {
        if response.is_hit() && response.latency_ms > self.cfg.response_window_ms {
            return Err(ProtocolError::contract(format!(
                "hit reported at {} ms, outside the {} ms window",
                response.latency_ms, self.cfg.response_window_ms
            )));
        }
        let modulus = self.cfg.attempts_per_level();
        self.attempts.push(Attempt {
            prompt: self.current.clone(),
            response,
        });
        self.attempts_at_level += 1;
        let wrapped = self.counters.record(modulus);

        if response.is_hit() {
            return Ok(TrialStep::Done(self.finish(Some(self.current.level))));
        }
        let mut next = match next_prompt(&self.current, &response, self.attempts_at_level, &self.cfg)? {
            NextPrompt::Prompt(p) => p,
            NextPrompt::Terminate => return Ok(TrialStep::Done(self.finish(None))),
        };
        if let Some(level) = self.requested_level.take() {
            if level > next.level {
                if !wrapped {
                    // Level changes without the counter saturating still count
                    // as one escalation.
                    self.counters.local = 0;
                    self.counters.global += 1;
                }
                next = self.cfg.prompt_at(level, next.robot_index)?;
            }
        }
        if next.level != self.current.level {
            self.attempts_at_level = 0;
        }
        self.current = next.clone();
        Ok(TrialStep::Next(next))
    }

    /// Ends the trial early. The partial attempt list is kept for the log.
    pub fn abort(self, reason: impl Into<String>) -> TrialOutcome {
        let modulus = self.cfg.attempts_per_level();
        TrialOutcome {
            hit_level: None,
            prompts_issued: self.attempts.len() as u32,
            escalation_score: self.counters.score(modulus),
            attempts: self.attempts,
            rewarded: false,
            aborted: Some(reason.into()),
        }
    }

    fn finish(&mut self, hit_level: Option<u32>) -> TrialOutcome {
        let modulus = self.cfg.attempts_per_level();
        TrialOutcome {
            hit_level,
            prompts_issued: self.attempts.len() as u32,
            escalation_score: self.counters.score(modulus),
            attempts: std::mem::take(&mut self.attempts),
            rewarded: hit_level.is_some(),
            aborted: None,
        }
    }
}

/// Runs one complete trial against `responder`.
///
/// An invalid config is refused up front. A responder failure, or a response
/// that violates the protocol contract, aborts the trial and is reported in
/// `TrialOutcome::aborted`.
pub fn run_trial<F>(cfg: &ProtocolConfig, mut responder: F) -> Result<TrialOutcome, ProtocolError>
where
    F: FnMut(&PromptSpec, &TrialProgress) -> Result<Response, ResponderError>,
{
    let mut trial = Trial::start(cfg)?;
    loop {
        let response = match responder(trial.current_prompt(), &trial.progress()) {
            Ok(r) => r,
            Err(e) => return Ok(trial.abort(e.to_string())),
        };
        match trial.record(response) {
            Ok(TrialStep::Next(_)) => {}
            Ok(TrialStep::Done(outcome)) => return Ok(outcome),
            Err(e) => return Ok(trial.abort(e.to_string())),
        }
    }
}
