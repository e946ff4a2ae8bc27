//! Log verification and event-sourced outcomes.
//!
//! Every log is checked for contiguous sequence numbers, non-decreasing time,
//! observations inside their response window, classifications that follow
//! from the observed behaviour, and trial outcomes that follow from the
//! classified responses. Simulated logs are additionally re-run from their
//! header and must match event for event.

use thiserror::Error;

use super::{run_simulated_session, EventBody, ParticipantDescriptor, SessionError, SessionLog};
use crate::participant::GazeTick;
use crate::protocol::{
    classify_behavior, BehaviorSample, Classification, GazeTarget, PromptSpec, Response, Trial,
    TrialOutcome, TrialStep,
};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log diverges at seq {seq}: {detail}")]
    Divergence { seq: u64, detail: String },
    #[error("log ends early: {0}")]
    Truncated(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl ReplayError {
    /// Sequence number of the first offending event, when there is one.
    pub fn seq(&self) -> Option<u64> {
        match self {
            ReplayError::Divergence { seq, .. } => Some(*seq),
            _ => None,
        }
    }
}

fn diverge<T>(seq: u64, detail: impl Into<String>) -> Result<T, ReplayError> {
    Err(ReplayError::Divergence {
        seq,
        detail: detail.into(),
    })
}

struct OpenPrompt {
    issued_at: u64,
    deadline: u64,
    sample: Option<BehaviorSample>,
}

struct Replaying {
    index: u32,
    trial: Trial,
    prompt: Option<OpenPrompt>,
    pending: Option<Response>,
    done: Option<TrialOutcome>,
}

impl Replaying {
    /// Feeds a deferred non-hit response, honouring an operator override when
    /// the next recorded prompt sits above the natural next level.
    fn apply_pending(&mut self, seq: u64, next: Option<&PromptSpec>) -> Result<(), ReplayError> {
        let Some(response) = self.pending.take() else {
            return Ok(());
        };
        let natural = {
            let mut probe = self.trial.clone();
            probe.record(response).map_err(|e| ReplayError::Divergence {
                seq,
                detail: e.to_string(),
            })?
        };
        if let (TrialStep::Next(p), Some(recorded)) = (&natural, next) {
            if recorded.level > p.level {
                self.trial.request_level(recorded.level).map_err(|e| ReplayError::Divergence {
                    seq,
                    detail: e.to_string(),
                })?;
            }
        }
        match self.trial.record(response) {
            Ok(TrialStep::Next(_)) => Ok(()),
            Ok(TrialStep::Done(outcome)) => {
                self.done = Some(outcome);
                Ok(())
            }
            Err(e) => diverge(seq, e.to_string()),
        }
    }
}

/// Re-derives every trial outcome from the log's responses and checks it
/// against the recorded `TrialEnded` events.
pub fn outcomes_from_log(log: &SessionLog) -> Result<Vec<TrialOutcome>, ReplayError> {
    let cfg = &log.header.config;
    cfg.validate().map_err(SessionError::from)?;
    let window = cfg.response_window_ms;
    let mut outcomes = Vec::new();
    let mut open: Option<Replaying> = None;
    let mut last_t = 0;
    let mut ended = false;

    for (i, e) in log.events.iter().enumerate() {
        let seq = e.seq;
        if seq != i as u64 {
            return diverge(seq, format!("expected seq {i}"));
        }
        if e.t_ms < last_t {
            return diverge(seq, format!("time runs backwards ({} < {last_t})", e.t_ms));
        }
        last_t = e.t_ms;
        if ended {
            return diverge(seq, "event after SessionEnded");
        }
        match &e.body {
            EventBody::SessionStarted { config_hash, trials, .. } => {
                if seq != 0 {
                    return diverge(seq, "SessionStarted is not the first event");
                }
                if *config_hash != log.header.hash() {
                    return diverge(seq, "header does not match its recorded hash");
                }
                if *trials != log.header.trials {
                    return diverge(seq, "trial count differs from the header");
                }
            }
            EventBody::TrialStarted { trial, .. } => {
                if open.is_some() {
                    return diverge(seq, "trial started while another is open");
                }
                if *trial != outcomes.len() as u32 {
                    return diverge(seq, format!("expected trial {}", outcomes.len()));
                }
                open = Some(Replaying {
                    index: *trial,
                    trial: Trial::start(cfg).map_err(SessionError::from)?,
                    prompt: None,
                    pending: None,
                    done: None,
                });
            }
            EventBody::PromptIssued {
                trial,
                prompt,
                window_deadline_ms,
                counters,
                ..
            } => {
                let Some(r) = open.as_mut().filter(|r| r.index == *trial) else {
                    return diverge(seq, "prompt outside its trial");
                };
                r.apply_pending(seq, Some(prompt))?;
                if r.done.is_some() {
                    return diverge(seq, "prompt issued after the trial was decided");
                }
                if r.trial.current_prompt() != prompt {
                    return diverge(
                        seq,
                        format!("prompt level {} where level {} was due", prompt.level, r.trial.current_prompt().level),
                    );
                }
                if r.trial.counters() != *counters {
                    return diverge(seq, "attempt counters differ");
                }
                if *window_deadline_ms != e.t_ms + window {
                    return diverge(seq, "window deadline differs from prompt time plus window");
                }
                r.prompt = Some(OpenPrompt {
                    issued_at: e.t_ms,
                    deadline: *window_deadline_ms,
                    sample: None,
                });
            }
            EventBody::BehaviorObserved { trial, sample, .. } => {
                let Some(p) = open.as_mut().filter(|r| r.index == *trial).and_then(|r| r.prompt.as_mut()) else {
                    return diverge(seq, "observation without an open prompt");
                };
                if e.t_ms < p.issued_at || e.t_ms > p.deadline {
                    return diverge(seq, "observation outside the response window");
                }
                p.sample = Some(*sample);
            }
            EventBody::ResponseClassified { trial, response, .. } => {
                let Some(r) = open.as_mut().filter(|r| r.index == *trial) else {
                    return diverge(seq, "response outside its trial");
                };
                let Some(p) = r.prompt.take() else {
                    return diverge(seq, "response without an open prompt");
                };
                match &p.sample {
                    Some(s) => {
                        let derived = classify_behavior(s, GazeTarget::TargetMonitor, window, cfg.torso_threshold_deg)
                            .map_err(|err| ReplayError::Divergence {
                                seq,
                                detail: err.to_string(),
                            })?;
                        if derived != *response {
                            return diverge(
                                seq,
                                format!("recorded {:?}, behaviour gives {:?}", response.classification, derived.classification),
                            );
                        }
                    }
                    None if response.classification != Classification::Timeout => {
                        return diverge(seq, "non-timeout response without an observation");
                    }
                    None => {
                        if e.t_ms != p.deadline {
                            return diverge(seq, "timeout before the window closed");
                        }
                    }
                }
                if response.is_hit() {
                    match r.trial.record(*response) {
                        Ok(TrialStep::Done(outcome)) => r.done = Some(outcome),
                        Ok(TrialStep::Next(_)) => return diverge(seq, "hit did not end the trial"),
                        Err(err) => return diverge(seq, err.to_string()),
                    }
                } else {
                    r.pending = Some(*response);
                }
            }
            EventBody::RewardDelivered { trial, level, duration_ms } => {
                let Some(r) = open.as_ref().filter(|r| r.index == *trial) else {
                    return diverge(seq, "reward outside its trial");
                };
                match &r.done {
                    Some(o) if o.hit_level == Some(*level) => {}
                    _ => return diverge(seq, "reward without a hit at that level"),
                }
                if *duration_ms != cfg.reward_duration_ms {
                    return diverge(seq, "reward duration differs from the config");
                }
            }
            EventBody::TrialEnded {
                trial,
                hit_level,
                prompts_issued,
                escalation_score,
                rewarded,
                aborted,
            } => {
                let Some(mut r) = open.take().filter(|r| r.index == *trial) else {
                    return diverge(seq, "end of a trial that is not open");
                };
                r.apply_pending(seq, None)?;
                let outcome = match (r.done.take(), aborted) {
                    (Some(o), None) => o,
                    (None, Some(reason)) => r.trial.abort(reason.clone()),
                    (Some(_), Some(_)) => return diverge(seq, "decided trial marked as aborted"),
                    (None, None) => return diverge(seq, "trial ended before it was decided"),
                };
                let recorded = (*hit_level, *prompts_issued, *escalation_score, *rewarded);
                let derived = (
                    outcome.hit_level,
                    outcome.prompts_issued,
                    outcome.escalation_score,
                    outcome.rewarded,
                );
                if recorded != derived {
                    return diverge(
                        seq,
                        format!("recorded (hit, prompts, score, rewarded) {recorded:?}, derived {derived:?}"),
                    );
                }
                outcomes.push(outcome);
            }
            EventBody::SessionEnded { trials_completed, .. } => {
                if open.is_some() {
                    return diverge(seq, "session ended with a trial open");
                }
                if *trials_completed != outcomes.len() as u32 {
                    return diverge(seq, "completed trial count differs");
                }
                ended = true;
            }
            EventBody::InterRobotExchange { .. } | EventBody::ImitationActivated { .. } => {}
        }
    }
    if !ended {
        return Err(ReplayError::Truncated("no SessionEnded event".into()));
    }
    Ok(outcomes)
}

/// Verifies a log and returns its trial outcomes. Simulated logs are re-run
/// from the header; the first event that differs is reported.
pub fn replay(log: &SessionLog) -> Result<Vec<TrialOutcome>, ReplayError> {
    if let ParticipantDescriptor::Simulated { .. } = log.header.participant {
        let h = &log.header;
        let fresh = run_simulated_session(&h.config, h.trials, h.participant.clone(), h.seed)?;
        for (i, expected) in fresh.events.iter().enumerate() {
            let Some(actual) = log.events.get(i) else {
                return Err(ReplayError::Truncated(format!(
                    "{} events recorded, {} expected",
                    log.events.len(),
                    fresh.events.len()
                )));
            };
            let a = serde_json::to_value(actual).map_err(SessionError::from)?;
            let b = serde_json::to_value(expected).map_err(SessionError::from)?;
            if a != b {
                return diverge(i as u64, format!("recorded {a}, replay gives {b}"));
            }
        }
        if log.events.len() > fresh.events.len() {
            return diverge(fresh.events.len() as u64, "extra events after the replayed session");
        }
    }
    outcomes_from_log(log)
}

/// Every gaze tick recorded in the log, in time order.
pub fn gaze_from_log(log: &SessionLog) -> Vec<GazeTick> {
    let mut ticks: Vec<GazeTick> = log
        .events
        .iter()
        .flat_map(|e| match &e.body {
            EventBody::BehaviorObserved { gaze, .. } | EventBody::InterRobotExchange { gaze, .. } => gaze.as_slice(),
            _ => &[],
        })
        .copied()
        .collect();
    ticks.sort_by_key(|g| g.t_ms);
    ticks
}
