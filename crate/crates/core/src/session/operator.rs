//! Operator-driven sessions.
//!
//! [`OperatorSession`] is a pure state machine: every input carries the
//! current session time, so it can be driven by a wall clock in production
//! and by a scripted clock in tests. [`run_operator_session`] wires it to an
//! [`OperatorChannel`].
//!
//! The response window is half open: a mark made `window` ms or more after
//! the prompt is refused and the prompt times out instead.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::simulate::side_for_trial;
use super::{
    EndReason, EventBody, JsonlWriter, ParticipantDescriptor, SessionError, SessionHeader, SessionLog,
    SessionMode,
};
use crate::participant::rng_stream;
use crate::protocol::{
    classify_behavior, BehaviorSample, Classification, Counters, GazeTarget, PromptSpec, ProtocolConfig,
    Response, Trial, TrialOutcome, TrialStep, Variant,
};

/// Torso rotation recorded for a disqualification mark without a reading.
const DISQUALIFIED_TORSO_DEG: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingOperator,
    WindowOpen,
    Reward,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u32,
    pub hit_level: Option<u32>,
    pub prompts_issued: u32,
    pub escalation_score: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// Everything the console needs to render the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub phase: Phase,
    pub now_ms: u64,
    pub variant: Variant,
    pub n_max: u32,
    pub max_attempts: u32,
    pub trials_total: u32,
    pub trials_completed: u32,
    pub operator_connected: bool,
    pub trial: Option<u32>,
    pub attempt: Option<u32>,
    pub prompt: Option<PromptSpec>,
    pub robot_action: Option<String>,
    pub env_factor: Option<String>,
    pub window_deadline_ms: Option<u64>,
    pub window_remaining_ms: Option<u64>,
    pub reward_until_ms: Option<u64>,
    pub counters: Option<Counters>,
    pub attempts_at_level: Option<u32>,
    pub requested_level: Option<u32>,
    pub history: Vec<TrialSummary>,
    pub last_rejection: Option<String>,
    pub last_event_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum ControlBody {
    StateSnapshot(Box<StateSnapshot>),
    MarkResponse {
        classification: Classification,
        /// Prompt the mark refers to; a mark for a prompt that is no longer
        /// open is refused.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trial: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attempt: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gaze_target: Option<GazeTarget>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        torso_rotation_deg: Option<f64>,
    },
    OverridePromptLevel {
        level: u32,
    },
    AbortSession,
    Heartbeat,
}

/// One control-channel message: `{kind, payload, seq_ack}`.
///
/// From the server, `seq_ack` counts the client messages processed so far.
/// From the console, it echoes the `seq_ack` of the last snapshot it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    #[serde(flatten)]
    pub body: ControlBody,
    #[serde(default)]
    pub seq_ack: u64,
}

impl ControlMessage {
    pub fn new(body: ControlBody) -> Self {
        Self { body, seq_ack: 0 }
    }

    /// A mark bound to one prompt.
    pub fn mark_for(classification: Classification, trial: u32, attempt: u32) -> Self {
        let mut m = Self::mark(classification);
        if let ControlBody::MarkResponse { trial: t, attempt: a, .. } = &mut m.body {
            *t = Some(trial);
            *a = Some(attempt);
        }
        m
    }

    pub fn mark(classification: Classification) -> Self {
        Self::new(ControlBody::MarkResponse {
            classification,
            trial: None,
            attempt: None,
            gaze_target: None,
            torso_rotation_deg: None,
        })
    }
}

struct OpenTrial {
    index: u32,
    attempt: u32,
    trial: Trial,
    prompt_t: u64,
    deadline: u64,
}

enum State {
    Awaiting,
    Window(OpenTrial),
    Reward {
        index: u32,
        until: u64,
        outcome: TrialOutcome,
    },
    Finished,
}

pub struct OperatorSession {
    cfg: ProtocolConfig,
    log: SessionLog,
    state: State,
    next_trial: u32,
    connected: bool,
    history: Vec<TrialSummary>,
    last_rejection: Option<String>,
    processed: u64,
}

impl OperatorSession {
    pub fn new(cfg: &ProtocolConfig, trials: u32, operator_id: &str, seed: u64) -> Result<Self, SessionError> {
        cfg.validate()?;
        let header = SessionHeader::new(
            cfg.clone(),
            seed,
            ParticipantDescriptor::Operator {
                operator_id: operator_id.to_owned(),
            },
            trials,
        );
        let config_hash = header.hash();
        let mut log = SessionLog::new(header);
        log.push(
            0,
            EventBody::SessionStarted {
                mode: SessionMode::Operator,
                variant: cfg.variant,
                trials,
                config_hash,
            },
        );
        let mut s = Self {
            cfg: cfg.clone(),
            log,
            state: State::Awaiting,
            next_trial: 0,
            connected: false,
            history: Vec::new(),
            last_rejection: None,
            processed: 0,
        };
        if trials == 0 {
            s.finish(0, EndReason::Completed);
        }
        Ok(s)
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, State::Finished)
    }

    pub fn phase(&self) -> Phase {
        match self.state {
            State::Awaiting => Phase::AwaitingOperator,
            State::Window(_) => Phase::WindowOpen,
            State::Reward { .. } => Phase::Reward,
            State::Finished => Phase::Finished,
        }
    }

    pub fn messages_processed(&self) -> u64 {
        self.processed
    }

    /// Next instant at which [`tick`](Self::tick) changes the state.
    pub fn next_deadline(&self) -> Option<u64> {
        match &self.state {
            State::Window(o) => Some(o.deadline),
            State::Reward { until, .. } => Some(*until),
            _ => None,
        }
    }

    pub fn connect(&mut self, now: u64) {
        self.connected = true;
        if matches!(self.state, State::Awaiting) {
            self.start_next(now);
        }
    }

    /// The operator went away: an open trial is aborted and the session waits
    /// for a new connection.
    pub fn disconnect(&mut self, now: u64) {
        self.connected = false;
        self.tick(now);
        if let State::Window(_) = self.state {
            let State::Window(open) = std::mem::replace(&mut self.state, State::Awaiting) else {
                unreachable!()
            };
            let index = open.index;
            self.end_trial(now, index, open.trial.abort("operator disconnected"));
            if self.next_trial >= self.log.header.trials {
                self.finish(now, EndReason::Completed);
            }
        }
    }

    /// Applies one console message. A refused message is remembered in the
    /// next snapshot's `last_rejection`.
    pub fn handle(&mut self, msg: &ControlMessage, now: u64) -> Result<(), String> {
        self.processed += 1;
        // A mark arriving after its window closed must not land on the
        // prompt that replaced it.
        let late_mark = matches!(msg.body, ControlBody::MarkResponse { .. })
            && matches!(&self.state, State::Window(o) if now >= o.deadline);
        self.tick(now);
        let result = match &msg.body {
            ControlBody::MarkResponse { .. } if late_mark => Err("response window closed".to_owned()),
            ControlBody::Heartbeat => return Ok(()),
            ControlBody::MarkResponse {
                classification,
                trial,
                attempt,
                gaze_target,
                torso_rotation_deg,
            } => match &self.state {
                State::Window(o) if trial.is_some_and(|t| t != o.index) || attempt.is_some_and(|a| a != o.attempt) => {
                    Err("response window closed for that prompt".to_owned())
                }
                _ => self.mark(now, *classification, *gaze_target, *torso_rotation_deg),
            },
            ControlBody::OverridePromptLevel { level } => match &mut self.state {
                State::Window(open) => open.trial.request_level(*level).map_err(|e| e.to_string()),
                _ => Err("no prompt is active".to_owned()),
            },
            ControlBody::AbortSession => {
                self.abort(now);
                Ok(())
            }
            ControlBody::StateSnapshot(_) => Err("snapshots are sent by the server only".to_owned()),
        };
        self.last_rejection = result.as_ref().err().cloned();
        result
    }

    /// Ends the session, closing any open trial first.
    pub fn abort(&mut self, now: u64) {
        self.tick(now);
        match std::mem::replace(&mut self.state, State::Awaiting) {
            State::Window(open) => {
                let index = open.index;
                self.end_trial(now, index, open.trial.abort("session aborted"));
            }
            State::Reward { index, outcome, .. } => self.end_trial(now, index, outcome),
            State::Finished => {
                self.state = State::Finished;
                return;
            }
            State::Awaiting => {}
        }
        self.finish(now, EndReason::Aborted);
    }

    /// Closes expired windows and finished rewards up to `now`.
    pub fn tick(&mut self, now: u64) {
        loop {
            match &self.state {
                State::Window(open) if now >= open.deadline => {
                    let (t, window) = (open.deadline, self.cfg.response_window_ms);
                    let response = Response {
                        classification: Classification::Timeout,
                        latency_ms: window,
                        gaze_target: GazeTarget::Elsewhere,
                    };
                    if let Err(e) = self.respond(t, response) {
                        self.last_rejection = Some(e);
                    }
                }
                State::Reward { until, .. } if now >= *until => {
                    let t = *until;
                    let State::Reward { index, outcome, .. } = std::mem::replace(&mut self.state, State::Awaiting)
                    else {
                        unreachable!()
                    };
                    self.end_trial(t, index, outcome);
                    self.start_next(t);
                }
                _ => break,
            }
        }
    }

    pub fn snapshot(&self, now: u64) -> StateSnapshot {
        let open = match &self.state {
            State::Window(o) => Some(o),
            _ => None,
        };
        let prompt = open.map(|o| o.trial.current_prompt().clone());
        StateSnapshot {
            phase: self.phase(),
            now_ms: now,
            variant: self.cfg.variant,
            n_max: self.cfg.n_max,
            max_attempts: self.cfg.max_attempts,
            trials_total: self.log.header.trials,
            trials_completed: self.history.len() as u32,
            operator_connected: self.connected,
            trial: match &self.state {
                State::Window(o) => Some(o.index),
                State::Reward { index, .. } => Some(*index),
                _ => None,
            },
            attempt: open.map(|o| o.attempt),
            robot_action: prompt
                .as_ref()
                .and_then(|p| self.cfg.ra_description(p.robot_action.rank))
                .map(str::to_owned),
            env_factor: prompt
                .as_ref()
                .and_then(|p| self.cfg.ef_description(p.env_factor.rank))
                .map(str::to_owned),
            prompt,
            window_deadline_ms: open.map(|o| o.deadline),
            window_remaining_ms: open.map(|o| o.deadline.saturating_sub(now)),
            reward_until_ms: match &self.state {
                State::Reward { until, .. } => Some(*until),
                _ => None,
            },
            counters: open.map(|o| o.trial.counters()),
            attempts_at_level: open.map(|o| o.trial.progress().attempts_at_level),
            requested_level: open.and_then(|o| o.trial.requested_level()),
            history: self.history.clone(),
            last_rejection: self.last_rejection.clone(),
            last_event_seq: self.log.events.last().map(|e| e.seq),
        }
    }

    pub fn snapshot_message(&self, now: u64) -> ControlMessage {
        ControlMessage {
            body: ControlBody::StateSnapshot(Box::new(self.snapshot(now))),
            seq_ack: self.processed,
        }
    }

    fn mark(
        &mut self,
        now: u64,
        classification: Classification,
        gaze_target: Option<GazeTarget>,
        torso: Option<f64>,
    ) -> Result<(), String> {
        let State::Window(open) = &self.state else {
            return Err("response window closed".to_owned());
        };
        if classification == Classification::Timeout {
            return Err("timeouts are decided by the session clock".to_owned());
        }
        let gaze_target = gaze_target.unwrap_or(match classification {
            Classification::Miss => GazeTarget::Elsewhere,
            _ => GazeTarget::TargetMonitor,
        });
        let torso_rotation_deg = torso.unwrap_or(match classification {
            Classification::DisqualifiedBodyRotation => DISQUALIFIED_TORSO_DEG,
            _ => 0.0,
        });
        let sample = BehaviorSample {
            gaze_target,
            latency_ms: (now - open.prompt_t) as i64,
            torso_rotation_deg,
        };
        let response = classify_behavior(
            &sample,
            GazeTarget::TargetMonitor,
            self.cfg.response_window_ms,
            self.cfg.torso_threshold_deg,
        )
        .map_err(|e| e.to_string())?;
        if response.classification != classification {
            return Err(format!(
                "mark {classification:?} contradicts the observation ({:?})",
                response.classification
            ));
        }
        let (trial, attempt) = (open.index, open.attempt);
        self.log.push(
            now,
            EventBody::BehaviorObserved {
                trial,
                attempt,
                sample,
                gaze: Vec::new(),
            },
        );
        self.respond(now, response)
    }

    fn respond(&mut self, t: u64, response: Response) -> Result<(), String> {
        let State::Window(mut open) = std::mem::replace(&mut self.state, State::Awaiting) else {
            return Err("response window closed".to_owned());
        };
        let step = match open.trial.record(response) {
            Ok(step) => step,
            Err(e) => {
                self.state = State::Window(open);
                return Err(e.to_string());
            }
        };
        self.log.push(
            t,
            EventBody::ResponseClassified {
                trial: open.index,
                attempt: open.attempt,
                response,
            },
        );
        match step {
            TrialStep::Next(_) => {
                open.attempt += 1;
                self.issue(t, &mut open);
                self.state = State::Window(open);
            }
            TrialStep::Done(outcome) => match outcome.hit_level {
                Some(level) => {
                    self.log.push(
                        t,
                        EventBody::RewardDelivered {
                            trial: open.index,
                            level,
                            duration_ms: self.cfg.reward_duration_ms,
                        },
                    );
                    self.state = State::Reward {
                        index: open.index,
                        until: t + self.cfg.reward_duration_ms,
                        outcome,
                    };
                }
                None => {
                    self.end_trial(t, open.index, outcome);
                    self.start_next(t);
                }
            },
        }
        Ok(())
    }

    fn issue(&mut self, t: u64, open: &mut OpenTrial) {
        open.prompt_t = t;
        open.deadline = t + self.cfg.response_window_ms;
        self.log.push(
            t,
            EventBody::PromptIssued {
                trial: open.index,
                attempt: open.attempt,
                prompt: open.trial.current_prompt().clone(),
                window_deadline_ms: open.deadline,
                counters: open.trial.counters(),
            },
        );
    }

    fn start_next(&mut self, t: u64) {
        if self.next_trial >= self.log.header.trials {
            self.finish(t, EndReason::Completed);
            return;
        }
        if !self.connected {
            self.state = State::Awaiting;
            return;
        }
        let index = self.next_trial;
        self.next_trial += 1;
        let mut rng = rng_stream(self.log.header.seed, u64::from(index) + 1);
        self.log.push(
            t,
            EventBody::TrialStarted {
                trial: index,
                target_side: side_for_trial(&mut rng),
            },
        );
        let trial = Trial::start(&self.cfg).expect("config validated at session start");
        let mut open = OpenTrial {
            index,
            attempt: 0,
            trial,
            prompt_t: t,
            deadline: t,
        };
        self.issue(t, &mut open);
        self.state = State::Window(open);
    }

    fn end_trial(&mut self, t: u64, index: u32, outcome: TrialOutcome) {
        self.log.push(
            t,
            EventBody::TrialEnded {
                trial: index,
                hit_level: outcome.hit_level,
                prompts_issued: outcome.prompts_issued,
                escalation_score: outcome.escalation_score,
                rewarded: outcome.rewarded,
                aborted: outcome.aborted.clone(),
            },
        );
        self.history.push(TrialSummary {
            trial: index,
            hit_level: outcome.hit_level,
            prompts_issued: outcome.prompts_issued,
            escalation_score: outcome.escalation_score,
            aborted: outcome.aborted,
        });
    }

    fn finish(&mut self, t: u64, reason: EndReason) {
        self.log.push(
            t,
            EventBody::SessionEnded {
                reason,
                trials_completed: self.history.len() as u32,
            },
        );
        self.state = State::Finished;
    }
}

/// What the transport delivered while the engine waited.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Connected,
    Message(ControlMessage),
    Disconnected,
    /// The requested deadline passed without input.
    Timeout,
    /// The host is shutting down; the session is aborted.
    Shutdown,
}

/// Transport between the engine and a single operator console.
pub trait OperatorChannel {
    /// Session time in milliseconds.
    fn now_ms(&self) -> u64;
    /// Blocks until input arrives or the session clock reaches `deadline_ms`.
    fn recv_until(&mut self, deadline_ms: Option<u64>) -> Inbound;
    fn send(&mut self, msg: ControlMessage);
}

/// Drives an operator session to completion. When `log_path` is given every
/// event is appended and flushed as soon as it happens.
pub fn run_operator_session(
    cfg: &ProtocolConfig,
    trials: u32,
    operator_id: &str,
    seed: u64,
    channel: &mut dyn OperatorChannel,
    log_path: Option<&Path>,
) -> Result<SessionLog, SessionError> {
    let mut session = OperatorSession::new(cfg, trials, operator_id, seed)?;
    let mut writer = log_path
        .map(|p| JsonlWriter::create(p, &session.log().header))
        .transpose()?;
    if let Some(w) = &mut writer {
        w.sync(session.log())?;
    }
    channel.send(session.snapshot_message(channel.now_ms()));
    while !session.is_finished() {
        let inbound = channel.recv_until(session.next_deadline());
        let now = channel.now_ms();
        let reply = match inbound {
            Inbound::Connected => {
                session.connect(now);
                true
            }
            Inbound::Disconnected => {
                session.disconnect(now);
                false
            }
            Inbound::Message(msg) => {
                let _ = session.handle(&msg, now);
                !matches!(msg.body, ControlBody::Heartbeat)
            }
            Inbound::Timeout => {
                session.tick(now);
                true
            }
            Inbound::Shutdown => {
                session.abort(now);
                false
            }
        };
        if let Some(w) = &mut writer {
            w.sync(session.log())?;
        }
        if reply || session.is_finished() {
            channel.send(session.snapshot_message(now));
        }
    }
    Ok(session.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &OperatorSession) -> Vec<&'static str> {
        s.log().events.iter().map(|e| e.body.kind()).collect()
    }

    fn session(variant: Variant, trials: u32) -> OperatorSession {
        let mut cfg = ProtocolConfig::for_variant(variant);
        cfg.reward_duration_ms = 1000;
        OperatorSession::new(&cfg, trials, "op", 5).unwrap()
    }

    #[test]
    fn wire_format() {
        let m = ControlMessage::mark(Classification::Hit);
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["kind"], "MarkResponse");
        assert_eq!(v["payload"]["classification"], "hit");
        assert_eq!(v["seq_ack"], 0);

        let hb: ControlMessage = serde_json::from_str(r#"{"kind":"Heartbeat","seq_ack":3}"#).unwrap();
        assert_eq!(hb.body, ControlBody::Heartbeat);
        let ab: ControlMessage = serde_json::from_str(r#"{"kind":"AbortSession","payload":null}"#).unwrap();
        assert_eq!(ab.body, ControlBody::AbortSession);
        let ov: ControlMessage =
            serde_json::from_str(r#"{"kind":"OverridePromptLevel","payload":{"level":4},"seq_ack":1}"#).unwrap();
        assert_eq!(ov.body, ControlBody::OverridePromptLevel { level: 4 });

        let s = session(Variant::LtmRi, 1).snapshot_message(0);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ControlMessage>(&text).unwrap(), s);
    }

    #[test]
    fn hit_inside_window_rewards_then_ends() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        assert_eq!(s.phase(), Phase::WindowOpen);
        s.handle(&ControlMessage::mark(Classification::Hit), 2500).unwrap();
        assert_eq!(s.phase(), Phase::Reward);
        s.tick(3499);
        assert_eq!(s.phase(), Phase::Reward);
        s.tick(3500);
        assert!(s.is_finished());
        assert_eq!(
            kinds(&s),
            [
                "SessionStarted",
                "TrialStarted",
                "PromptIssued",
                "BehaviorObserved",
                "ResponseClassified",
                "RewardDelivered",
                "TrialEnded",
                "SessionEnded"
            ]
        );
        let ended = &s.log().events[6];
        assert_eq!(ended.t_ms, 3500);
    }

    #[test]
    fn mark_after_window_is_rejected() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        let err = s.handle(&ControlMessage::mark(Classification::Hit), 7000).unwrap_err();
        assert!(err.contains("window"), "{err}");
        // the prompt timed out and level 2 is open
        let snap = s.snapshot(7000);
        assert_eq!(snap.prompt.unwrap().level, 2);
        assert_eq!(snap.last_rejection.as_deref(), Some(err.as_str()));
        let timeouts = s
            .log()
            .events
            .iter()
            .filter(|e| {
                matches!(
                    &e.body,
                    EventBody::ResponseClassified { response, .. }
                        if response.classification == Classification::Timeout
                )
            })
            .count();
        assert_eq!(timeouts, 1);
    }

    #[test]
    fn mark_for_closed_prompt_is_rejected() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        s.tick(7500);
        let err = s.handle(&ControlMessage::mark_for(Classification::Hit, 0, 0), 7600).unwrap_err();
        assert!(err.contains("window"), "{err}");
        s.handle(&ControlMessage::mark_for(Classification::Hit, 0, 1), 7700).unwrap();
        assert_eq!(s.phase(), Phase::Reward);
    }

    #[test]
    fn mark_just_inside_window_is_accepted() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        s.handle(&ControlMessage::mark(Classification::Hit), 6999).unwrap();
        assert_eq!(s.phase(), Phase::Reward);
    }

    #[test]
    fn improved_counters_in_snapshot() {
        let mut cfg = ProtocolConfig::with_levels(Variant::ImprovedLtmMri, 6, 3);
        cfg.reward_duration_ms = 1000;
        let mut s = OperatorSession::new(&cfg, 1, "op", 1).unwrap();
        s.connect(0);
        let mut now = 0;
        let mut seen = Vec::new();
        for _ in 0..4 {
            now += 100;
            s.handle(&ControlMessage::mark(Classification::Miss), now).unwrap();
            let snap = s.snapshot(now);
            seen.push((snap.prompt.unwrap().level, snap.counters.unwrap()));
        }
        assert_eq!(
            seen,
            vec![
                (1, Counters { local: 1, global: 0 }),
                (1, Counters { local: 2, global: 0 }),
                (2, Counters { local: 0, global: 1 }),
                (2, Counters { local: 1, global: 1 }),
            ]
        );
    }

    #[test]
    fn override_moves_next_prompt_up() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        assert!(s.handle(&ControlMessage::new(ControlBody::OverridePromptLevel { level: 1 }), 10).is_err());
        s.handle(&ControlMessage::new(ControlBody::OverridePromptLevel { level: 5 }), 10).unwrap();
        assert_eq!(s.snapshot(10).prompt.unwrap().level, 1);
        s.handle(&ControlMessage::mark(Classification::Miss), 20).unwrap();
        assert_eq!(s.snapshot(20).prompt.unwrap().level, 5);
    }

    #[test]
    fn abort_ends_open_trial_then_session() {
        let mut s = session(Variant::MrisLtm, 3);
        s.connect(0);
        s.handle(&ControlMessage::new(ControlBody::AbortSession), 50).unwrap();
        assert!(s.is_finished());
        let ks = kinds(&s);
        assert_eq!(&ks[ks.len() - 2..], ["TrialEnded", "SessionEnded"]);
        match &s.log().events.last().unwrap().body {
            EventBody::SessionEnded { reason, .. } => assert_eq!(*reason, EndReason::Aborted),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn disconnect_aborts_trial_and_waits() {
        let mut s = session(Variant::LtmRi, 2);
        s.connect(0);
        s.disconnect(5000);
        assert_eq!(s.phase(), Phase::AwaitingOperator);
        assert_eq!(s.snapshot(5000).history[0].aborted.as_deref(), Some("operator disconnected"));
        s.connect(9000);
        assert_eq!(s.phase(), Phase::WindowOpen);
        assert_eq!(s.snapshot(9000).trial, Some(1));
    }

    #[test]
    fn timeouts_exhaust_the_trial() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        s.tick(6 * 7000);
        assert!(s.is_finished());
        assert_eq!(s.snapshot(42_000).history[0].prompts_issued, 6);
    }

    #[test]
    fn inconsistent_mark_rejected() {
        let mut s = session(Variant::LtmRi, 1);
        s.connect(0);
        let msg = ControlMessage::new(ControlBody::MarkResponse {
            classification: Classification::Hit,
            trial: None,
            attempt: None,
            gaze_target: Some(GazeTarget::Robot1),
            torso_rotation_deg: None,
        });
        assert!(s.handle(&msg, 100).is_err());
        assert!(s.handle(&ControlMessage::mark(Classification::Timeout), 100).is_err());
        assert_eq!(s.phase(), Phase::WindowOpen);
    }
}
