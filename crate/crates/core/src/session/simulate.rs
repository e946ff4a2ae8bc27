//! Simulated sessions on a virtual clock.
//!
//! Timeline per prompt: the prompt is issued at `t`, the participant's
//! behaviour is observed at `t + min(latency, window)`, and the next prompt
//! follows when the window closes at `t + window`. A hit starts the reward,
//! which holds the clock for `reward_duration_ms`.

use rand::Rng;

use super::{EndReason, EventBody, ExchangeAct, ParticipantDescriptor, SessionError, SessionHeader, SessionLog, SessionMode, Side};
use crate::participant::{
    gaze_trace, rng_stream, sample_response, GazeTick, ParticipantModel, SimRng, DEFAULT_TICK_MS,
};
use crate::protocol::{
    classify_behavior, imitation_gate, imitation_sequence, GazeTarget, ProtocolConfig, RobotIndex,
    Trial, TrialStep,
};

/// Length of each scripted greeting between the two robots.
pub const GREETING_MS: u64 = 3_000;
/// The engagement phase lasts this many eye-contact thresholds.
pub const ENGAGEMENT_FACTOR: u64 = 2;

fn shifted(trace: Vec<GazeTick>, t0: u64) -> Vec<GazeTick> {
    trace
        .into_iter()
        .map(|g| GazeTick {
            t_ms: g.t_ms + t0,
            target: g.target,
        })
        .collect()
}

pub(super) fn side_for_trial(rng: &mut SimRng) -> Side {
    if rng.gen::<bool>() {
        Side::Left
    } else {
        Side::Right
    }
}

/// Plays the two-robot warm-up: two greetings, then a randomly chosen robot
/// turns to the participant. Eye contact held on either robot for the
/// configured threshold activates that robot's imitation gestures.
/// Returns the clock after the script.
pub fn run_inter_robot_script(
    log: &mut SessionLog,
    model: &ParticipantModel,
    rng: &mut SimRng,
    t0: u64,
) -> Result<u64, SessionError> {
    let threshold = log.header.config.eye_contact_threshold_ms;
    let turner = if rng.gen::<bool>() { RobotIndex::ONE } else { RobotIndex::TWO };
    let steps = [
        (RobotIndex::ONE, ExchangeAct::Greet, GREETING_MS),
        (RobotIndex::TWO, ExchangeAct::Reply, GREETING_MS),
        (turner, ExchangeAct::TurnToParticipant, ENGAGEMENT_FACTOR * threshold),
    ];
    let mut t = t0;
    let mut engagement = Vec::new();
    for (i, (robot, act, duration_ms)) in steps.into_iter().enumerate() {
        let gaze = shifted(gaze_trace(model, duration_ms, DEFAULT_TICK_MS, rng), t);
        if act == ExchangeAct::TurnToParticipant {
            engagement = gaze.clone();
        }
        log.push(
            t,
            EventBody::InterRobotExchange {
                step: i as u32 + 1,
                robot,
                act,
                duration_ms,
                gaze,
            },
        );
        t += duration_ms;
    }
    let runs: Vec<(GazeTarget, u64)> = engagement.iter().map(|g| (g.target, DEFAULT_TICK_MS)).collect();
    if let Some(robot) = imitation_gate(&runs, threshold) {
        log.push(
            t,
            EventBody::ImitationActivated {
                robot,
                gestures: imitation_sequence(robot.get())?,
            },
        );
    }
    Ok(t)
}

/// Runs `trials` trials against the simulated participant in `participant`.
/// The result depends only on the arguments.
pub fn run_simulated_session(
    cfg: &ProtocolConfig,
    trials: u32,
    participant: ParticipantDescriptor,
    seed: u64,
) -> Result<SessionLog, SessionError> {
    cfg.validate()?;
    let ParticipantDescriptor::Simulated { model, .. } = &participant else {
        return Err(SessionError::Mode("simulated session needs a simulated participant".into()));
    };
    model.validate()?;
    if model.levels() < cfg.n_max {
        return Err(SessionError::Mode(format!(
            "participant model covers {} levels, protocol needs {}",
            model.levels(),
            cfg.n_max
        )));
    }
    let model = model.clone();
    let header = SessionHeader::new(cfg.clone(), seed, participant, trials);
    let config_hash = header.hash();
    let mut log = SessionLog::new(header);
    log.push(
        0,
        EventBody::SessionStarted {
            mode: SessionMode::Simulated,
            variant: cfg.variant,
            trials,
            config_hash,
        },
    );

    let window = cfg.response_window_ms;
    let mut t = 0;
    if cfg.variant.is_multi_robot() {
        t = run_inter_robot_script(&mut log, &model, &mut rng_stream(seed, 0), t)?;
    }

    for trial in 0..trials {
        let mut rng = rng_stream(seed, u64::from(trial) + 1);
        log.push(
            t,
            EventBody::TrialStarted {
                trial,
                target_side: side_for_trial(&mut rng),
            },
        );
        let mut state = Trial::start(cfg)?;
        let mut attempt = 0;
        loop {
            let prompt = state.current_prompt().clone();
            let deadline = t + window;
            log.push(
                t,
                EventBody::PromptIssued {
                    trial,
                    attempt,
                    prompt: prompt.clone(),
                    window_deadline_ms: deadline,
                    counters: state.counters(),
                },
            );
            let sample = sample_response(&model, &prompt, window, &mut rng)?;
            let waited = (sample.latency_ms as u64).min(window);
            let gaze = shifted(gaze_trace(&model, waited, DEFAULT_TICK_MS, &mut rng), t);
            let t_obs = t + waited;
            log.push(
                t_obs,
                EventBody::BehaviorObserved {
                    trial,
                    attempt,
                    sample,
                    gaze,
                },
            );
            let response =
                classify_behavior(&sample, GazeTarget::TargetMonitor, window, cfg.torso_threshold_deg)?;
            log.push(t_obs, EventBody::ResponseClassified { trial, attempt, response });

            match state.record(response)? {
                TrialStep::Next(_) => {
                    t = deadline;
                    attempt += 1;
                }
                TrialStep::Done(outcome) => {
                    if let Some(level) = outcome.hit_level {
                        log.push(
                            t_obs,
                            EventBody::RewardDelivered {
                                trial,
                                level,
                                duration_ms: cfg.reward_duration_ms,
                            },
                        );
                        t = t_obs + cfg.reward_duration_ms;
                    } else {
                        t = deadline;
                    }
                    log.push(
                        t,
                        EventBody::TrialEnded {
                            trial,
                            hit_level: outcome.hit_level,
                            prompts_issued: outcome.prompts_issued,
                            escalation_score: outcome.escalation_score,
                            rewarded: outcome.rewarded,
                            aborted: None,
                        },
                    );
                    break;
                }
            }
        }
    }
    log.push(
        t,
        EventBody::SessionEnded {
            reason: EndReason::Completed,
            trials_completed: trials,
        },
    );
    Ok(log)
}
