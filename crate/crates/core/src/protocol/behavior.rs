//! Cue detection and the eye-contact gated imitation module.

use serde::{Deserialize, Serialize};

use super::{Classification, GazeTarget, ProtocolError, Response, RobotIndex};

/// Raw observation of what the participant did after a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSample {
    pub gaze_target: GazeTarget,
    /// Milliseconds from prompt onset to the gaze shift.
    pub latency_ms: i64,
    pub torso_rotation_deg: f64,
}

/// Decides whether a sample is the expected response.
///
/// A late sample is a `Timeout` whatever the gaze; an on-target gaze produced
/// by turning the torso past `torso_threshold_deg` is disqualified.
pub fn classify_behavior(
    sample: &BehaviorSample,
    expected_target: GazeTarget,
    window_ms: u64,
    torso_threshold_deg: f64,
) -> Result<Response, ProtocolError> {
    if sample.latency_ms < 0 {
        return Err(ProtocolError::contract(format!(
            "negative latency {} ms",
            sample.latency_ms
        )));
    }
    let latency_ms = sample.latency_ms as u64;
    let classification = if latency_ms > window_ms {
        Classification::Timeout
    } else if sample.gaze_target != expected_target {
        Classification::Miss
    } else if sample.torso_rotation_deg > torso_threshold_deg {
        Classification::DisqualifiedBodyRotation
    } else {
        Classification::Hit
    };
    Ok(Response {
        classification,
        latency_ms,
        gaze_target: sample.gaze_target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gesture {
    Forward,
    Backward,
    RaiseHands,
    HandsDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GestureCommand {
    pub robot_index: RobotIndex,
    pub gesture: Gesture,
}

/// Returns the first robot that receives an uninterrupted run of eye contact
/// lasting at least `threshold_ms`. Consecutive entries with the same target
/// are treated as one run. Only one robot can be activated per evaluation.
pub fn imitation_gate(gaze_events: &[(GazeTarget, u64)], threshold_ms: u64) -> Option<RobotIndex> {
    let mut run: Option<(GazeTarget, u64)> = None;
    for &(target, duration) in gaze_events {
        let total = match run {
            Some((t, acc)) if t == target => acc + duration,
            _ => duration,
        };
        run = Some((target, total));
        if let Some(robot) = target.robot() {
            if total >= threshold_ms {
                return Some(robot);
            }
        }
    }
    None
}

/// Robot 1 moves forward and back, robot 2 raises and lowers its hands.
pub fn imitation_sequence(robot_index: u8) -> Result<Vec<GestureCommand>, ProtocolError> {
    let robot = RobotIndex::new(robot_index)?;
    let gestures = match robot.get() {
        1 => [Gesture::Forward, Gesture::Backward],
        _ => [Gesture::RaiseHands, Gesture::HandsDown],
    };
    Ok(gestures
        .into_iter()
        .map(|gesture| GestureCommand {
            robot_index: robot,
            gesture,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(gaze: GazeTarget, latency: i64, torso: f64) -> BehaviorSample {
        BehaviorSample {
            gaze_target: gaze,
            latency_ms: latency,
            torso_rotation_deg: torso,
        }
    }

    fn classify(s: BehaviorSample) -> Classification {
        classify_behavior(&s, GazeTarget::TargetMonitor, 7000, 90.0)
            .unwrap()
            .classification
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(sample(GazeTarget::TargetMonitor, 2100, 10.0)), Classification::Hit);
        assert_eq!(
            classify(sample(GazeTarget::TargetMonitor, 2100, 120.0)),
            Classification::DisqualifiedBodyRotation
        );
        assert_eq!(classify(sample(GazeTarget::TargetMonitor, 8000, 5.0)), Classification::Timeout);
        assert_eq!(classify(sample(GazeTarget::NonTargetMonitor, 2100, 5.0)), Classification::Miss);
    }

    #[test]
    fn window_and_threshold_are_inclusive() {
        assert_eq!(classify(sample(GazeTarget::TargetMonitor, 7000, 90.0)), Classification::Hit);
        assert_eq!(classify(sample(GazeTarget::TargetMonitor, 7001, 0.0)), Classification::Timeout);
    }

    #[test]
    fn negative_latency_is_a_contract_violation() {
        let r = classify_behavior(&sample(GazeTarget::TargetMonitor, -1, 0.0), GazeTarget::TargetMonitor, 7000, 90.0);
        assert!(matches!(r, Err(ProtocolError::Contract(_))));
    }

    #[test]
    fn hit_iff_rating_one() {
        for gaze in GazeTarget::ALL {
            for latency in [0, 3000, 7000, 7001, 14000] {
                for torso in [0.0, 45.0, 90.0, 91.0, 180.0] {
                    let r = classify_behavior(&sample(gaze, latency, torso), GazeTarget::TargetMonitor, 7000, 90.0)
                        .unwrap();
                    assert_eq!(r.is_hit(), r.rating() == 1);
                }
            }
        }
    }

    #[test]
    fn gate_examples() {
        assert_eq!(imitation_gate(&[(GazeTarget::Robot1, 5200)], 5000), Some(RobotIndex::ONE));
        assert_eq!(
            imitation_gate(&[(GazeTarget::Robot1, 4900), (GazeTarget::Robot2, 100)], 5000),
            None
        );
        assert_eq!(
            imitation_gate(&[(GazeTarget::Robot2, 6000), (GazeTarget::Robot1, 7000)], 5000),
            Some(RobotIndex::TWO)
        );
    }

    #[test]
    fn gate_merges_contiguous_runs_only() {
        let split = [(GazeTarget::Robot1, 3000), (GazeTarget::Robot1, 2000)];
        assert_eq!(imitation_gate(&split, 5000), Some(RobotIndex::ONE));
        let broken = [
            (GazeTarget::Robot1, 3000),
            (GazeTarget::Elsewhere, 100),
            (GazeTarget::Robot1, 2000),
        ];
        assert_eq!(imitation_gate(&broken, 5000), None);
        assert_eq!(imitation_gate(&[(GazeTarget::TargetMonitor, 9000)], 5000), None);
        assert_eq!(imitation_gate(&[], 5000), None);
    }

    #[test]
    fn imitation_sequences() {
        let g = |r| {
            imitation_sequence(r)
                .unwrap()
                .into_iter()
                .map(|c| c.gesture)
                .collect::<Vec<_>>()
        };
        assert_eq!(g(1), vec![Gesture::Forward, Gesture::Backward]);
        assert_eq!(g(2), vec![Gesture::RaiseHands, Gesture::HandsDown]);
        assert!(g(1).iter().all(|x| !g(2).contains(x)));
        assert!(imitation_sequence(3).is_err());
        assert!(imitation_sequence(0).is_err());
    }
}
