//! Session metrics: intensity values, hit-level summaries and looking time.
//!
//! All functions ignore aborted trials. Two intensity readings are exposed:
//! [`level_intensity`] is the share of trials that ended with a hit exactly at
//! level `n`, and [`cumulative_intensity`] is the share that hit at or before
//! `n` (the prefix sum of the former).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::participant::GazeTick;
use crate::protocol::{GazeTarget, TrialOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("contract violation: {0}")]
    Contract(String),
}

fn valid(outcomes: &[TrialOutcome]) -> Result<Vec<&TrialOutcome>, MetricsError> {
    let v: Vec<_> = outcomes.iter().filter(|o| o.is_valid()).collect();
    if v.is_empty() {
        return Err(MetricsError::Contract("no completed trials".into()));
    }
    Ok(v)
}

pub fn level_intensity(outcomes: &[TrialOutcome], level: u32) -> Result<f64, MetricsError> {
    let v = valid(outcomes)?;
    let hits = v.iter().filter(|o| o.hit_level == Some(level)).count();
    Ok(hits as f64 / v.len() as f64)
}

pub fn cumulative_intensity(outcomes: &[TrialOutcome], level: u32) -> Result<f64, MetricsError> {
    let v = valid(outcomes)?;
    let hits = v
        .iter()
        .filter(|o| o.hit_level.is_some_and(|h| h <= level))
        .count();
    Ok(hits as f64 / v.len() as f64)
}

/// Share of completed trials that exhausted every level without a hit.
pub fn miss_fraction(outcomes: &[TrialOutcome]) -> Result<f64, MetricsError> {
    let v = valid(outcomes)?;
    Ok(v.iter().filter(|o| o.hit_level.is_none()).count() as f64 / v.len() as f64)
}

/// Mean and population standard deviation of the hit level over hit trials.
pub fn avg_hit_prompt_level(outcomes: &[TrialOutcome]) -> Result<(f64, f64), MetricsError> {
    // integer sums keep the result independent of trial order
    let (mut n, mut sum, mut sum_sq) = (0u128, 0u128, 0u128);
    for h in outcomes.iter().filter(|o| o.is_valid()).filter_map(|o| o.hit_level) {
        n += 1;
        sum += u128::from(h);
        sum_sq += u128::from(h) * u128::from(h);
    }
    if n == 0 {
        return Err(MetricsError::Contract("no trial ended in a hit".into()));
    }
    let mean = sum as f64 / n as f64;
    let var = (n * sum_sq - sum * sum) as f64 / (n * n) as f64;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityReport {
    /// Index 0 is level 1.
    pub per_level: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub total_trials: usize,
}

impl IntensityReport {
    pub fn from_outcomes(outcomes: &[TrialOutcome], n_max: u32) -> Result<Self, MetricsError> {
        let total_trials = valid(outcomes)?.len();
        let per_level = (1..=n_max)
            .map(|n| level_intensity(outcomes, n))
            .collect::<Result<Vec<_>, _>>()?;
        let cumulative = (1..=n_max)
            .map(|n| cumulative_intensity(outcomes, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            per_level,
            cumulative,
            total_trials,
        })
    }
}

/// What a looking-time fraction counts as "on".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LookTarget {
    Exactly(GazeTarget),
    /// Either robot.
    AnyRobot,
}

impl LookTarget {
    pub fn matches(self, g: GazeTarget) -> bool {
        match self {
            LookTarget::Exactly(t) => t == g,
            LookTarget::AnyRobot => g.robot().is_some(),
        }
    }

    /// Regions that partition every gaze sample.
    pub const REGIONS: [LookTarget; 4] = [
        LookTarget::AnyRobot,
        LookTarget::Exactly(GazeTarget::TargetMonitor),
        LookTarget::Exactly(GazeTarget::NonTargetMonitor),
        LookTarget::Exactly(GazeTarget::Elsewhere),
    ];

    pub fn label(self) -> &'static str {
        match self {
            LookTarget::AnyRobot => "robot",
            LookTarget::Exactly(GazeTarget::Robot1) => "robot1",
            LookTarget::Exactly(GazeTarget::Robot2) => "robot2",
            LookTarget::Exactly(GazeTarget::TargetMonitor) => "target_monitor",
            LookTarget::Exactly(GazeTarget::NonTargetMonitor) => "non_target_monitor",
            LookTarget::Exactly(GazeTarget::Elsewhere) => "elsewhere",
        }
    }
}

impl From<GazeTarget> for LookTarget {
    fn from(g: GazeTarget) -> Self {
        LookTarget::Exactly(g)
    }
}

/// Fraction of ticks whose gaze matches `target`, optionally restricted to
/// ticks with `start <= t_ms < end`.
pub fn looking_fraction(
    trace: &[GazeTick],
    target: impl Into<LookTarget>,
    interval: Option<(u64, u64)>,
) -> Result<f64, MetricsError> {
    if trace.is_empty() {
        return Err(MetricsError::Contract("empty gaze trace".into()));
    }
    let target = target.into();
    let in_window = |t: &&GazeTick| interval.is_none_or(|(a, b)| t.t_ms >= a && t.t_ms < b);
    let considered: Vec<&GazeTick> = trace.iter().filter(in_window).collect();
    if considered.is_empty() {
        return Err(MetricsError::Contract("no gaze ticks inside the interval".into()));
    }
    let on = considered.iter().filter(|t| target.matches(t.target)).count();
    Ok(on as f64 / considered.len() as f64)
}
