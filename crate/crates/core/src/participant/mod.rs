//! Seedable stochastic participants.
//!
//! A participant answers each prompt with a per-level Bernoulli draw mixed
//! with an independent attention lapse. Every draw comes from a ChaCha8
//! stream (see [`rng_stream`]) so results are portable across platforms.
//!
//! Draw order inside [`sample_response`] is fixed: lapse, hit, latency, torso
//! rotation, then the off-target gaze choice. Changing it changes every log.

pub mod analytic;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{GazeTarget, PromptSpec};

pub use crate::protocol::BehaviorSample;

pub type SimRng = ChaCha8Rng;

/// Participant model file schema version.
pub const MODEL_SCHEMA: u32 = 1;
/// Gaze traces are sampled on this grid unless a caller asks otherwise.
pub const DEFAULT_TICK_MS: u64 = 100;
/// Torso rotation of simulated responses is drawn uniformly below this.
const SIMULATED_TORSO_MAX_DEG: f64 = 30.0;

/// Builds the generator for one stream of a seed. Stream 0 is reserved for
/// session-level draws; trial `t` (0-based) uses stream `t + 1`.
pub fn rng_stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid participant model: {0}")]
    InvalidModel(String),
}

/// Relative time shares and dwell length of free-looking gaze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeProfile {
    pub robot1: f64,
    pub robot2: f64,
    pub target_monitor: f64,
    pub non_target_monitor: f64,
    pub elsewhere: f64,
    pub mean_dwell_ms: f64,
}

impl Default for GazeProfile {
    fn default() -> Self {
        Self {
            robot1: 0.35,
            robot2: 0.15,
            target_monitor: 0.25,
            non_target_monitor: 0.10,
            elsewhere: 0.15,
            mean_dwell_ms: 1500.0,
        }
    }
}

impl GazeProfile {
    fn weights(&self) -> [(GazeTarget, f64); 5] {
        [
            (GazeTarget::Robot1, self.robot1),
            (GazeTarget::Robot2, self.robot2),
            (GazeTarget::TargetMonitor, self.target_monitor),
            (GazeTarget::NonTargetMonitor, self.non_target_monitor),
            (GazeTarget::Elsewhere, self.elsewhere),
        ]
    }

    /// A profile that only ever looks at `target`.
    pub fn fixed(target: GazeTarget) -> Self {
        let mut p = Self {
            robot1: 0.0,
            robot2: 0.0,
            target_monitor: 0.0,
            non_target_monitor: 0.0,
            elsewhere: 0.0,
            mean_dwell_ms: 1500.0,
        };
        match target {
            GazeTarget::Robot1 => p.robot1 = 1.0,
            GazeTarget::Robot2 => p.robot2 = 1.0,
            GazeTarget::TargetMonitor => p.target_monitor = 1.0,
            GazeTarget::NonTargetMonitor => p.non_target_monitor = 1.0,
            GazeTarget::Elsewhere => p.elsewhere = 1.0,
        }
        p
    }
}

fn default_learning_rate() -> f64 {
    1.0
}

fn default_latency_mean() -> f64 {
    2500.0
}

fn default_latency_spread() -> f64 {
    1200.0
}

fn default_severity() -> String {
    "unspecified".to_owned()
}

/// Only `base_hit_prob` and `lapse_prob` are required in a model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantModel {
    /// Probability of an on-target response at each level, index 0 = level 1.
    pub base_hit_prob: Vec<f64>,
    pub lapse_prob: f64,
    /// Multiplier applied to each level's odds between sessions.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_latency_mean")]
    pub latency_mean_ms: f64,
    #[serde(default = "default_latency_spread")]
    pub latency_spread_ms: f64,
    #[serde(default = "default_severity")]
    pub severity_tag: String,
    /// Carried into logs for bookkeeping; session seeds are passed explicitly.
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub gaze: GazeProfile,
}

impl ParticipantModel {
    pub fn new(base_hit_prob: Vec<f64>, lapse_prob: f64) -> Self {
        Self {
            base_hit_prob,
            lapse_prob,
            learning_rate: default_learning_rate(),
            latency_mean_ms: default_latency_mean(),
            latency_spread_ms: default_latency_spread(),
            severity_tag: default_severity(),
            rng_seed: 0,
            gaze: GazeProfile::default(),
        }
    }

    /// Near-ceiling responder for the six-level hierarchy: level 6 succeeds
    /// with probability 0.99 and attention lapses 5% of the time.
    pub fn calibrated() -> Self {
        let mut m = Self::new(vec![0.30, 0.45, 0.60, 0.75, 0.90, 0.99], 0.05);
        m.severity_tag = "calibrated".to_owned();
        m
    }

    pub fn with_learning_rate(mut self, rate: f64) -> Self {
        self.learning_rate = rate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn levels(&self) -> u32 {
        self.base_hit_prob.len() as u32
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidModel(m));
        if self.base_hit_prob.is_empty() {
            return bad("base_hit_prob is empty".into());
        }
        if let Some(p) = self.base_hit_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("hit probability {p} outside [0, 1]"));
        }
        if self.base_hit_prob.windows(2).any(|w| w[1] < w[0]) {
            return bad("base_hit_prob must be non-decreasing in level".into());
        }
        if !(0.0..=1.0).contains(&self.lapse_prob) {
            return bad(format!("lapse_prob {} outside [0, 1]", self.lapse_prob));
        }
        if !(self.learning_rate >= 1.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be >= 1", self.learning_rate));
        }
        if !(self.latency_mean_ms.is_finite() && self.latency_spread_ms >= 0.0) {
            return bad("latency parameters must be finite with non-negative spread".into());
        }
        let w = self.gaze.weights();
        if w.iter().any(|(_, x)| *x < 0.0) || w.iter().map(|(_, x)| x).sum::<f64>() <= 0.0 {
            return bad("gaze weights must be non-negative and not all zero".into());
        }
        if self.gaze.mean_dwell_ms.is_nan() || self.gaze.mean_dwell_ms <= 0.0 {
            return bad("gaze mean_dwell_ms must be > 0".into());
        }
        Ok(())
    }

    fn latency(&self, rng: &mut impl Rng, upper_ms: u64) -> i64 {
        let draw = if self.latency_spread_ms > 0.0 {
            Normal::new(self.latency_mean_ms, self.latency_spread_ms)
                .map(|n| n.sample(rng))
                .unwrap_or(self.latency_mean_ms)
        } else {
            self.latency_mean_ms
        };
        draw.round().clamp(0.0, upper_ms as f64) as i64
    }
}

/// Draws the participant's behaviour after `prompt`. The expected response is
/// a gaze shift to the target monitor within `window_ms`.
///
/// On-target responses have their latency clamped into the window so that
/// they classify as hits; off-target and lapse responses may run up to twice
/// the window and then classify as timeouts.
pub fn sample_response(
    model: &ParticipantModel,
    prompt: &PromptSpec,
    window_ms: u64,
    rng: &mut impl Rng,
) -> Result<BehaviorSample, SimError> {
    let idx = prompt
        .level
        .checked_sub(1)
        .filter(|i| (*i as usize) < model.base_hit_prob.len())
        .ok_or_else(|| {
            SimError::Contract(format!(
                "prompt level {} outside the model's 1..={}",
                prompt.level,
                model.levels()
            ))
        })? as usize;

    let lapsed = rng.gen::<f64>() < model.lapse_prob;
    let on_target = rng.gen::<f64>() < model.base_hit_prob[idx];
    let hit = !lapsed && on_target;
    let latency_ms = model.latency(rng, if hit { window_ms } else { 2 * window_ms });
    let torso_rotation_deg = rng.gen::<f64>() * SIMULATED_TORSO_MAX_DEG;
    let off_target = [GazeTarget::NonTargetMonitor, GazeTarget::Robot1, GazeTarget::Elsewhere]
        [rng.gen_range(0..3)];

    let gaze_target = if lapsed {
        GazeTarget::Elsewhere
    } else if hit {
        GazeTarget::TargetMonitor
    } else {
        off_target
    };
    Ok(BehaviorSample {
        gaze_target,
        latency_ms,
        torso_rotation_deg,
    })
}

fn learn_probability(p: f64, rate: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    let odds = p / (1.0 - p) * rate;
    (odds / (1.0 + odds)).clamp(0.0, 1.0)
}

/// Multiplies every level's odds by the model's learning rate.
pub fn apply_session_learning(model: &ParticipantModel) -> ParticipantModel {
    let mut next = model.clone();
    next.base_hit_prob = model
        .base_hit_prob
        .iter()
        .map(|&p| learn_probability(p, model.learning_rate))
        .collect();
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazeTick {
    pub t_ms: u64,
    pub target: GazeTarget,
}

/// Piecewise-constant free gaze over `duration_ms`, one entry per `tick_ms`.
/// Dwell times are exponential with the profile's mean, at least one tick.
pub fn gaze_trace(
    model: &ParticipantModel,
    duration_ms: u64,
    tick_ms: u64,
    rng: &mut impl Rng,
) -> Vec<GazeTick> {
    let ticks = duration_ms.checked_div(tick_ms).unwrap_or(0);
    let mut trace = Vec::with_capacity(ticks as usize);
    let weights = model.gaze.weights();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let dwell = Exp::new(1.0 / model.gaze.mean_dwell_ms).ok();

    let mut i = 0;
    while i < ticks {
        let mut u = rng.gen::<f64>() * total;
        let mut target = weights[weights.len() - 1].0;
        for &(t, w) in &weights {
            if w > 0.0 && u < w {
                target = t;
                break;
            }
            u -= w;
        }
        let dwell_ms: f64 = dwell.map(|d| d.sample(rng)).unwrap_or(model.gaze.mean_dwell_ms);
        let run = ((dwell_ms / tick_ms as f64).round() as u64).max(1);
        for _ in 0..run.min(ticks - i) {
            trace.push(GazeTick {
                t_ms: i * tick_ms,
                target,
            });
            i += 1;
        }
    }
    trace
}

/// Participant model file: the model plus a schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u32,
    #[serde(flatten)]
    pub model: ParticipantModel,
}

impl ModelFile {
    pub fn into_model(self) -> Result<ParticipantModel, SimError> {
        if self.schema != MODEL_SCHEMA {
            return Err(SimError::InvalidModel(format!(
                "unsupported model schema {} (expected {MODEL_SCHEMA})",
                self.schema
            )));
        }
        self.model.validate()?;
        Ok(self.model)
    }
}
