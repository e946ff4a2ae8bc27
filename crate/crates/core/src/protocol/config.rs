//! Protocol configuration: variant, prompt hierarchy and timing parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stimulus::{stimulus_set, StimulusRank};
use super::{ProtocolError, PromptSpec, RobotIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Single robot, one prompt per level.
    #[serde(rename = "ltm-ri")]
    LtmRi,
    /// Two robots with cumulative stimulus combos, one prompt per level.
    #[serde(rename = "mris")]
    MrisLtm,
    /// Two robots; each level is repeated up to `max_attempts` times before escalating.
    #[serde(rename = "improved")]
    ImprovedLtmMri,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LtmRi => "ltm-ri",
            Variant::MrisLtm => "mris",
            Variant::ImprovedLtmMri => "improved",
        }
    }

    pub fn is_multi_robot(self) -> bool {
        !matches!(self, Variant::LtmRi)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ltm-ri" => Ok(Variant::LtmRi),
            "mris" => Ok(Variant::MrisLtm),
            "improved" => Ok(Variant::ImprovedLtmMri),
            other => Err(ProtocolError::Config(format!(
                "unknown variant {other:?} (expected ltm-ri, mris or improved)"
            ))),
        }
    }
}

/// Ranks of the robot action and environmental factor used at one prompt level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfEntry {
    pub ra_rank: u32,
    pub ef_rank: u32,
}

/// Six-level joint-attention hierarchy: levels 1-2 and 3-4 share a prompt,
/// levels 5 and 6 upgrade the monitor content.
pub const JOINT_ATTENTION_TABLE: [PfEntry; 6] = [
    PfEntry { ra_rank: 1, ef_rank: 1 },
    PfEntry { ra_rank: 1, ef_rank: 1 },
    PfEntry { ra_rank: 2, ef_rank: 1 },
    PfEntry { ra_rank: 2, ef_rank: 1 },
    PfEntry { ra_rank: 2, ef_rank: 2 },
    PfEntry { ra_rank: 2, ef_rank: 3 },
];

pub const DEFAULT_RESPONSE_WINDOW_MS: u64 = 7_000;
pub const SHORT_RESPONSE_WINDOW_MS: u64 = 3_000;
pub const DEFAULT_REWARD_DURATION_MS: u64 = 10_000;
pub const DEFAULT_EYE_CONTACT_THRESHOLD_MS: u64 = 5_000;
pub const DEFAULT_TORSO_THRESHOLD_DEG: f64 = 90.0;

/// Fields left out of a config document take their `LtmRi` defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub variant: Variant,
    pub n_max: u32,
    /// Attempts per level before escalating. Only consulted by `ImprovedLtmMri`.
    pub max_attempts: u32,
    pub response_window_ms: u64,
    pub reward_duration_ms: u64,
    pub eye_contact_threshold_ms: u64,
    pub torso_threshold_deg: f64,
    pub ra_catalog: Vec<String>,
    pub ef_catalog: Vec<String>,
    /// Entry `i` describes prompt level `i + 1`.
    pub pf_table: Vec<PfEntry>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self::for_variant(Variant::LtmRi)
    }
}

impl ProtocolConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            n_max: 6,
            max_attempts: 2,
            response_window_ms: DEFAULT_RESPONSE_WINDOW_MS,
            reward_duration_ms: DEFAULT_REWARD_DURATION_MS,
            eye_contact_threshold_ms: DEFAULT_EYE_CONTACT_THRESHOLD_MS,
            torso_threshold_deg: DEFAULT_TORSO_THRESHOLD_DEG,
            ra_catalog: vec![
                "head turn + \"Look!\"".to_owned(),
                "head turn + point + \"Look over there!\"".to_owned(),
            ],
            ef_catalog: vec![
                "static picture".to_owned(),
                "audio clip".to_owned(),
                "video clip".to_owned(),
            ],
            pf_table: JOINT_ATTENTION_TABLE.to_vec(),
        }
    }

    /// Config with `n_max` levels. The joint-attention table is truncated, or
    /// extended by repeating its strongest entry.
    pub fn with_levels(variant: Variant, n_max: u32, max_attempts: u32) -> Self {
        let mut cfg = Self::for_variant(variant);
        cfg.n_max = n_max;
        cfg.max_attempts = max_attempts;
        let last = *JOINT_ATTENTION_TABLE.last().unwrap();
        cfg.pf_table = (0..n_max as usize)
            .map(|i| JOINT_ATTENTION_TABLE.get(i).copied().unwrap_or(last))
            .collect();
        cfg
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |msg: String| Err(ProtocolError::Config(msg));
        if self.n_max == 0 {
            return bad("n_max must be >= 1".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1".into());
        }
        if self.response_window_ms == 0 {
            return bad("response_window_ms must be > 0".into());
        }
        if !(0.0..=180.0).contains(&self.torso_threshold_deg) {
            return bad("torso_threshold_deg must lie in [0, 180]".into());
        }
        if self.pf_table.len() != self.n_max as usize {
            return bad(format!(
                "pf_table has {} entries but n_max is {}",
                self.pf_table.len(),
                self.n_max
            ));
        }
        for (i, e) in self.pf_table.iter().enumerate() {
            let level = i + 1;
            if e.ra_rank == 0 || e.ra_rank as usize > self.ra_catalog.len() {
                return bad(format!("level {level}: ra_rank {} not in catalog", e.ra_rank));
            }
            if e.ef_rank == 0 || e.ef_rank as usize > self.ef_catalog.len() {
                return bad(format!("level {level}: ef_rank {} not in catalog", e.ef_rank));
            }
        }
        for (i, w) in self.pf_table.windows(2).enumerate() {
            if w[1].ra_rank < w[0].ra_rank || w[1].ef_rank < w[0].ef_rank {
                return bad(format!("pf_table not monotone between levels {} and {}", i + 1, i + 2));
            }
        }
        Ok(())
    }

    /// Attempts allowed at a level before escalation.
    pub fn attempts_per_level(&self) -> u32 {
        match self.variant {
            Variant::ImprovedLtmMri => self.max_attempts,
            Variant::LtmRi | Variant::MrisLtm => 1,
        }
    }

    /// Upper bound on prompts in a single trial.
    pub fn max_prompts_per_trial(&self) -> u32 {
        self.n_max * self.attempts_per_level()
    }

    /// Builds the prompt for `level` issued by `robot`. Single-robot variants
    /// always use robot 1.
    pub fn prompt_at(&self, level: u32, robot: RobotIndex) -> Result<PromptSpec, ProtocolError> {
        if level == 0 || level > self.n_max {
            return Err(ProtocolError::contract(format!(
                "prompt level {level} outside 1..={}",
                self.n_max
            )));
        }
        let entry = self
            .pf_table
            .get(level as usize - 1)
            .ok_or_else(|| ProtocolError::Config(format!("pf_table has no level {level}")))?;
        let (robot_index, stimulus_combo) = if self.variant.is_multi_robot() {
            (robot, Some(stimulus_set(self.combo_index(level))?))
        } else {
            (RobotIndex::ONE, None)
        };
        Ok(PromptSpec {
            level,
            robot_action: StimulusRank::robot_action(entry.ra_rank)?,
            env_factor: StimulusRank::env_factor(entry.ef_rank)?,
            robot_index,
            stimulus_combo,
        })
    }

    /// Spreads the levels evenly over the three stimulus combos.
    fn combo_index(&self, level: u32) -> u8 {
        let j = (3 * level).div_ceil(self.n_max);
        j.clamp(1, 3) as u8
    }

    pub fn ra_description(&self, rank: u32) -> Option<&str> {
        self.ra_catalog.get(rank.checked_sub(1)? as usize).map(String::as_str)
    }

    pub fn ef_description(&self, rank: u32) -> Option<&str> {
        self.ef_catalog.get(rank.checked_sub(1)? as usize).map(String::as_str)
    }
}
