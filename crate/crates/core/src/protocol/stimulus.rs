//! Stimulus catalogs, the `Stronger` ordering and multi-robot stimulus combos.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ProtocolError;

/// Which catalog a stimulus belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusKind {
    RobotAction,
    EnvFactor,
}

/// A stimulus identified by its kind and its 1-based rank within that kind.
/// Higher ranks carry more informative content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StimulusRank {
    pub kind: StimulusKind,
    pub rank: u32,
}

impl StimulusRank {
    pub fn new(kind: StimulusKind, rank: u32) -> Result<Self, ProtocolError> {
        if rank == 0 {
            return Err(ProtocolError::contract("stimulus rank must be >= 1"));
        }
        Ok(Self { kind, rank })
    }

    pub fn robot_action(rank: u32) -> Result<Self, ProtocolError> {
        Self::new(StimulusKind::RobotAction, rank)
    }

    pub fn env_factor(rank: u32) -> Result<Self, ProtocolError> {
        Self::new(StimulusKind::EnvFactor, rank)
    }
}

impl fmt::Display for StimulusRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StimulusKind::RobotAction => write!(f, "RA{}", self.rank),
            StimulusKind::EnvFactor => write!(f, "EF{}", self.rank),
        }
    }
}

/// Strict order between two stimuli of the same kind: `x` is stronger than
/// `y` iff its rank is greater.
pub fn stronger(x: StimulusRank, y: StimulusRank) -> Result<bool, ProtocolError> {
    if x.kind != y.kind {
        return Err(ProtocolError::contract(format!(
            "cannot compare {x} with {y}: stimulus kinds differ"
        )));
    }
    Ok(x.rank > y.rank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Speech,
    Motion,
}

/// One of the three cumulative stimulus combinations delivered by the robots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusCombo {
    pub j: u8,
    pub contents: BTreeSet<Modality>,
}

impl StimulusCombo {
    pub fn is_subset_of(&self, other: &StimulusCombo) -> bool {
        self.contents.is_subset(&other.contents)
    }
}

/// `1 -> V`, `2 -> V + S`, `3 -> V + S + M`.
pub fn stimulus_set(j: u8) -> Result<StimulusCombo, ProtocolError> {
    let contents: &[Modality] = match j {
        1 => &[Modality::Visual],
        2 => &[Modality::Visual, Modality::Speech],
        3 => &[Modality::Visual, Modality::Speech, Modality::Motion],
        _ => {
            return Err(ProtocolError::contract(format!(
                "stimulus combo index {j} outside 1..=3"
            )))
        }
    };
    Ok(StimulusCombo {
        j,
        contents: contents.iter().copied().collect(),
    })
}
