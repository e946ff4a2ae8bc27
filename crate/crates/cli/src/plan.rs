//! Experiment plans for batch simulation.

use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ltm_core::participant::ParticipantModel;
use ltm_core::protocol::Variant;
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize)]
pub struct CohortMember {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(flatten)]
    pub model: ParticipantModel,
}

fn one() -> u32 {
    1
}

fn default_trials() -> u32 {
    10
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::LtmRi]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub cohort: Vec<CohortMember>,
    #[serde(default = "one")]
    pub sessions_per_participant: u32,
    #[serde(default = "default_trials")]
    pub trials_per_session: u32,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            cohort: vec![CohortMember {
                id: None,
                model: ParticipantModel::calibrated(),
            }],
            sessions_per_participant: 1,
            trials_per_session: default_trials(),
            variants: default_variants(),
            seed_base: 0,
            output_dir: None,
        }
    }
}

/// One session to run.
#[derive(Debug, Clone)]
pub struct Job {
    pub variant: Variant,
    pub participant: String,
    /// 1-based.
    pub session: u32,
    pub model: ParticipantModel,
    pub seed: u64,
}

/// Stable per-session seed: the first eight bytes of
/// SHA-256("{seed_base}/{participant}/{session}/{variant}"), big endian.
pub fn derive_seed(seed_base: u64, participant: usize, session: u32, variant: Variant) -> u64 {
    let digest = Sha256::digest(format!("{seed_base}/{participant}/{session}/{variant}").as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl ExperimentPlan {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))
    }

    pub fn participant_id(&self, index: usize) -> String {
        self.cohort[index]
            .id
            .clone()
            .unwrap_or_else(|| format!("p{}", index + 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cohort.is_empty() {
            bail!("plan cohort is empty");
        }
        if self.sessions_per_participant == 0 || self.trials_per_session == 0 {
            bail!("sessions_per_participant and trials_per_session must be >= 1");
        }
        if self.variants.is_empty() {
            bail!("plan lists no variants");
        }
        let mut ids = HashSet::new();
        for (i, m) in self.cohort.iter().enumerate() {
            let id = self.participant_id(i);
            if id.is_empty() || id.contains(['/', '\\']) {
                bail!("participant id {id:?} is not usable as a file name");
            }
            if !ids.insert(id.clone()) {
                bail!("participant id {id:?} appears twice");
            }
            m.model.validate().with_context(|| format!("participant {id}"))?;
        }
        Ok(())
    }

    /// Every session of the plan in a fixed order. Each participant's model
    /// for session `k` has had `k - 1` rounds of between-session learning.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        self.validate()?;
        let mut jobs = Vec::new();
        let mut seeds = HashSet::new();
        for &variant in &self.variants {
            for (p, member) in self.cohort.iter().enumerate() {
                let mut model = member.model.clone();
                for session in 1..=self.sessions_per_participant {
                    let seed = derive_seed(self.seed_base, p, session, variant);
                    if !seeds.insert(seed) {
                        bail!("derived seed collision for participant {p}, session {session}");
                    }
                    jobs.push(Job {
                        variant,
                        participant: self.participant_id(p),
                        session,
                        model: model.clone(),
                        seed,
                    });
                    model = ltm_core::participant::apply_session_learning(&model);
                }
            }
        }
        Ok(jobs)
    }
}
