//! Aggregate reports over session logs.
//!
//! Each entry is `{metric, value, method, n, config_hash}`. Logs are grouped
//! by the hash of their protocol config; mixing configs is refused unless
//! explicitly allowed, in which case every group is reported separately and
//! groups are compared pairwise with the rank-sum test.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{self, LookTarget, MetricsError};
use crate::protocol::{GazeTarget, ProtocolConfig, TrialOutcome};
use crate::session::{gaze_from_log, outcomes_from_log, ParticipantDescriptor, ReplayError, SessionLog};
use crate::stats::{wilcoxon_rank_sum, wilcoxon_signed_rank, TestResult};

pub const DESCRIPTIVE: &str = "descriptive";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no session logs given")]
    Empty,
    #[error("logs use {0} different protocol configs; pass allow-mixed to report them side by side")]
    MixedConfigs(usize),
    #[error("log {index}: {source}")]
    Log {
        index: usize,
        #[source]
        source: ReplayError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub metric: String,
    pub value: f64,
    pub method: String,
    pub n: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
}

/// SHA-256 of a protocol config's JSON form.
pub fn config_hash(cfg: &ProtocolConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

struct Group<'a> {
    cfg: &'a ProtocolConfig,
    logs: Vec<(usize, &'a SessionLog)>,
}

impl Report {
    pub fn from_logs(logs: &[SessionLog], allow_mixed: bool) -> Result<Self, ReportError> {
        if logs.is_empty() {
            return Err(ReportError::Empty);
        }
        let mut groups: BTreeMap<String, Group> = BTreeMap::new();
        for (i, log) in logs.iter().enumerate() {
            groups
                .entry(config_hash(&log.header.config))
                .or_insert_with(|| Group {
                    cfg: &log.header.config,
                    logs: Vec::new(),
                })
                .logs
                .push((i, log));
        }
        if groups.len() > 1 && !allow_mixed {
            return Err(ReportError::MixedConfigs(groups.len()));
        }

        let mut report = Report::default();
        let mut hit_levels: Vec<(String, Vec<f64>)> = Vec::new();
        for (hash, group) in &groups {
            let mut outcomes = Vec::new();
            let mut per_session = Vec::new();
            for &(index, log) in &group.logs {
                let o = outcomes_from_log(log).map_err(|source| ReportError::Log { index, source })?;
                per_session.push((log, o.clone()));
                outcomes.extend(o);
            }
            report.group_entries(hash, group.cfg, &outcomes, &group.logs)?;
            report.session_entries(hash, group.cfg, &per_session)?;
            report.learning_entries(hash, &per_session);
            hit_levels.push((
                hash.clone(),
                outcomes
                    .iter()
                    .filter(|o| o.is_valid())
                    .filter_map(|o| o.hit_level)
                    .map(f64::from)
                    .collect(),
            ));
        }
        for (i, (ha, a)) in hit_levels.iter().enumerate() {
            for (hb, b) in &hit_levels[i + 1..] {
                if let Some(t) = wilcoxon_rank_sum(a, b) {
                    report.push_test("rank_sum_hit_level", &t, &format!("{ha}+{hb}"));
                }
            }
        }
        Ok(report)
    }

    fn push(&mut self, metric: impl Into<String>, value: f64, method: &str, n: usize, hash: &str) {
        self.entries.push(ReportEntry {
            metric: metric.into(),
            value,
            method: method.to_owned(),
            n,
            config_hash: hash.to_owned(),
        });
    }

    fn push_test(&mut self, name: &str, t: &TestResult, hash: &str) {
        let n = t.n.iter().sum();
        self.push(format!("{name}.statistic"), t.statistic, t.method.label(), n, hash);
        self.push(format!("{name}.p_value"), t.p_value, t.method.label(), n, hash);
    }

    fn group_entries(
        &mut self,
        hash: &str,
        cfg: &ProtocolConfig,
        outcomes: &[TrialOutcome],
        logs: &[(usize, &SessionLog)],
    ) -> Result<(), ReportError> {
        let valid = outcomes.iter().filter(|o| o.is_valid()).count();
        self.push(format!("sessions[{}]", cfg.variant), logs.len() as f64, DESCRIPTIVE, logs.len(), hash);
        self.push("trials_valid", valid as f64, DESCRIPTIVE, outcomes.len(), hash);
        self.push(
            "trials_aborted",
            (outcomes.len() - valid) as f64,
            DESCRIPTIVE,
            outcomes.len(),
            hash,
        );
        if valid == 0 {
            return Ok(());
        }
        let intensity = metrics::IntensityReport::from_outcomes(outcomes, cfg.n_max)?;
        for (i, v) in intensity.per_level.iter().enumerate() {
            self.push(format!("level_intensity[{}]", i + 1), *v, DESCRIPTIVE, valid, hash);
        }
        for (i, v) in intensity.cumulative.iter().enumerate() {
            self.push(format!("cumulative_intensity[{}]", i + 1), *v, DESCRIPTIVE, valid, hash);
        }
        self.push("miss_fraction", metrics::miss_fraction(outcomes)?, DESCRIPTIVE, valid, hash);
        let hits = outcomes.iter().filter(|o| o.is_valid() && o.hit_level.is_some()).count();
        if hits > 0 {
            let (mean, sd) = metrics::avg_hit_prompt_level(outcomes)?;
            self.push("avg_hit_prompt_level", mean, DESCRIPTIVE, hits, hash);
            self.push("avg_hit_prompt_level.sd", sd, DESCRIPTIVE, hits, hash);
        }
        let prompts: u32 = outcomes.iter().filter(|o| o.is_valid()).map(|o| o.prompts_issued).sum();
        self.push("prompts_per_trial", f64::from(prompts) / valid as f64, DESCRIPTIVE, valid, hash);

        let gaze: Vec<_> = logs.iter().flat_map(|(_, l)| gaze_from_log(l)).collect();
        if !gaze.is_empty() {
            let targets = LookTarget::REGIONS
                .into_iter()
                .chain([GazeTarget::Robot1.into(), GazeTarget::Robot2.into()]);
            for t in targets {
                let f = metrics::looking_fraction(&gaze, t, None)?;
                self.push(format!("looking_fraction[{}]", t.label()), f, DESCRIPTIVE, gaze.len(), hash);
            }
        }
        Ok(())
    }

    fn session_entries(
        &mut self,
        hash: &str,
        cfg: &ProtocolConfig,
        sessions: &[(&SessionLog, Vec<TrialOutcome>)],
    ) -> Result<(), ReportError> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (log, outcomes) in sessions {
            let base = log.header.participant.label();
            let count = seen.entry(base.clone()).or_default();
            *count += 1;
            let label = if *count == 1 { base } else { format!("{base}#{count}") };
            let valid = outcomes.iter().filter(|o| o.is_valid()).count();
            if valid == 0 {
                continue;
            }
            let intensity = metrics::IntensityReport::from_outcomes(outcomes, cfg.n_max)?;
            for (i, v) in intensity.per_level.iter().enumerate() {
                self.push(format!("session[{label}].level_intensity[{}]", i + 1), *v, DESCRIPTIVE, valid, hash);
            }
            for (i, v) in intensity.cumulative.iter().enumerate() {
                self.push(format!("session[{label}].cumulative_intensity[{}]", i + 1), *v, DESCRIPTIVE, valid, hash);
            }
            if let Ok((mean, _)) = metrics::avg_hit_prompt_level(outcomes) {
                let hits = outcomes.iter().filter(|o| o.is_valid() && o.hit_level.is_some()).count();
                self.push(format!("session[{label}].avg_hit_prompt_level"), mean, DESCRIPTIVE, hits, hash);
            }
        }
        Ok(())
    }

    /// Paired comparison of each simulated participant's mean hit level in
    /// their first and last session.
    fn learning_entries(&mut self, hash: &str, sessions: &[(&SessionLog, Vec<TrialOutcome>)]) {
        let mut by_participant: BTreeMap<&str, Vec<(u32, f64)>> = BTreeMap::new();
        for (log, outcomes) in sessions {
            let ParticipantDescriptor::Simulated { id, session, .. } = &log.header.participant else {
                continue;
            };
            if let Ok((mean, _)) = metrics::avg_hit_prompt_level(outcomes) {
                by_participant.entry(id.as_str()).or_default().push((*session, mean));
            }
        }
        let mut by_index: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for v in by_participant.values() {
            for (s, mean) in v {
                by_index.entry(*s).or_default().push(*mean);
            }
        }
        for (s, means) in &by_index {
            let avg = means.iter().sum::<f64>() / means.len() as f64;
            self.push(format!("session_index[{s}].avg_hit_prompt_level"), avg, DESCRIPTIVE, means.len(), hash);
        }
        let pairs: Vec<(f64, f64)> = by_participant
            .values_mut()
            .filter_map(|v| {
                v.sort_by_key(|(s, _)| *s);
                let (first, last) = (v.first()?, v.last()?);
                (first.0 != last.0).then_some((first.1, last.1))
            })
            .collect();
        if pairs.is_empty() {
            return;
        }
        let n = pairs.len();
        let first = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let last = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
        self.push("first_session_hit_level", first, DESCRIPTIVE, n, hash);
        self.push("last_session_hit_level", last, DESCRIPTIVE, n, hash);
        let t = wilcoxon_signed_rank(&pairs);
        self.push_test("signed_rank_first_vs_last", &t, hash);
    }

    pub fn get(&self, metric: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.metric == metric)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,method,n,config_hash\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{},{}", e.metric, e.value, e.method, e.n, e.config_hash);
        }
        out
    }
}
