//! Closed-form response statistics of a [`ParticipantModel`].
//!
//! With per-prompt success probability `q_n = (1 - lapse) * p_n` and `m`
//! attempts per level, a trial first hits at level `n` with probability
//! `prod_{k<n} (1 - q_k)^m * (1 - (1 - q_n)^m)`.

use super::ParticipantModel;

/// Probability that a single prompt at `level` is answered correctly.
pub fn prompt_success(model: &ParticipantModel, level: u32) -> f64 {
    let p = model.base_hit_prob[level as usize - 1];
    (1.0 - model.lapse_prob) * p
}

/// Probability of at least one hit in `attempts` prompts of success `q`.
pub fn hit_within_attempts(q: f64, attempts: u32) -> f64 {
    1.0 - (1.0 - q).powi(attempts as i32)
}

/// `P(first hit at level n)` for `n = 1..=n_max`. The remainder up to one is
/// the probability that the trial exhausts the hierarchy.
pub fn hit_level_distribution(model: &ParticipantModel, n_max: u32, attempts_per_level: u32) -> Vec<f64> {
    let mut survive = 1.0;
    (1..=n_max)
        .map(|level| {
            let q = prompt_success(model, level);
            let hit_here = hit_within_attempts(q, attempts_per_level);
            let p = survive * hit_here;
            survive *= 1.0 - hit_here;
            p
        })
        .collect()
}

/// Mean and variance of the hit level, conditional on the trial hitting.
/// `None` when a hit is impossible.
pub fn hit_level_moments(model: &ParticipantModel, n_max: u32, attempts_per_level: u32) -> Option<(f64, f64)> {
    let dist = hit_level_distribution(model, n_max, attempts_per_level);
    let mass: f64 = dist.iter().sum();
    if mass <= 0.0 {
        return None;
    }
    let moment = |k: i32| {
        dist.iter()
            .enumerate()
            .map(|(i, p)| ((i + 1) as f64).powi(k) * p)
            .sum::<f64>()
            / mass
    };
    let mean = moment(1);
    Some((mean, (moment(2) - mean * mean).max(0.0)))
}

pub fn expected_hit_level(model: &ParticipantModel, n_max: u32, attempts_per_level: u32) -> Option<f64> {
    hit_level_moments(model, n_max, attempts_per_level).map(|(mean, _)| mean)
}
