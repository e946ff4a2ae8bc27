//! Wilcoxon signed-rank and rank-sum tests with exact null distributions.
//!
//! Ties receive midranks. Midranks are always multiples of one half, so the
//! null distributions are built over doubled ranks, which are integers; the
//! exact p-values are then free of floating-point comparison issues.
//!
//! Both tests are two-sided: the p-value is the null probability of a rank
//! statistic at least as far from its mean as the observed one.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Up to this many non-zero differences the signed-rank test is exact.
pub const SIGNED_RANK_EXACT_MAX_N: usize = 20;
/// Up to this many pooled observations the rank-sum test is exact.
pub const RANK_SUM_EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    ExactEnumeration,
    NormalApproximation,
}

impl TestMethod {
    pub fn label(self) -> &'static str {
        match self {
            TestMethod::ExactEnumeration => "exact",
            TestMethod::NormalApproximation => "normal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Signed-rank: sum of ranks of positive differences. Rank-sum: sum of
    /// ranks of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Sample sizes after dropping zero differences.
    pub n: Vec<usize>,
    /// No information to test (every paired difference was zero).
    #[serde(default)]
    pub degenerate: bool,
}

/// Doubled midranks of `values` (rank 1 is the smallest), returned in input
/// order, plus the sizes of the tie groups.
fn doubled_midranks(values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1..=j share rank (i+1+j)/2
        let doubled = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = doubled;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

fn two_sided_normal(stat: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return 1.0;
    }
    let dev = stat - mean;
    let corrected = (dev.abs() - 0.5).max(0.0);
    let z = corrected / var.sqrt();
    let std = Normal::standard();
    (2.0 * std.sf(z)).min(1.0)
}

/// Two-sided tail mass of an integer-valued null distribution given as counts.
fn two_sided_exact(counts: &[f64], observed: u64, mean_doubled: u64) -> f64 {
    // `counts` is indexed by doubled statistic; `mean_doubled` is twice the
    // doubled mean, so distances compare as integers.
    let total: f64 = counts.iter().sum();
    let obs_dev = (2 * observed).abs_diff(mean_doubled);
    let tail: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as u64).abs_diff(mean_doubled) >= obs_dev)
        .map(|(_, c)| c)
        .sum();
    (tail / total).min(1.0)
}

struct SignedRanks {
    ranks: Vec<u64>,
    positive: Vec<bool>,
    ties: Vec<usize>,
}

fn signed_ranks(paired: &[(f64, f64)]) -> SignedRanks {
    let diffs: Vec<f64> = paired
        .iter()
        .map(|(before, after)| after - before)
        .filter(|d| *d != 0.0)
        .collect();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_midranks(&abs);
    SignedRanks {
        ranks,
        positive: diffs.iter().map(|d| *d > 0.0).collect(),
        ties,
    }
}

fn degenerate_result() -> TestResult {
    TestResult {
        statistic: 0.0,
        p_value: 1.0,
        method: TestMethod::ExactEnumeration,
        n: vec![0],
        degenerate: true,
    }
}

/// Exact signed-rank test: the null distribution counts every one of the
/// `2^n` sign assignments over the observed ranks.
pub fn signed_rank_exact(paired: &[(f64, f64)]) -> TestResult {
    let sr = signed_ranks(paired);
    if sr.ranks.is_empty() {
        return degenerate_result();
    }
    let total: u64 = sr.ranks.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in &sr.ranks {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let observed: u64 = sr
        .ranks
        .iter()
        .zip(&sr.positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| r)
        .sum();
    TestResult {
        statistic: observed as f64 / 2.0,
        p_value: two_sided_exact(&counts, observed, total),
        method: TestMethod::ExactEnumeration,
        n: vec![sr.ranks.len()],
        degenerate: false,
    }
}

/// Normal approximation with tie and continuity corrections.
pub fn signed_rank_normal(paired: &[(f64, f64)]) -> TestResult {
    let sr = signed_ranks(paired);
    if sr.ranks.is_empty() {
        return degenerate_result();
    }
    let n = sr.ranks.len() as f64;
    let w: f64 = sr
        .ranks
        .iter()
        .zip(&sr.positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| *r as f64 / 2.0)
        .sum();
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(&sr.ties) / 48.0;
    TestResult {
        statistic: w,
        p_value: two_sided_normal(w, mean, var),
        method: TestMethod::NormalApproximation,
        n: vec![sr.ranks.len()],
        degenerate: false,
    }
}

/// Two-sided Wilcoxon signed-rank test on `(before, after)` pairs. Zero
/// differences are dropped; exact up to [`SIGNED_RANK_EXACT_MAX_N`].
pub fn wilcoxon_signed_rank(paired: &[(f64, f64)]) -> TestResult {
    let n = paired.iter().filter(|(b, a)| a - b != 0.0).count();
    if n <= SIGNED_RANK_EXACT_MAX_N {
        signed_rank_exact(paired)
    } else {
        signed_rank_normal(paired)
    }
}

/// Exact rank-sum test over all `C(n_a + n_b, n_a)` relabelings.
pub fn rank_sum_exact(a: &[f64], b: &[f64]) -> TestResult {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = doubled_midranks(&pooled);
    let total: u64 = ranks.iter().sum();
    let na = a.len();
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0.0f64; total as usize + 1]; na + 1];
    counts[0][0] = 1.0;
    for &r in &ranks {
        for k in (1..=na).rev() {
            let (lo, hi) = counts.split_at_mut(k);
            let (prev, cur) = (&lo[k - 1], &mut hi[0]);
            for s in (r as usize..cur.len()).rev() {
                cur[s] += prev[s - r as usize];
            }
        }
    }
    let observed: u64 = ranks[..na].iter().sum();
    let mean_x2 = 2 * total * na as u64 / pooled.len() as u64;
    TestResult {
        statistic: observed as f64 / 2.0,
        p_value: two_sided_exact(&counts[na], observed, mean_x2),
        method: TestMethod::ExactEnumeration,
        n: vec![a.len(), b.len()],
        degenerate: false,
    }
}

pub fn rank_sum_normal(a: &[f64], b: &[f64]) -> TestResult {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let (na, nb, n) = (a.len() as f64, b.len() as f64, pooled.len() as f64);
    let w: f64 = ranks[..a.len()].iter().map(|r| *r as f64 / 2.0).sum();
    let mean = na * (n + 1.0) / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term(&ties) / (n * (n - 1.0)));
    TestResult {
        statistic: w,
        p_value: two_sided_normal(w, mean, var),
        method: TestMethod::NormalApproximation,
        n: vec![a.len(), b.len()],
        degenerate: false,
    }
}

/// Two-sided Wilcoxon rank-sum test. Returns `None` if either sample is
/// empty. Exact up to [`RANK_SUM_EXACT_MAX_N`] pooled observations.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Option<TestResult> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    Some(if a.len() + b.len() <= RANK_SUM_EXACT_MAX_N {
        rank_sum_exact(a, b)
    } else {
        rank_sum_normal(a, b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_with_ties() {
        let (r, ties) = doubled_midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![7, 2, 7, 4]);
        assert_eq!(ties, vec![1, 1, 2]);
    }

    #[test]
    fn identical_pairs_are_degenerate() {
        let r = wilcoxon_signed_rank(&[(1.0, 1.0), (2.0, 2.0)]);
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn five_concordant_pairs() {
        let pairs: Vec<_> = (1..=5).map(|d| (0.0, d as f64)).collect();
        let r = wilcoxon_signed_rank(&pairs);
        assert_eq!(r.method, TestMethod::ExactEnumeration);
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.statistic, 15.0);
    }

    #[test]
    fn signed_rank_switches_to_normal() {
        let pairs: Vec<_> = (1..=21).map(|d| (0.0, d as f64 * if d % 3 == 0 { -1.0 } else { 1.0 })).collect();
        assert_eq!(wilcoxon_signed_rank(&pairs).method, TestMethod::NormalApproximation);
        assert_eq!(wilcoxon_signed_rank(&pairs[..20]).method, TestMethod::ExactEnumeration);
    }

    #[test]
    fn exact_and_normal_agree_at_25() {
        use rand::Rng;
        for seed in 0..20 {
            let mut rng = crate::participant::rng_stream(seed, 0);
            let pairs: Vec<(f64, f64)> = (0..25).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(1.0..11.0))).collect();
            let exact = signed_rank_exact(&pairs).p_value;
            let normal = signed_rank_normal(&pairs).p_value;
            assert!((exact - normal).abs() < 0.02, "seed {seed}: {exact} vs {normal}");
        }
    }

    #[test]
    fn rank_sum_examples() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        let same = wilcoxon_rank_sum(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
        assert!(wilcoxon_rank_sum(&[], &[1.0]).is_none());
    }

    #[test]
    fn rank_sum_is_symmetric() {
        let a = [1.5, 3.0, 3.0, 7.0];
        let b = [2.0, 9.0, 11.0];
        let ab = wilcoxon_rank_sum(&a, &b).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a).unwrap();
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn rank_sum_normal_for_large_samples() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = (5..15).map(f64::from).collect();
        let r = wilcoxon_rank_sum(&a, &b).unwrap();
        assert_eq!(r.method, TestMethod::NormalApproximation);
        let exact = rank_sum_exact(&a, &b);
        assert!((r.p_value - exact.p_value).abs() < 0.02);
    }
}
