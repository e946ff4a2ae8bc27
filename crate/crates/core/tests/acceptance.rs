//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::time::Instant;

use rand::Rng;

use ltm_core::metrics::{avg_hit_prompt_level, cumulative_intensity, level_intensity, miss_fraction};
use ltm_core::participant::analytic::expected_hit_level;
use ltm_core::participant::{apply_session_learning, rng_stream, sample_response, ParticipantModel};
use ltm_core::protocol::{
    classify_behavior, run_trial, Classification, GazeTarget, ProtocolConfig, Response, TrialOutcome, Variant,
};
use ltm_core::session::{outcomes_from_log, replay, run_simulated_session, ParticipantDescriptor, SessionLog};
use ltm_core::stats::{rank_sum_exact, signed_rank_exact, wilcoxon_signed_rank};

use Classification::{DisqualifiedBodyRotation, Hit, Miss, Timeout};

const CLASSES: [Classification; 4] = [Hit, Miss, DisqualifiedBodyRotation, Timeout];

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn response(c: Classification, window: u64) -> Response {
    let (gaze_target, latency_ms) = match c {
        Hit | DisqualifiedBodyRotation => (GazeTarget::TargetMonitor, window / 2),
        Miss => (GazeTarget::Elsewhere, window / 2),
        Timeout => (GazeTarget::Elsewhere, window + 1),
    };
    Response {
        classification: c,
        latency_ms,
        gaze_target,
    }
}

fn session(v: Variant, model: &ParticipantModel, id: &str, index: u32, trials: u32, seed: u64) -> SessionLog {
    let desc = ParticipantDescriptor::Simulated {
        id: id.to_owned(),
        session: index,
        model: model.clone(),
    };
    run_simulated_session(&ProtocolConfig::for_variant(v), trials, desc, seed).unwrap()
}

fn escalation_identity() -> Verdict {
    let start = Instant::now();
    let mut rng = rng_stream(0xE5C, 0);
    let mut bad = 0;
    for _ in 0..10_000 {
        let n_max = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=4);
        let cfg = ProtocolConfig::with_levels(Variant::ImprovedLtmMri, n_max, m);
        let p_hit: f64 = rng.gen();
        let out = run_trial(&cfg, |_, _| {
            let c = if rng.gen::<f64>() < p_hit { Hit } else { CLASSES[rng.gen_range(1..4)] };
            Ok(response(c, cfg.response_window_ms))
        })
        .unwrap();
        if out.aborted.is_some() || out.escalation_score != out.prompts_issued {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        bad == 0 && secs < 5.0,
        format!("{bad} of 10000 improved trials break score = prompts issued; {secs:.2} s (limit 5 s)"),
    )
}

struct Expected {
    levels: Vec<u32>,
    robots: Vec<u8>,
    hit_level: Option<u32>,
}

/// The protocol rules restated over a fixed response script.
fn trial_oracle(v: Variant, n_max: u32, m: u32, script: &[Classification]) -> Expected {
    let per_level = if v == Variant::ImprovedLtmMri { m } else { 1 };
    let mut e = Expected {
        levels: Vec::new(),
        robots: Vec::new(),
        hit_level: None,
    };
    for k in 0..n_max * per_level {
        let level = k / per_level + 1;
        e.levels.push(level);
        e.robots.push(if v == Variant::LtmRi { 1 } else { 1 + (k % 2) as u8 });
        if script[k as usize] == Hit {
            e.hit_level = Some(level);
            break;
        }
    }
    e
}

fn matches_oracle(out: &TrialOutcome, e: &Expected, script: &[Classification]) -> bool {
    let n = e.levels.len();
    out.aborted.is_none()
        && out.hit_level == e.hit_level
        && out.prompts_issued as usize == n
        && out.escalation_score as usize == n
        && out.rewarded == e.hit_level.is_some()
        && out.attempts.iter().map(|a| a.prompt.level).eq(e.levels.iter().copied())
        && out.attempts.iter().map(|a| a.prompt.robot_index.get()).eq(e.robots.iter().copied())
        && out.attempts.iter().map(|a| a.response.classification).eq(script[..n].iter().copied())
}

fn brute_force_trials() -> Verdict {
    let (mut checked, mut bad) = (0u64, 0u64);
    for v in Variant::ALL {
        for n_max in 1..=3u32 {
            for m in 1..=2u32 {
                let cfg = ProtocolConfig::with_levels(v, n_max, m);
                let len = (n_max * cfg.attempts_per_level()) as usize;
                for code in 0..4usize.pow(len as u32) {
                    let script: Vec<Classification> =
                        (0..len).map(|i| CLASSES[code / 4usize.pow(i as u32) % 4]).collect();
                    let out = run_trial(&cfg, |_, p| {
                        Ok(response(script[p.prompt_index as usize], cfg.response_window_ms))
                    })
                    .unwrap();
                    checked += 1;
                    if !matches_oracle(&out, &trial_oracle(v, n_max, m, &script), &script) {
                        bad += 1;
                    }
                }
            }
        }
    }
    (
        bad == 0,
        format!("{checked} response scripts over n_max <= 3, max_attempts <= 2, {bad} mismatches"),
    )
}

fn intensity_properties() -> Verdict {
    let mut rng = rng_stream(0x1E7, 0);
    let mut bad_sets = 0;
    for _ in 0..1_000 {
        let len = rng.gen_range(1..60);
        let mut outcomes: Vec<TrialOutcome> = (0..len)
            .map(|_| TrialOutcome {
                hit_level: rng.gen_bool(0.8).then(|| rng.gen_range(1..=6)),
                prompts_issued: 0,
                escalation_score: 0,
                attempts: Vec::new(),
                rewarded: false,
                aborted: rng.gen_bool(0.1).then(|| "aborted".to_owned()),
            })
            .collect();
        outcomes[0].aborted = None;
        let mut ok = true;
        let (mut prev, mut running) = (0.0, 0.0);
        let mut total = miss_fraction(&outcomes).unwrap();
        for n in 1..=6 {
            let li = level_intensity(&outcomes, n).unwrap();
            let ci = cumulative_intensity(&outcomes, n).unwrap();
            running += li;
            total += li;
            ok &= (0.0..=1.0).contains(&li) && ci >= prev && (ci - running).abs() < 1e-12;
            prev = ci;
        }
        ok &= (total - 1.0).abs() < 1e-12;
        if !ok {
            bad_sets += 1;
        }
    }

    let model = ParticipantModel::calibrated();
    let cum: Vec<f64> = (1..=4)
        .map(|s| {
            let log = session(Variant::MrisLtm, &model, "calibrated", s, 30, 0xCA1 + u64::from(s));
            cumulative_intensity(&outcomes_from_log(&log).unwrap(), 6).unwrap()
        })
        .collect();
    let in_band = cum.iter().all(|c| (0.95..=1.0).contains(c));
    let shown: Vec<String> = cum.iter().map(|c| format!("{c:.3}")).collect();
    (
        bad_sets == 0 && in_band,
        format!(
            "{bad_sets} of 1000 random outcome sets violate monotonicity or partition; calibrated cumulative[6] over 4 x 30 trials = [{}] (band [0.95, 1])",
            shown.join(", ")
        ),
    )
}

/// Participant `i`: the calibrated curve scaled by a fixed per-participant factor.
fn cohort(size: usize) -> Vec<ParticipantModel> {
    let mut rng = rng_stream(0xC0, 0);
    let base = ParticipantModel::calibrated().base_hit_prob;
    (0..size)
        .map(|_| {
            let scale = rng.gen_range(0.5..1.0);
            ParticipantModel::new(base.iter().map(|p| p * scale).collect(), 0.05).with_learning_rate(1.5)
        })
        .collect()
}

/// Mean hit level in each of four sessions with learning between sessions.
fn session_means(index: usize, model: &ParticipantModel) -> Vec<f64> {
    let mut model = model.clone();
    (1..=4u32)
        .map(|s| {
            let seed = 0x1EA_0000 + (index as u64) * 16 + u64::from(s);
            let log = session(Variant::LtmRi, &model, &format!("c{index}"), s, 30, seed);
            model = apply_session_learning(&model);
            avg_hit_prompt_level(&outcomes_from_log(&log).unwrap()).unwrap().0
        })
        .collect()
}

fn learning_direction() -> Verdict {
    let start = Instant::now();
    let means: Vec<Vec<f64>> = cohort(12).iter().enumerate().map(|(i, m)| session_means(i, m)).collect();
    let decreasing = means[..6].iter().filter(|m| m[3] < m[0]).count();
    let pairs: Vec<(f64, f64)> = means.iter().map(|m| (m[0], m[3])).collect();
    let test = wilcoxon_signed_rank(&pairs);
    let secs = start.elapsed().as_secs_f64();
    (
        decreasing >= 5 && test.p_value < 0.05 && secs < 60.0,
        format!(
            "{decreasing} of 6 participants lower their mean hit level from session 1 to 4; signed-rank p = {:.5} over 12 ({}); {secs:.2} s (limit 60 s)",
            test.p_value,
            test.method.label()
        ),
    )
}

/// Midranks by counting, 1-based.
fn midranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn signed_rank_oracle(diffs: &[f64]) -> Option<(f64, f64)> {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    let ranks = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let mean = ranks.iter().sum::<f64>() / 2.0;
    let observed: f64 = ranks.iter().zip(&d).filter(|(_, x)| **x > 0.0).map(|(r, _)| r).sum();
    let n = d.len();
    let mut extreme = 0u32;
    for signs in 0..1u32 << n {
        let w: f64 = (0..n).filter(|i| signs >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (w - mean).abs() >= (observed - mean).abs() - 1e-9 {
            extreme += 1;
        }
    }
    Some((observed, f64::from(extreme) / f64::from(1u32 << n)))
}

fn rank_sum_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let n = pooled.len();
    let mean = a.len() as f64 * (n as f64 + 1.0) / 2.0;
    let observed: f64 = ranks[..a.len()].iter().sum();
    let (mut total, mut extreme) = (0u32, 0u32);
    for subset in 0..1u32 << n {
        if subset.count_ones() as usize != a.len() {
            continue;
        }
        total += 1;
        let w: f64 = (0..n).filter(|i| subset >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (w - mean).abs() >= (observed - mean).abs() - 1e-9 {
            extreme += 1;
        }
    }
    (observed, f64::from(extreme) / f64::from(total))
}

/// Every vector of length `len` over `alphabet`.
fn vectors(alphabet: &[f64], len: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let k = alphabet.len();
    (0..k.pow(len as u32)).map(move |code| (0..len).map(|i| alphabet[code / k.pow(i as u32) % k]).collect())
}

fn exact_wilcoxon() -> Verdict {
    let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
    let (mut checked, mut bad) = (0u64, 0u64);
    let signed_inputs = (1..=4)
        .flat_map(|n| vectors(&[-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0], n))
        .chain((5..=6).flat_map(|n| vectors(&[-2.0, -1.0, 0.0, 1.0, 2.0], n)))
        .chain((7..=8).flat_map(|n| vectors(&[-2.0, -1.0, 1.0, 2.0], n)));
    for diffs in signed_inputs {
        let pairs: Vec<(f64, f64)> = diffs.iter().map(|d| (0.0, *d)).collect();
        let got = signed_rank_exact(&pairs);
        checked += 1;
        let ok = match signed_rank_oracle(&diffs) {
            None => got.degenerate && got.p_value == 1.0,
            Some((w, p)) => close(got.statistic, w) && close(got.p_value, p),
        };
        if !ok {
            bad += 1;
        }
    }
    for n in 2..=8usize {
        for values in vectors(&[0.0, 1.0, 2.0], n) {
            for na in 1..n {
                let (a, b) = values.split_at(na);
                let got = rank_sum_exact(a, b);
                let (w, p) = rank_sum_oracle(a, b);
                checked += 1;
                if !(close(got.statistic, w) && close(got.p_value, p)) {
                    bad += 1;
                }
            }
        }
    }
    let concordant = [(1.0, 2.0), (2.0, 4.0), (3.0, 3.5), (4.0, 7.0), (5.0, 9.0)];
    let p5 = wilcoxon_signed_rank(&concordant).p_value;
    (
        bad == 0 && p5 == 0.0625,
        format!("{checked} inputs with n <= 8 against permutation enumeration, {bad} mismatches; 5 concordant pairs p = {p5}"),
    )
}

/// Mean hit level given a hit, by enumerating every hit/no-hit pattern.
fn exact_mean_hit_level(base: &[f64], lapse: f64, per_level: usize) -> f64 {
    let len = base.len() * per_level;
    let (mut mass, mut weighted) = (0.0, 0.0);
    for pattern in 0..1u32 << len {
        let prob: f64 = (0..len)
            .map(|k| {
                let q = base[k / per_level] * (1.0 - lapse);
                if pattern >> k & 1 == 1 {
                    q
                } else {
                    1.0 - q
                }
            })
            .product();
        if pattern != 0 {
            let first = pattern.trailing_zeros() as usize;
            mass += prob;
            weighted += prob * (first / per_level + 1) as f64;
        }
    }
    weighted / mass
}

/// Monte Carlo hit-level mean and its standard error, driving the trial
/// engine with the participant simulator.
fn monte_carlo(v: Variant, model: &ParticipantModel, trials: u32, seed: u64) -> (f64, f64) {
    let cfg = ProtocolConfig::for_variant(v);
    let mut rng = rng_stream(seed, 0);
    let (mut n, mut sum, mut sum_sq) = (0.0, 0.0, 0.0);
    for _ in 0..trials {
        let out = run_trial(&cfg, |prompt, _| {
            let s = sample_response(model, prompt, cfg.response_window_ms, &mut rng).unwrap();
            Ok(classify_behavior(&s, GazeTarget::TargetMonitor, cfg.response_window_ms, cfg.torso_threshold_deg).unwrap())
        })
        .unwrap();
        if let Some(h) = out.hit_level {
            n += 1.0;
            sum += f64::from(h);
            sum_sq += f64::from(h).powi(2);
        }
    }
    let mean = sum / n;
    let var = sum_sq / n - mean * mean;
    (mean, (var / n).sqrt())
}

fn improved_benefit() -> Verdict {
    let bases3: [[f64; 3]; 5] = [
        [0.2, 0.5, 0.8],
        [0.3, 0.45, 0.6],
        [0.1, 0.1, 0.9],
        [0.5, 0.5, 0.5],
        [0.6, 0.9, 1.0],
    ];
    let mut ok = true;
    let mut worst_gap = f64::NEG_INFINITY;
    for lapse in [0.1, 0.2, 0.3] {
        for base in &bases3 {
            let ltm = exact_mean_hit_level(base, lapse, 1);
            let imp = exact_mean_hit_level(base, lapse, 2);
            let model = ParticipantModel::new(base.to_vec(), lapse);
            ok &= (expected_hit_level(&model, 3, 1).unwrap() - ltm).abs() < 1e-12;
            ok &= (expected_hit_level(&model, 3, 2).unwrap() - imp).abs() < 1e-12;
            ok &= imp <= ltm;
            worst_gap = worst_gap.max(imp - ltm);
        }
    }
    let mut mc = Vec::new();
    for (i, lapse) in [0.1, 0.2, 0.3].into_iter().enumerate() {
        let model = ParticipantModel::new(ParticipantModel::calibrated().base_hit_prob, lapse);
        let ltm_exact = exact_mean_hit_level(&model.base_hit_prob, lapse, 1);
        let imp_exact = exact_mean_hit_level(&model.base_hit_prob, lapse, 2);
        let (ltm, ltm_se) = monte_carlo(Variant::LtmRi, &model, 100_000, 0xB0 + i as u64);
        let (imp, imp_se) = monte_carlo(Variant::ImprovedLtmMri, &model, 100_000, 0xB8 + i as u64);
        ok &= (ltm - ltm_exact).abs() <= 3.0 * ltm_se;
        ok &= (imp - imp_exact).abs() <= 3.0 * imp_se;
        ok &= imp_exact <= ltm_exact;
        ok &= imp - ltm <= 3.0 * (ltm_se.powi(2) + imp_se.powi(2)).sqrt();
        mc.push(format!("lapse {lapse}: improved {imp:.3} vs ltm-ri {ltm:.3} (exact {imp_exact:.3} vs {ltm_exact:.3})"));
    }
    (
        ok,
        format!(
            "n_max 3 exact: largest improved - ltm-ri gap {worst_gap:.4} over 15 models; n_max 6 Monte Carlo 1e5 trials: {}",
            mc.join("; ")
        ),
    )
}

fn leaves(v: &serde_json::Value, path: String, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => map.iter().for_each(|(k, x)| leaves(x, format!("{path}/{k}"), out)),
        serde_json::Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| leaves(x, format!("{path}/{i}"), out)),
        _ => out.push(path),
    }
}

fn mutate(v: &mut serde_json::Value) {
    use serde_json::Value;
    *v = match v.take() {
        Value::Bool(b) => Value::Bool(!b),
        Value::String(s) => Value::String(s + "x"),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => Value::from(u + 1),
            (_, Some(i)) => Value::from(i + 1),
            _ => Value::from(n.as_f64().unwrap() + 0.5),
        },
        Value::Null => Value::from(0),
        other => other,
    };
}

fn determinism_and_replay() -> Verdict {
    let mut identical = true;
    for v in Variant::ALL {
        for seed in [0, 1, 0xDEAD_BEEF] {
            let a = session(v, &ParticipantModel::calibrated(), "d", 1, 5, seed).to_jsonl();
            let b = session(v, &ParticipantModel::calibrated(), "d", 1, 5, seed).to_jsonl();
            identical &= a == b;
        }
    }

    let log = session(Variant::ImprovedLtmMri, &ParticipantModel::new(vec![0.2, 0.3, 0.5, 0.6, 0.8, 0.9], 0.2), "m", 1, 2, 77);
    let lines: Vec<serde_json::Value> = log.to_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (mut fields, mut missed) = (0, Vec::new());
    for i in 0..lines.len() {
        let mut paths = Vec::new();
        leaves(&lines[i], String::new(), &mut paths);
        for path in paths {
            let mut copy = lines.clone();
            mutate(copy[i].pointer_mut(&path).unwrap());
            let text: String = copy.iter().map(|l| l.to_string() + "\n").collect();
            fields += 1;
            let caught = SessionLog::parse_jsonl(&text).map_or(true, |parsed| replay(&parsed).is_err());
            if !caught {
                missed.push(format!("line {i} {path}"));
            }
        }
    }

    let golden = fs::read_to_string(common::fixture("golden_session.jsonl")).unwrap_or_default();
    let golden_ok = golden == common::golden_simulated().to_jsonl();
    (
        identical && missed.is_empty() && golden_ok,
        format!(
            "repeat runs byte-identical: {identical}; {} of {fields} single-field mutations detected{}; golden log reproduced: {golden_ok}",
            fields - missed.len(),
            if missed.is_empty() { String::new() } else { format!(" (missed {})", missed.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("escalation-score identity", escalation_identity),
        ("brute-force trial oracle", brute_force_trials),
        ("intensity properties", intensity_properties),
        ("cross-session learning direction", learning_direction),
        ("exact wilcoxon correctness", exact_wilcoxon),
        ("improved-vs-baseline benefit", improved_benefit),
        ("determinism and replay", determinism_and_replay),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (pass, detail) = check();
        if !pass {
            failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
