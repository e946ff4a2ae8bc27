//! Golden fixtures. Regenerate with `LTM_BLESS=1 cargo test -p ltm-core --test golden`.

mod common;

use std::fs;

use common::{fixture, golden_simulated};
use ltm_core::protocol::{Classification, ProtocolConfig, Variant};
use ltm_core::report::Report;
use ltm_core::session::{replay, ControlBody, ControlMessage, OperatorSession, SessionLog};

fn bless() -> bool {
    std::env::var_os("LTM_BLESS").is_some()
}

fn check(name: &str, actual: &str) {
    let path = fixture(name);
    if bless() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from its fixture");
}

/// Scripted operator session: improved variant, an override, a timeout and
/// a disqualification.
fn golden_operator() -> SessionLog {
    let mut cfg = ProtocolConfig::for_variant(Variant::ImprovedLtmMri);
    cfg.reward_duration_ms = 1_000;
    let mut s = OperatorSession::new(&cfg, 3, "golden-op", 11).unwrap();
    let mark = ControlMessage::mark;
    s.connect(0);
    // trial 0: miss, override to 4, miss, hit at level 4
    s.handle(&mark(Classification::Miss), 1_200).unwrap();
    s.handle(&ControlMessage::new(ControlBody::OverridePromptLevel { level: 4 }), 1_500).unwrap();
    s.handle(&mark(Classification::Miss), 2_600).unwrap();
    s.handle(&mark(Classification::Hit), 4_100).unwrap();
    // reward ends at 5_100; trial 1 opens then
    s.tick(5_100);
    // trial 1: timeout at level 1, disqualified, then hit at level 2
    s.tick(12_100);
    s.handle(&mark(Classification::DisqualifiedBodyRotation), 13_000).unwrap();
    s.handle(&mark(Classification::Hit), 15_500).unwrap();
    s.tick(16_500);
    // trial 2: operator leaves mid-trial
    s.disconnect(18_000);
    s.into_log()
}

#[test]
fn simulated_log_fixture() {
    let log = golden_simulated();
    check("golden_session.jsonl", &log.to_jsonl());
    let stored = SessionLog::load(&fixture("golden_session.jsonl")).unwrap();
    assert_eq!(stored, log);
    replay(&stored).unwrap();
}

#[test]
fn report_fixture() {
    let report = Report::from_logs(&[golden_simulated()], false).unwrap();
    check("golden_report.json", &(report.to_json() + "\n"));
    check("golden_report.csv", &report.to_csv());
}

#[test]
fn operator_log_fixture() {
    let log = golden_operator();
    check("golden_operator.jsonl", &log.to_jsonl());
    let stored = SessionLog::load(&fixture("golden_operator.jsonl")).unwrap();
    let outcomes = replay(&stored).unwrap();
    let summary: Vec<_> = outcomes
        .iter()
        .map(|o| (o.hit_level, o.prompts_issued, o.escalation_score, o.aborted.is_some()))
        .collect();
    // trial 0: L1 miss (1,0), L1 miss wraps (0,1), override lands on L4, hit (1,1)
    // trial 1: L1 timeout (1,0), L1 disqualified (0,1), L2 hit (1,1)
    // trial 2: aborted at its first prompt
    assert_eq!(
        summary,
        vec![
            (Some(4), 3, 3, false),
            (Some(2), 3, 3, false),
            (None, 0, 0, true),
        ]
    );
}
