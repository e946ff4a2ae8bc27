use std::path::PathBuf;

use ltm_core::participant::ParticipantModel;
use ltm_core::protocol::{ProtocolConfig, Variant};
use ltm_core::session::{run_simulated_session, ParticipantDescriptor, SessionLog};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The session stored in `golden_session.jsonl`.
pub fn golden_simulated() -> SessionLog {
    run_simulated_session(
        &ProtocolConfig::for_variant(Variant::MrisLtm),
        4,
        ParticipantDescriptor::Simulated {
            id: "golden".into(),
            session: 1,
            model: ParticipantModel::calibrated(),
        },
        20_161,
    )
    .unwrap()
}
