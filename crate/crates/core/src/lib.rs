//! Least-to-most prompting protocol engine.
//!
//! * [`protocol`]: the three prompt/reward state machines.
//! * [`participant`]: seedable simulated participants.
//! * [`metrics`] and [`stats`]: intensity values, hit-level summaries and
//!   exact Wilcoxon tests.
//! * [`session`]: the trial loop, JSONL event log, operator mode and replay.
//! * [`report`]: metric tables over a set of logs.

pub mod metrics;
pub mod participant;
pub mod protocol;
pub mod report;
pub mod session;
pub mod stats;
