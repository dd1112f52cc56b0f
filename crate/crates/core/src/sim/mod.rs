//! Slot-level environment, metrics, event log and run orchestration.

pub mod campaign;
pub mod env;
pub mod eventlog;
pub mod metrics;

pub use campaign::{run_campaign, run_trial, RunMode, Trial};
pub use env::{Decision, EnvSpec, Episode, PhyMode, SlotRecord};
pub use metrics::{EpochCounters, EpochMetrics};
