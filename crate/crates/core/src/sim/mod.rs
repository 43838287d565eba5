//! Deterministic discrete-event simulation on an integer-microsecond clock.
//!
//! Events are job releases, fragment completions, power transitions, harvest
//! changes and (perceived) job deadlines. At one instant they are handled in
//! that order: fragment completion, deadline discards, releases, then a single
//! dispatch. The device sees time through its clock model; whether a job met
//! its deadline is judged on true time.

mod clock;
mod config;
mod engine;
mod report;
mod source;

use thiserror::Error;

use crate::energy_model::EnergyError;
use crate::inference::InferenceError;
use crate::model_io::IoError;
use crate::power_sim::PowerError;
use crate::tasks::TaskError;

pub use clock::{draw_offset, observe_time, ClockError, ClockModel};
pub use config::{EtaConfig, Fault, OutcomeSpec, SchedulerConfig, ScriptedJob, SimConfig, SourceConfig, TaskEntry};
pub use engine::{resolve_eta, run, run_with_policy};
pub use report::{Aggregates, DecisionRecord, DiscardReason, EnergyLedger, JobRecord, SimReport};
pub use source::{build_source, generate_markov_source};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

impl SimError {
    /// Bad input as opposed to a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(self, SimError::Config(_) | SimError::Io(_))
    }
}
