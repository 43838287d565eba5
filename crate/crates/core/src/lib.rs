//! Simulator for deadline-aware, early-exit inference on intermittently
//! powered devices.
//!
//! * [`energy_model`] characterizes a harvester and scores its predictability.
//! * [`power_sim`] tracks the storage capacitor.
//! * [`inference`] runs early-exit units and keeps their classifiers fresh.
//! * [`tasks`] and [`scheduler`] hold the imprecise task model and job selection.
//! * [`sim`] ties them together into a reproducible discrete-event run.
//! * [`model_io`] reads and writes every file format.

pub mod energy_model;
pub mod inference;
pub mod model_io;
pub mod power_sim;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod tasks;
