//! Job selection.
//!
//! The energy-aware policy ranks jobs by
//! `ζ = (1 − α(d − t)) + (1 − βΨ) + γ`, and withholds optional units while
//! `η·E_curr < E_opt`. Nothing runs while `E_curr < E_man`. EDF, EDF over
//! mandatory units and round-robin serve as baselines.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy_model::{expected_off_duration, EnergyError};
use crate::tasks::Job;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("unknown policy {0:?} (expected zygarde, edf, edf_m or rr)")]
    UnknownPolicy(String),
    #[error(transparent)]
    Eta(#[from] EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Zygarde,
    Edf,
    #[serde(alias = "edf-m")]
    EdfM,
    Rr,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Zygarde, Policy::Edf, Policy::EdfM, Policy::Rr];

    /// Whether jobs split into mandatory and optional parts under this
    /// policy. The baselines without partitioning run every unit.
    pub fn partitioned(self) -> bool {
        matches!(self, Policy::Zygarde | Policy::EdfM)
    }

    pub fn name(self) -> &'static str {
        match self {
            Policy::Zygarde => "zygarde",
            Policy::Edf => "edf",
            Policy::EdfM => "edf_m",
            Policy::Rr => "rr",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = SchedulerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zygarde" => Ok(Policy::Zygarde),
            "edf" => Ok(Policy::Edf),
            "edf_m" | "edf-m" => Ok(Policy::EdfM),
            "rr" => Ok(Policy::Rr),
            _ => Err(SchedulerError::UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerContext {
    /// Current time as the device perceives it.
    pub t_c: u64,
    /// Deadline scale in 1/µs.
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub e_curr_pj: u64,
    pub e_opt_pj: u64,
    pub e_man_pj: u64,
    pub policy: Policy,
    pub queue_capacity: usize,
    /// Persistent power: optional units are never energy-gated.
    pub persistent: bool,
    /// Task served last, for round-robin.
    pub rr_last_task: Option<u32>,
}

impl SchedulerContext {
    /// `η·E_curr ≥ E_opt`, or persistent power.
    pub fn optional_allowed(&self) -> bool {
        self.persistent || self.eta * self.e_curr_pj as f64 >= self.e_opt_pj as f64
    }

    pub fn below_e_man(&self) -> bool {
        self.e_curr_pj < self.e_man_pj
    }
}

fn base_terms(job: &Job, ctx: &SchedulerContext) -> f64 {
    let slack = job.deadline_us as f64 - ctx.t_c as f64;
    (1.0 - ctx.alpha * slack) + (1.0 - ctx.beta * job.psi)
}

pub fn zeta(job: &Job, ctx: &SchedulerContext) -> f64 {
    base_terms(job, ctx) + if job.gamma { 1.0 } else { 0.0 }
}

/// `ζ` when energy allows optional units, else `γ·((1 − α(d − t)) + (1 − βΨ))`.
pub fn zeta_i(job: &Job, ctx: &SchedulerContext) -> f64 {
    if ctx.optional_allowed() {
        zeta(job, ctx)
    } else if job.gamma {
        base_terms(job, ctx)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    EmptyQueue,
    BelowEMan,
    AllGated,
    Selected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    /// Index into the queue.
    pub choice: Option<usize>,
    pub reason: Reason,
}

fn tie_break(a: &Job, b: &Job) -> Ordering {
    a.deadline_us
        .cmp(&b.deadline_us)
        .then(a.task_id.cmp(&b.task_id))
        .then(a.release_us.cmp(&b.release_us))
}

fn eligible(job: &Job, ctx: &SchedulerContext) -> bool {
    match ctx.policy {
        Policy::Zygarde => job.gamma || ctx.optional_allowed(),
        Policy::EdfM => job.gamma,
        Policy::Edf | Policy::Rr => true,
    }
}

/// `Less` means `a` is preferred over `b`. Ineligible jobs rank last.
fn preference(a: &Job, b: &Job, ctx: &SchedulerContext) -> Ordering {
    let by_eligibility = eligible(b, ctx).cmp(&eligible(a, ctx));
    let by_policy = match ctx.policy {
        Policy::Zygarde => zeta_i(b, ctx).total_cmp(&zeta_i(a, ctx)),
        Policy::Edf | Policy::EdfM | Policy::Rr => Ordering::Equal,
    };
    by_eligibility.then(by_policy).then_with(|| tie_break(a, b))
}

/// Selects the job whose next unit runs, or explains why nothing runs.
pub fn pick_next(queue: &[Job], ctx: &SchedulerContext) -> Decision {
    let none = |reason| Decision { choice: None, reason };
    if queue.is_empty() {
        return none(Reason::EmptyQueue);
    }
    if ctx.below_e_man() {
        return none(Reason::BelowEMan);
    }
    let choice = if ctx.policy == Policy::Rr {
        pick_round_robin(queue, ctx)
    } else {
        (0..queue.len())
            .filter(|&i| eligible(&queue[i], ctx))
            .min_by(|&i, &j| preference(&queue[i], &queue[j], ctx))
    };
    match choice {
        Some(i) => Decision {
            choice: Some(i),
            reason: Reason::Selected,
        },
        None => none(Reason::AllGated),
    }
}

fn pick_round_robin(queue: &[Job], ctx: &SchedulerContext) -> Option<usize> {
    let next_task = queue
        .iter()
        .map(|j| j.task_id)
        .filter(|&id| ctx.rr_last_task.is_none_or(|last| id > last))
        .min()
        .or_else(|| queue.iter().map(|j| j.task_id).min())?;
    (0..queue.len())
        .filter(|&i| queue[i].task_id == next_task)
        .min_by(|&i, &j| tie_break(&queue[i], &queue[j]))
}

/// The job to evict when the queue exceeds its capacity.
pub fn drop_victim(queue: &[Job], ctx: &SchedulerContext) -> Option<usize> {
    (0..queue.len()).max_by(|&i, &j| preference(&queue[i], &queue[j], ctx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedulability {
    pub utilization: f64,
    pub eta: f64,
    /// Expected outage length `η/(1−η)` in event slots.
    pub expected_outage_slots: f64,
    pub feasible: bool,
    /// Smallest mean spacing between outages (in event slots) that keeps the
    /// necessary condition satisfiable. Absent when infeasible.
    pub min_t_e_slots: Option<f64>,
}

/// Necessary condition `T_E ≥ (η/(1−η)) / (1 − U)` for a taskset of
/// (mandatory) utilization `U`.
pub fn schedulability_necessary(utilization: f64, eta: f64) -> Result<Schedulability, SchedulerError> {
    let outage = expected_off_duration(eta)?;
    let feasible = utilization < 1.0;
    Ok(Schedulability {
        utilization,
        eta,
        expected_outage_slots: outage,
        feasible,
        min_t_e_slots: feasible.then(|| outage / (1.0 - utilization)),
    })
}
