//! Imprecise sporadic tasks. A job runs one unit per layer; each unit splits
//! into atomic fragments. Units stay mandatory until a utility test passes,
//! after which the rest of the job is optional refinement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::UnitOutcome;

const PJ_PER_UJ: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("task {task}: release at {t_us} us is within one period of the previous release at {prev_us} us")]
    Separation { task: u32, t_us: u64, prev_us: u64 },
    #[error("job {task}.{seq} has already run all its units")]
    Finished { task: u32, seq: u64 },
    #[error("task {task}: {reason}")]
    Invalid { task: u32, reason: String },
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSpec {
    pub exec_us: u64,
    pub energy_uj: u64,
    #[serde(default = "one")]
    pub fragments: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u32,
    pub period_us: u64,
    pub deadline_us: u64,
    pub units: Vec<UnitSpec>,
    /// Model file driving the units' utility tests, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Sensor read cost, charged as an extra fragment in front of unit 1.
    #[serde(default)]
    pub release_overhead_us: u64,
    #[serde(default)]
    pub release_overhead_uj: u64,
    /// Fixed utility for tasks without a model; such jobs have every unit
    /// mandatory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_psi: Option<f64>,
    /// Units counted as mandatory by the utilization test (all by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mandatory_units: Option<usize>,
    #[serde(default)]
    pub phase_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_jobs: Option<u64>,
    /// Upper bound of a uniform extra delay added to each inter-release gap.
    #[serde(default)]
    pub release_jitter_us: u64,
}

impl Task {
    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |reason: &str| {
            Err(TaskError::Invalid {
                task: self.id,
                reason: reason.to_string(),
            })
        };
        if self.period_us == 0 {
            return bad("period_us must be positive");
        }
        if self.deadline_us == 0 {
            return bad("deadline_us must be positive");
        }
        if self.units.is_empty() {
            return bad("needs at least one unit");
        }
        for u in &self.units {
            if u.exec_us == 0 {
                return bad("unit exec_us must be positive");
            }
            if u.fragments == 0 || u64::from(u.fragments) > u.exec_us {
                return bad("unit fragments must be between 1 and exec_us");
            }
        }
        if self.release_overhead_us == 0 && self.release_overhead_uj > 0 {
            return bad("release overhead energy needs a duration");
        }
        if let Some(m) = self.mandatory_units {
            if m == 0 || m > self.units.len() {
                return bad("mandatory_units must be between 1 and the unit count");
            }
        }
        if let Some(p) = self.constant_psi {
            if !(p.is_finite() && p >= 0.0) {
                return bad("constant_psi must be finite and nonnegative");
            }
        }
        Ok(())
    }

    /// Worst-case execution time, overhead included.
    pub fn wcet_us(&self) -> u64 {
        self.release_overhead_us + self.units.iter().map(|u| u.exec_us).sum::<u64>()
    }

    pub fn mandatory_wcet_us(&self) -> u64 {
        let m = self.mandatory_units.unwrap_or(self.units.len());
        self.release_overhead_us + self.units[..m].iter().map(|u| u.exec_us).sum::<u64>()
    }

    /// Atomic fragments of unit `unit` (0-based), in execution order.
    pub fn fragments(&self, unit: usize) -> Vec<Fragment> {
        let mut out = Vec::new();
        if unit == 0 && self.release_overhead_us > 0 {
            out.push(Fragment::new(
                0,
                0,
                self.release_overhead_us,
                self.release_overhead_uj * PJ_PER_UJ,
            ));
        }
        let spec = self.units[unit];
        let n = u64::from(spec.fragments);
        let energy = spec.energy_uj * PJ_PER_UJ;
        for i in 0..n {
            // Remainders go to the earliest fragments.
            let dur = spec.exec_us / n + u64::from(i < spec.exec_us % n);
            let e = energy / n + u64::from(i < energy % n);
            out.push(Fragment::new(unit, out.len(), dur, e));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub unit: usize,
    pub index: usize,
    pub duration_us: u64,
    /// Constant draw while the fragment runs.
    pub load_uw: u64,
}

impl Fragment {
    fn new(unit: usize, index: usize, duration_us: u64, energy_pj: u64) -> Self {
        let load_uw = (energy_pj + duration_us / 2) / duration_us;
        Self {
            unit,
            index,
            duration_us,
            load_uw,
        }
    }

    pub fn energy_pj(&self) -> u64 {
        self.load_uw * self.duration_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    /// Unique within one simulation.
    pub key: u64,
    pub task_id: u32,
    pub seq: u64,
    pub release_us: u64,
    pub deadline_us: u64,
    pub num_units: usize,
    /// 0-based index of the next unit to run.
    pub next_unit: usize,
    /// Completed fragments of the next unit.
    pub fragment_progress: usize,
    /// Whether the next unit is mandatory.
    pub gamma: bool,
    pub psi: f64,
    pub label: Option<u32>,
    pub mandatory_done: bool,
    /// Whether a passed utility test ends the mandatory part. When false every
    /// unit is mandatory.
    pub partitioned: bool,
    pub units_executed: usize,
    pub optional_units: usize,
    /// 1-based unit that completed the mandatory part.
    pub exit_unit: Option<usize>,
}

impl Job {
    pub fn is_finished(&self) -> bool {
        self.next_unit >= self.num_units
    }

    /// Applies the outcome of the unit that just completed.
    pub fn advance(&mut self, outcome: &UnitOutcome) -> Result<(), TaskError> {
        if self.is_finished() {
            return Err(TaskError::Finished {
                task: self.task_id,
                seq: self.seq,
            });
        }
        self.units_executed += 1;
        if !self.gamma {
            self.optional_units += 1;
        }
        self.psi = outcome.psi;
        self.label = Some(outcome.label);
        self.next_unit += 1;
        self.fragment_progress = 0;
        let passed = self.partitioned && outcome.exit;
        if !self.mandatory_done && (passed || self.is_finished()) {
            self.mandatory_done = true;
            self.exit_unit = Some(self.next_unit);
        }
        self.gamma = !self.mandatory_done;
        Ok(())
    }
}

/// Creates job `seq` of `task` released at `t_us`, enforcing the minimum
/// inter-release separation against `prev_release`.
pub fn release_job(
    task: &Task,
    t_us: u64,
    prev_release: Option<u64>,
    key: u64,
    seq: u64,
    partitioned: bool,
) -> Result<Job, TaskError> {
    if let Some(prev) = prev_release {
        if t_us < prev + task.period_us {
            return Err(TaskError::Separation {
                task: task.id,
                t_us,
                prev_us: prev,
            });
        }
    }
    Ok(Job {
        key,
        task_id: task.id,
        seq,
        release_us: t_us,
        deadline_us: t_us + task.deadline_us,
        num_units: task.units.len(),
        next_unit: 0,
        fragment_progress: 0,
        gamma: true,
        psi: task.constant_psi.unwrap_or(0.0),
        label: None,
        mandatory_done: false,
        partitioned: partitioned && task.constant_psi.is_none(),
        units_executed: 0,
        optional_units: 0,
        exit_unit: None,
    })
}

/// `Σ C_i / T_i`, with `C_i` the full or the mandatory-only execution time.
pub fn utilization(tasks: &[Task], mandatory_only: bool) -> f64 {
    tasks
        .iter()
        .map(|t| {
            let c = if mandatory_only {
                t.mandatory_wcet_us()
            } else {
                t.wcet_us()
            };
            c as f64 / t.period_us as f64
        })
        .sum()
}
