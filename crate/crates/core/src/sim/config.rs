use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy_model::PowerSample;
use crate::power_sim::CapacitorConfig;
use crate::scheduler::Policy;
use crate::tasks::Task;

use super::clock::ClockModel;
use super::SimError;

fn default_queue() -> usize {
    3
}

fn default_n_max() -> usize {
    crate::energy_model::DEFAULT_N_MAX
}

fn default_adapt_weight() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Jobs are released during `[0, duration_us)`; the run then continues
    /// until every released job has left the system.
    pub duration_us: u64,
    pub capacitor: CapacitorConfig,
    #[serde(default)]
    pub initial_energy_uj: u64,
    #[serde(default)]
    pub initially_on: bool,
    pub energy_source: SourceConfig,
    pub eta: EtaConfig,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub clock: ClockModel,
    pub tasks: Vec<TaskEntry>,
    /// Intervals during which the device is held off regardless of energy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub record_decisions: bool,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// CSV trace file.
    Trace {
        path: String,
    },
    /// Two-state chain sampled once per slot, starting in the ON state.
    Markov {
        stay_on: f64,
        stay_off: f64,
        power_on_uw: u64,
        slot_us: u64,
    },
    Constant {
        power_uw: u64,
    },
    /// Inline piecewise-constant samples.
    Samples {
        samples: Vec<PowerSample>,
        end_us: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaConfig {
    Fixed(f64),
    Estimate {
        dk_uj: u64,
        dt_us: u64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub policy: Policy,
    #[serde(default = "default_queue")]
    pub queue_capacity: usize,
    /// Defaults to the inverse of the largest relative deadline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Defaults to the inverse of the largest calibrated utility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub persistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    #[serde(flatten)]
    pub task: Task,
    #[serde(default)]
    pub outcome: OutcomeSpec,
}

/// Where unit results come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeSpec {
    /// Utility tests never pass; every finished job is correct.
    #[default]
    Fixed,
    /// Per-job scripts, cycled in release order.
    Scripted { jobs: Vec<ScriptedJob> },
    /// Exit unit drawn from `exit_weights`; the result is correct with
    /// probability `correct_prob[l - 1]` when unit `l` ran last.
    Synthetic {
        exit_weights: Vec<f64>,
        correct_prob: Vec<f64>,
    },
    /// Labeled inputs run through the task's model.
    Dataset {
        data: String,
        #[serde(default = "default_adapt_weight")]
        adapt_weight: f64,
        #[serde(default = "yes")]
        adapt: bool,
        #[serde(default = "yes")]
        propagate: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedJob {
    /// 1-based unit whose utility test passes first.
    pub exit_unit: usize,
    /// Utility after each unit; defaults to 0 before the exit unit and 1 from
    /// it on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    /// The result counts as correct once this unit has run. Always correct
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_unit: Option<usize>,
    #[serde(default)]
    pub label: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub at_us: u64,
    pub duration_us: u64,
}

impl SimConfig {
    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn max_deadline_us(&self) -> u64 {
        self.tasks.iter().map(|t| t.task.deadline_us).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.capacitor.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if self.initial_energy_uj > self.capacitor.capacity_uj {
            return bad("initial_energy_uj exceeds capacity_uj".into());
        }
        match &self.energy_source {
            SourceConfig::Markov {
                stay_on,
                stay_off,
                slot_us,
                ..
            } => {
                if !(0.0..=1.0).contains(stay_on) || !(0.0..=1.0).contains(stay_off) {
                    return bad("markov stay probabilities must lie in [0, 1]".into());
                }
                if *slot_us == 0 {
                    return bad("markov slot_us must be positive".into());
                }
            }
            SourceConfig::Samples { samples, end_us } => {
                crate::energy_model::HarvestTrace::new(samples.clone(), *end_us)
                    .map_err(|e| SimError::Config(format!("energy_source: {e}")))?;
            }
            SourceConfig::Trace { .. } | SourceConfig::Constant { .. } => {}
        }
        match self.eta {
            EtaConfig::Fixed(v) if !(0.0..=1.0).contains(&v) => {
                return bad(format!("eta {v} outside [0, 1]"));
            }
            EtaConfig::Estimate { dk_uj, dt_us, n_max } if dk_uj == 0 || dt_us == 0 || n_max == 0 => {
                return bad("eta estimate parameters must be positive".into());
            }
            _ => {}
        }
        if self.scheduler.queue_capacity == 0 {
            return bad("queue_capacity must be at least 1".into());
        }
        for (name, v) in [("alpha", self.scheduler.alpha), ("beta", self.scheduler.beta)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{name} must be positive"));
                }
            }
        }
        self.clock.validate()?;
        if self.tasks.is_empty() {
            return bad("taskset is empty".into());
        }
        let mut ids: Vec<u32> = self.tasks.iter().map(|t| t.task.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("task ids must be unique".into());
        }
        for entry in &self.tasks {
            let t = &entry.task;
            t.validate().map_err(|e| SimError::Config(e.to_string()))?;
            let units = t.units.len();
            match &entry.outcome {
                OutcomeSpec::Fixed => {}
                OutcomeSpec::Scripted { jobs } => {
                    if jobs.is_empty() {
                        return bad(format!("task {}: scripted outcomes need at least one job", t.id));
                    }
                    for j in jobs {
                        if j.exit_unit == 0 || j.exit_unit > units {
                            return bad(format!("task {}: exit_unit out of range", t.id));
                        }
                        if j.psi.as_ref().is_some_and(|p| p.len() != units) {
                            return bad(format!("task {}: psi needs one value per unit", t.id));
                        }
                        if j.correct_unit.is_some_and(|c| c == 0 || c > units) {
                            return bad(format!("task {}: correct_unit out of range", t.id));
                        }
                    }
                }
                OutcomeSpec::Synthetic {
                    exit_weights,
                    correct_prob,
                } => {
                    if exit_weights.len() != units || correct_prob.len() != units {
                        return bad(format!("task {}: synthetic outcomes need one entry per unit", t.id));
                    }
                    if exit_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                        || exit_weights.iter().sum::<f64>() <= 0.0
                    {
                        return bad(format!(
                            "task {}: exit_weights must be nonnegative with a positive sum",
                            t.id
                        ));
                    }
                    if correct_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return bad(format!("task {}: correct_prob entries must lie in [0, 1]", t.id));
                    }
                }
                OutcomeSpec::Dataset { adapt_weight, .. } => {
                    if t.model.is_none() {
                        return bad(format!("task {}: dataset outcomes need a model", t.id));
                    }
                    if !(*adapt_weight > 0.0 && *adapt_weight < 1.0) {
                        return bad(format!("task {}: adapt_weight must lie in (0, 1)", t.id));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> serde_json::Value {
        json!({
            "seed": 3,
            "duration_us": 1_000,
            "capacitor": {"capacity_uj": 100, "e_man_uj": 10},
            "energy_source": {"kind": "constant", "power_uw": 5},
            "eta": {"fixed": 0.5},
            "scheduler": {"policy": "edf-m"},
            "tasks": [{"id": 1, "period_us": 100, "deadline_us": 100, "units": [{"exec_us": 10, "energy_uj": 1}]}]
        })
    }

    fn parse(v: serde_json::Value) -> Result<SimConfig, String> {
        let cfg: SimConfig = serde_json::from_value(v).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse(base()).unwrap();
        assert_eq!(cfg.scheduler.policy, Policy::EdfM);
        assert_eq!(cfg.scheduler.queue_capacity, 3);
        assert_eq!(cfg.clock, ClockModel::Perfect);
        assert_eq!(cfg.tasks[0].outcome, OutcomeSpec::Fixed);
        assert_eq!(cfg.tasks[0].task.units[0].fragments, 1);
        assert_eq!(cfg.capacitor.e_on_uj, 20);
        assert_eq!(cfg.capacitor.e_opt_uj, 100);
    }

    #[test]
    fn estimate_eta_defaults_n_max() {
        let mut v = base();
        v["eta"] = json!({"estimate": {"dk_uj": 1, "dt_us": 10}});
        let cfg = parse(v).unwrap();
        assert_eq!(
            cfg.eta,
            EtaConfig::Estimate {
                dk_uj: 1,
                dt_us: 10,
                n_max: crate::energy_model::DEFAULT_N_MAX
            }
        );
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = base();
        v["speed"] = json!(2);
        assert!(parse(v).unwrap_err().contains("speed"));
    }

    #[test]
    fn invalid_values_are_reported() {
        let cases = [
            ("/eta", json!({"fixed": 1.5})),
            ("/scheduler/queue_capacity", json!(0)),
            ("/tasks/0/period_us", json!(0)),
            ("/initial_energy_uj", json!(500)),
        ];
        for (pointer, value) in cases {
            let mut v = base();
            match v.pointer_mut(pointer) {
                Some(slot) => *slot = value,
                None => {
                    let key = pointer.trim_start_matches('/');
                    v[key] = value;
                }
            }
            assert!(parse(v).is_err(), "{pointer} accepted");
        }
    }

    #[test]
    fn duplicate_task_ids_are_rejected() {
        let mut v = base();
        let t = v["tasks"][0].clone();
        v["tasks"].as_array_mut().unwrap().push(t);
        assert!(parse(v).unwrap_err().contains("unique"));
    }

    #[test]
    fn relative_paths_resolve_against_the_base_dir() {
        let mut cfg = parse(base()).unwrap();
        cfg.base_dir = PathBuf::from("/data/run");
        assert_eq!(cfg.resolve("trace.csv"), PathBuf::from("/data/run/trace.csv"));
        assert_eq!(cfg.resolve("/abs.csv"), PathBuf::from("/abs.csv"));
    }
}
