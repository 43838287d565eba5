use serde::{Deserialize, Serialize};

use crate::scheduler::{Policy, Reason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// Units remained when the perceived deadline arrived.
    Deadline,
    /// Evicted from a full queue.
    QueueOverflow,
    /// Released while the device was off.
    DeviceOff,
    /// Still queued when the harvest ran out for good.
    EndOfRun,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::Deadline => "deadline",
            DiscardReason::QueueOverflow => "queue_overflow",
            DiscardReason::DeviceOff => "device_off",
            DiscardReason::EndOfRun => "end_of_run",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub task: u32,
    /// 1-based release count within the task.
    pub seq: u64,
    pub release_us: u64,
    pub deadline_us: u64,
    pub units_executed: usize,
    pub optional_units: usize,
    /// Mandatory part finished before the true deadline.
    pub mandatory_done: bool,
    pub correct: bool,
    /// True time at which the mandatory part finished.
    pub completion_us: Option<u64>,
    pub discard_reason: Option<DiscardReason>,
    pub exit_unit: Option<usize>,
    pub label: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub jobs_released: u64,
    pub jobs_scheduled: u64,
    pub jobs_correct: u64,
    pub deadline_misses: u64,
    pub reboots: u64,
    pub power_failures: u64,
    pub power_on_fraction: f64,
    pub avg_units_per_job: f64,
    /// Harvest lost to a full capacitor plus work lost to power failures.
    pub energy_wasted_uj: f64,
    pub optional_units_executed: u64,
    pub end_us: u64,
}

/// Energy balance in picojoules:
/// `consumed + lost + overflow + final = harvested + initial`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial_pj: u64,
    pub harvested_pj: u64,
    /// Delivered to fragments that completed.
    pub consumed_pj: u64,
    /// Delivered to fragments cut short by a power failure.
    pub lost_pj: u64,
    pub overflow_pj: u64,
    pub final_pj: u64,
}

impl EnergyLedger {
    pub fn balanced(&self) -> bool {
        self.consumed_pj as u128 + self.lost_pj as u128 + self.overflow_pj as u128 + self.final_pj as u128
            == self.harvested_pj as u128 + self.initial_pj as u128
    }
}

/// One scheduler invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t_us: u64,
    pub reason: Reason,
    pub task: Option<u32>,
    pub seq: Option<u64>,
    /// 1-based unit started.
    pub unit: Option<usize>,
    pub optional: Option<bool>,
    pub e_curr_uj: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: Policy,
    pub seed: u64,
    pub eta: f64,
    pub aggregates: Aggregates,
    pub energy: EnergyLedger,
    pub jobs: Vec<JobRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<DecisionRecord>,
}

impl SimReport {
    /// `released=… scheduled=… correct=… misses=…`
    pub fn summary_line(&self) -> String {
        let a = &self.aggregates;
        format!(
            "released={} scheduled={} correct={} misses={}",
            a.jobs_released, a.jobs_scheduled, a.jobs_correct, a.deadline_misses
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_balance() {
        let mut l = EnergyLedger {
            initial_pj: 10,
            harvested_pj: 5,
            consumed_pj: 7,
            lost_pj: 1,
            overflow_pj: 2,
            final_pj: 5,
        };
        assert!(l.balanced());
        l.final_pj += 1;
        assert!(!l.balanced());
    }

    #[test]
    fn discard_reasons_match_their_wire_names() {
        for r in [
            DiscardReason::Deadline,
            DiscardReason::QueueOverflow,
            DiscardReason::DeviceOff,
            DiscardReason::EndOfRun,
        ] {
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.as_str()));
        }
    }
}
