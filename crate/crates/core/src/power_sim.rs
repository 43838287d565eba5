//! Capacitor-buffered power subsystem.
//!
//! Stored energy is tracked in integer picojoules so that µW × µs products
//! are exact. The device browns out when the stored energy drops below
//! `e_off` and restarts once it reaches `e_on`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PJ_PER_UJ: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("step duration must be positive")]
    ZeroStep,
    #[error("device is off but a load of {0} uW was requested")]
    LoadWhileOff(u64),
    #[error("invalid capacitor config: {0}")]
    InvalidConfig(String),
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
}

/// Thresholds in microjoules. `e_opt_uj` defaults to the full capacity,
/// `e_off_uj` to `e_man_uj` and `e_on_uj` to twice `e_man_uj` (capped at
/// capacity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCapacitor")]
pub struct CapacitorConfig {
    pub capacity_uj: u64,
    pub e_on_uj: u64,
    pub e_off_uj: u64,
    pub e_man_uj: u64,
    pub e_opt_uj: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapacitor {
    capacity_uj: u64,
    e_man_uj: u64,
    e_on_uj: Option<u64>,
    e_off_uj: Option<u64>,
    e_opt_uj: Option<u64>,
}

impl TryFrom<RawCapacitor> for CapacitorConfig {
    type Error = PowerError;

    fn try_from(raw: RawCapacitor) -> Result<Self, Self::Error> {
        let cfg = CapacitorConfig {
            capacity_uj: raw.capacity_uj,
            e_man_uj: raw.e_man_uj,
            e_off_uj: raw.e_off_uj.unwrap_or(raw.e_man_uj),
            e_on_uj: raw.e_on_uj.unwrap_or_else(|| (2 * raw.e_man_uj).min(raw.capacity_uj)),
            e_opt_uj: raw.e_opt_uj.unwrap_or(raw.capacity_uj),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl CapacitorConfig {
    pub fn validate(&self) -> Result<(), PowerError> {
        let bad = |m: &str| Err(PowerError::InvalidConfig(m.to_string()));
        if self.e_off_uj >= self.e_on_uj {
            return bad("e_off_uj must be below e_on_uj");
        }
        if self.e_on_uj > self.capacity_uj {
            return bad("e_on_uj exceeds capacity_uj");
        }
        if self.e_man_uj > self.capacity_uj {
            return bad("e_man_uj exceeds capacity_uj");
        }
        if self.e_opt_uj > self.capacity_uj {
            return bad("e_opt_uj exceeds capacity_uj");
        }
        Ok(())
    }

    pub fn capacity_pj(&self) -> u64 {
        self.capacity_uj * PJ_PER_UJ
    }

    pub fn e_on_pj(&self) -> u64 {
        self.e_on_uj * PJ_PER_UJ
    }

    pub fn e_off_pj(&self) -> u64 {
        self.e_off_uj * PJ_PER_UJ
    }

    pub fn e_man_pj(&self) -> u64 {
        self.e_man_uj * PJ_PER_UJ
    }

    pub fn e_opt_pj(&self) -> u64 {
        self.e_opt_uj * PJ_PER_UJ
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerState {
    pub e_curr_pj: u64,
    pub device_on: bool,
    pub t_us: u64,
}

impl PowerState {
    pub fn new(e_curr_uj: u64, device_on: bool, t_us: u64) -> Self {
        Self {
            e_curr_pj: e_curr_uj * PJ_PER_UJ,
            device_on,
            t_us,
        }
    }

    /// Stored energy rounded down to whole microjoules.
    pub fn e_curr_uj(&self) -> u64 {
        self.e_curr_pj / PJ_PER_UJ
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    PowerOn,
    PowerOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: PowerState,
    /// Time actually covered; shorter than requested when a transition split
    /// the step.
    pub elapsed_us: u64,
    pub transition: Option<Transition>,
    pub harvested_pj: u64,
    /// Energy delivered to the load.
    pub consumed_pj: u64,
    /// Harvest that did not fit in the capacitor.
    pub overflow_pj: u64,
}

/// Advances the capacitor by up to `dt_us` under constant harvest and load.
///
/// Stops early at a power transition: turn-off happens at the first
/// microsecond the linear trajectory reaches `e_off`, turn-on at the first
/// microsecond it reaches `e_on`.
pub fn step(
    state: PowerState,
    cfg: &CapacitorConfig,
    harvest_uw: u64,
    load_uw: u64,
    dt_us: u64,
) -> Result<StepOutcome, PowerError> {
    advance(state, cfg, harvest_uw, load_uw, dt_us, true)
}

/// Like [`step`], but power-on is suppressed unless `on_allowed`. Used to
/// hold the device down during injected faults.
pub fn advance(
    state: PowerState,
    cfg: &CapacitorConfig,
    harvest_uw: u64,
    load_uw: u64,
    dt_us: u64,
    on_allowed: bool,
) -> Result<StepOutcome, PowerError> {
    if dt_us == 0 {
        return Err(PowerError::ZeroStep);
    }
    if !state.device_on && load_uw > 0 {
        return Err(PowerError::LoadWhileOff(load_uw));
    }
    let e = state.e_curr_pj as i128;
    let cap = cfg.capacity_pj() as i128;
    let rate = harvest_uw as i128 - load_uw as i128;

    let mut elapsed = dt_us;
    let mut transition = None;
    if state.device_on {
        if rate < 0 {
            let above = (e - cfg.e_off_pj() as i128).max(0);
            let tau = ceil_div(above, -rate);
            if tau <= dt_us as i128 {
                elapsed = tau as u64;
                transition = Some(Transition::PowerOff);
            }
        }
    } else if on_allowed {
        let need = cfg.e_on_pj() as i128 - e;
        let tau = if need <= 0 {
            Some(0)
        } else if rate > 0 {
            Some(ceil_div(need, rate))
        } else {
            None
        };
        if let Some(tau) = tau.filter(|&t| t <= dt_us as i128) {
            elapsed = tau as u64;
            transition = Some(Transition::PowerOn);
        }
    }

    let harvested = harvest_uw as i128 * elapsed as i128;
    let demanded = load_uw as i128 * elapsed as i128;
    let raw = e + harvested - demanded;
    // A trajectory only undershoots zero by less than one microsecond of
    // net drain; the load gets what was left.
    let shortfall = (-raw).max(0);
    let overflow = (raw - cap).max(0);
    let e_new = raw.clamp(0, cap);
    let device_on = match transition {
        Some(Transition::PowerOff) => false,
        Some(Transition::PowerOn) => true,
        None => state.device_on,
    };
    Ok(StepOutcome {
        state: PowerState {
            e_curr_pj: e_new as u64,
            device_on,
            t_us: state.t_us + elapsed,
        },
        elapsed_us: elapsed,
        transition,
        harvested_pj: harvested as u64,
        consumed_pj: (demanded - shortfall) as u64,
        overflow_pj: overflow as u64,
    })
}

/// Microseconds until stored energy reaches `target_pj` at a positive net
/// rate, or `None` if it never will.
pub fn time_to_reach(e_pj: u64, target_pj: u64, net_rate_uw: i64) -> Option<u64> {
    if e_pj >= target_pj {
        return Some(0);
    }
    if net_rate_uw <= 0 {
        return None;
    }
    Some(ceil_div((target_pj - e_pj) as i128, net_rate_uw as i128) as u64)
}

fn ceil_div(a: i128, b: i128) -> i128 {
    debug_assert!(a >= 0 && b > 0);
    (a + b - 1) / b
}

/// Rough optimal capacitance `sqrt(2 P δT) / V` in farads, with `P` in µW
/// and `δT` in µs.
pub fn optimal_capacitance(p_uw: f64, delta_t_us: f64, v_volts: f64) -> Result<f64, PowerError> {
    for (name, v) in [("p_uw", p_uw), ("delta_t_us", delta_t_us), ("v_volts", v_volts)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(PowerError::NonPositive(name));
        }
    }
    let p_w = p_uw * 1e-6;
    let dt_s = delta_t_us * 1e-6;
    Ok((2.0 * p_w * dt_s).sqrt() / v_volts)
}
