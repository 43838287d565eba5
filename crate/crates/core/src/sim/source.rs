use rand::Rng;

use crate::energy_model::{HarvestTrace, PowerSample};
use crate::model_io;

use super::config::{SimConfig, SourceConfig};
use super::SimError;

/// Two-state ON/OFF chain sampled once per `slot_us`, starting ON. Runs of
/// equal state are merged into one sample.
pub fn generate_markov_source<R: Rng + ?Sized>(
    stay_on: f64,
    stay_off: f64,
    power_on_uw: u64,
    slot_us: u64,
    duration_us: u64,
    rng: &mut R,
) -> Result<HarvestTrace, SimError> {
    if !(0.0..=1.0).contains(&stay_on) || !(0.0..=1.0).contains(&stay_off) {
        return Err(SimError::Config("markov stay probabilities must lie in [0, 1]".into()));
    }
    if slot_us == 0 || duration_us == 0 {
        return Err(SimError::Config("markov slot and duration must be positive".into()));
    }
    let slots = duration_us.div_ceil(slot_us);
    let mut samples = vec![PowerSample {
        t_us: 0,
        power_uw: power_on_uw,
    }];
    let mut on = true;
    for i in 1..slots {
        let stay = if on { stay_on } else { stay_off };
        if rng.gen::<f64>() >= stay {
            on = !on;
            samples.push(PowerSample {
                t_us: i * slot_us,
                power_uw: if on { power_on_uw } else { 0 },
            });
        }
    }
    Ok(HarvestTrace::new(samples, slots * slot_us).expect("increasing by construction"))
}

/// Builds the harvest signal for a run. Generated sources cover `horizon_us`.
pub fn build_source<R: Rng + ?Sized>(cfg: &SimConfig, horizon_us: u64, rng: &mut R) -> Result<HarvestTrace, SimError> {
    let horizon = horizon_us.max(1);
    match &cfg.energy_source {
        SourceConfig::Trace { path } => Ok(model_io::load_trace(&cfg.resolve(path))?),
        SourceConfig::Markov {
            stay_on,
            stay_off,
            power_on_uw,
            slot_us,
        } => generate_markov_source(*stay_on, *stay_off, *power_on_uw, *slot_us, horizon, rng),
        SourceConfig::Constant { power_uw } => Ok(HarvestTrace::constant(*power_uw, horizon)),
        SourceConfig::Samples { samples, end_us } => {
            HarvestTrace::new(samples.clone(), *end_us).map_err(|e| SimError::Config(format!("energy_source: {e}")))
        }
    }
}
