use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockError {
    pub offset_us: i64,
    pub weight: f64,
}

/// How the device perceives time after a reboot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClockModel {
    #[default]
    Perfect,
    /// Remanence timekeeper: exact with probability `p_correct`, otherwise
    /// off by one of `errors`, drawn in proportion to their weights.
    Chrt { p_correct: f64, errors: Vec<ClockError> },
}

impl ClockModel {
    /// Exact 80% of the time, otherwise off by one or two seconds, mostly ahead.
    pub fn chrt_default() -> Self {
        ClockModel::Chrt {
            p_correct: 0.8,
            errors: vec![
                ClockError {
                    offset_us: 1_000_000,
                    weight: 0.15,
                },
                ClockError {
                    offset_us: 2_000_000,
                    weight: 0.02,
                },
                ClockError {
                    offset_us: -1_000_000,
                    weight: 0.02,
                },
                ClockError {
                    offset_us: -2_000_000,
                    weight: 0.01,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let ClockModel::Chrt { p_correct, errors } = self {
            if !(0.0..=1.0).contains(p_correct) {
                return Err(SimError::Config("clock p_correct must lie in [0, 1]".into()));
            }
            let sum: f64 = errors.iter().map(|e| e.weight).sum();
            if errors.iter().any(|e| !(e.weight.is_finite() && e.weight >= 0.0)) {
                return Err(SimError::Config("clock error weights must be nonnegative".into()));
            }
            if *p_correct < 1.0 && sum <= 0.0 {
                return Err(SimError::Config("clock needs error weights when p_correct < 1".into()));
            }
        }
        Ok(())
    }

    /// Largest absolute error the model can report.
    pub fn max_error_us(&self) -> u64 {
        match self {
            ClockModel::Perfect => 0,
            ClockModel::Chrt { errors, .. } => errors.iter().map(|e| e.offset_us.unsigned_abs()).max().unwrap_or(0),
        }
    }
}

/// The time the device reads at true time `true_t_us`.
pub fn observe_time<R: Rng + ?Sized>(true_t_us: u64, clock: &ClockModel, rng: &mut R) -> u64 {
    true_t_us.saturating_add_signed(draw_offset(clock, rng))
}

/// Error of one clock reading in microseconds.
pub fn draw_offset<R: Rng + ?Sized>(clock: &ClockModel, rng: &mut R) -> i64 {
    match clock {
        ClockModel::Perfect => 0,
        ClockModel::Chrt { p_correct, errors } => {
            if *p_correct >= 1.0 || rng.gen::<f64>() < *p_correct {
                return 0;
            }
            match WeightedIndex::new(errors.iter().map(|e| e.weight)) {
                Ok(dist) => errors[dist.sample(rng)].offset_us,
                Err(_) => 0,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn perfect_and_certain_clocks_are_identity() {
        let mut rng = stream_rng(1, Stream::Clock);
        assert_eq!(observe_time(123, &ClockModel::Perfect, &mut rng), 123);
        let certain = ClockModel::Chrt {
            p_correct: 1.0,
            errors: vec![ClockError {
                offset_us: 5,
                weight: 1.0,
            }],
        };
        assert!((0..1000).all(|t| observe_time(t, &certain, &mut rng) == t));
    }

    #[test]
    fn error_frequencies_match() {
        let clock = ClockModel::chrt_default();
        let mut rng = stream_rng(42, Stream::Clock);
        let n = 100_000;
        let t0 = 10_000_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..n {
            let d = observe_time(t0, &clock, &mut rng) as i64 - t0 as i64;
            *counts.entry(d).or_insert(0usize) += 1;
        }
        let freq = |d: i64| *counts.get(&d).unwrap_or(&0) as f64 / n as f64;
        for (d, p) in [
            (0, 0.8),
            (1_000_000, 0.15),
            (2_000_000, 0.02),
            (-1_000_000, 0.02),
            (-2_000_000, 0.01),
        ] {
            assert!((freq(d) - p).abs() < 0.01, "offset {d}: {} vs {p}", freq(d));
        }
    }
}
