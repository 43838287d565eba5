//! Harvester characterization from a power trace.
//!
//! A trace is reduced to a binary series of energy events (at least `dk`
//! microjoules harvested within a `dt` slot). The series is summarized by the
//! conditional event profile `h(N)`: the probability of an event after `N`
//! consecutive events (`N > 0`) or `|N|` consecutive non-events (`N < 0`).
//! The eta-factor compares that profile against a perfectly persistent source
//! and a memoryless one with the same event rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Picojoules in one microjoule. Power in µW times time in µs is picojoules.
pub const PJ_PER_UJ: u128 = 1_000_000;

/// Default maximum conditioning length.
pub const DEFAULT_N_MAX: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("sample {index}: timestamps must be strictly increasing")]
    NonMonotonic { index: usize },
    #[error("trace end {end_us} us precedes the last sample at {last_us} us")]
    EndBeforeLastSample { end_us: u64, last_us: u64 },
    #[error("{0} must be positive")]
    ZeroParameter(&'static str),
    #[error("event series is empty")]
    EmptySeries,
    #[error("conditioning length must be nonzero")]
    ZeroConditioning,
    #[error("|n| = {n} must be smaller than the series length {len}")]
    ConditioningTooLong { n: i64, len: usize },
    #[error("no conditioning window found for n = {0}")]
    NoWindows(i64),
    #[error("profiles share no defined support")]
    EmptySupport,
    #[error("eta = {0} must lie in [0, 1)")]
    EtaOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_us: u64,
    pub power_uw: u64,
}

/// Piecewise-constant harvested power. Each sample holds until the next
/// timestamp; the last one holds until `end_us`. Power is zero outside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestTrace {
    samples: Vec<PowerSample>,
    end_us: u64,
}

impl HarvestTrace {
    pub fn new(samples: Vec<PowerSample>, end_us: u64) -> Result<Self, EnergyError> {
        let last = samples.last().ok_or(EnergyError::EmptyTrace)?;
        if let Some(index) = samples.windows(2).position(|w| w[1].t_us <= w[0].t_us) {
            return Err(EnergyError::NonMonotonic { index: index + 1 });
        }
        if end_us < last.t_us {
            return Err(EnergyError::EndBeforeLastSample {
                end_us,
                last_us: last.t_us,
            });
        }
        Ok(Self { samples, end_us })
    }

    /// Constant power from 0 until `end_us`.
    pub fn constant(power_uw: u64, end_us: u64) -> Self {
        Self {
            samples: vec![PowerSample { t_us: 0, power_uw }],
            end_us,
        }
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn start_us(&self) -> u64 {
        self.samples[0].t_us
    }

    pub fn end_us(&self) -> u64 {
        self.end_us
    }

    /// Harvested power at instant `t_us`.
    pub fn power_at(&self, t_us: u64) -> u64 {
        if t_us < self.start_us() || t_us >= self.end_us {
            return 0;
        }
        let idx = self.samples.partition_point(|s| s.t_us <= t_us);
        self.samples[idx - 1].power_uw
    }

    /// Next instant after `t_us` at which the power may change.
    pub fn next_change_after(&self, t_us: u64) -> Option<u64> {
        if t_us < self.start_us() {
            return Some(self.start_us());
        }
        if t_us >= self.end_us {
            return None;
        }
        let idx = self.samples.partition_point(|s| s.t_us <= t_us);
        Some(self.samples.get(idx).map_or(self.end_us, |s| s.t_us.min(self.end_us)))
    }

    /// Exact energy in picojoules harvested over `[from_us, to_us)`.
    pub fn energy_pj(&self, from_us: u64, to_us: u64) -> u128 {
        if to_us <= from_us {
            return 0;
        }
        let mut total = 0u128;
        for (i, s) in self.samples.iter().enumerate() {
            let seg_end = self.samples.get(i + 1).map_or(self.end_us, |n| n.t_us);
            let lo = s.t_us.max(from_us);
            let hi = seg_end.min(to_us);
            if hi > lo {
                total += s.power_uw as u128 * (hi - lo) as u128;
            }
        }
        total
    }
}

/// Binary energy-event series, one entry per `slot_us` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeries {
    events: Vec<bool>,
    slot_us: u64,
    threshold_uj: u64,
}

impl EventSeries {
    pub fn new(events: Vec<bool>, slot_us: u64, threshold_uj: u64) -> Result<Self, EnergyError> {
        if events.is_empty() {
            return Err(EnergyError::EmptySeries);
        }
        if slot_us == 0 {
            return Err(EnergyError::ZeroParameter("slot length"));
        }
        if threshold_uj == 0 {
            return Err(EnergyError::ZeroParameter("event threshold"));
        }
        Ok(Self {
            events,
            slot_us,
            threshold_uj,
        })
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn slot_us(&self) -> u64 {
        self.slot_us
    }

    pub fn threshold_uj(&self) -> u64 {
        self.threshold_uj
    }

    /// Fraction of slots holding an event.
    pub fn event_rate(&self) -> f64 {
        self.events.iter().filter(|&&e| e).count() as f64 / self.events.len() as f64
    }
}

/// Marks each full `dt_us` slot (starting at the first sample) that harvests
/// at least `dk_uj`. A trailing partial slot is dropped.
pub fn binarize_trace(trace: &HarvestTrace, dk_uj: u64, dt_us: u64) -> Result<EventSeries, EnergyError> {
    if dk_uj == 0 {
        return Err(EnergyError::ZeroParameter("dk_uj"));
    }
    if dt_us == 0 {
        return Err(EnergyError::ZeroParameter("dt_us"));
    }
    let start = trace.start_us();
    let slots = ((trace.end_us() - start) / dt_us) as usize;
    if slots == 0 {
        return Err(EnergyError::EmptySeries);
    }
    let need_pj = dk_uj as u128 * PJ_PER_UJ;
    let mut slot_energy = vec![0u128; slots];
    let samples = trace.samples();
    let horizon = start + slots as u64 * dt_us;
    for (i, s) in samples.iter().enumerate() {
        let seg_end = samples.get(i + 1).map_or(trace.end_us(), |n| n.t_us).min(horizon);
        let mut t = s.t_us;
        while t < seg_end {
            let slot = ((t - start) / dt_us) as usize;
            let slot_end = start + (slot as u64 + 1) * dt_us;
            let hi = slot_end.min(seg_end);
            slot_energy[slot] += s.power_uw as u128 * (hi - t) as u128;
            t = hi;
        }
    }
    let events = slot_energy.into_iter().map(|pj| pj >= need_pj).collect();
    EventSeries::new(events, dt_us, dk_uj)
}

/// `h(n)` and the number of conditioning windows it was estimated from.
///
/// For `n > 0` a window is any position preceded by `n` consecutive events;
/// for `n < 0`, by `|n|` consecutive non-events. Windows overlap.
pub fn conditional_event_prob(series: &EventSeries, n: i64) -> Result<(f64, usize), EnergyError> {
    if n == 0 {
        return Err(EnergyError::ZeroConditioning);
    }
    let len = series.len();
    let k = n.unsigned_abs() as usize;
    if k >= len {
        return Err(EnergyError::ConditioningTooLong { n, len });
    }
    let want = n > 0;
    let mut run = 0usize;
    let mut windows = 0usize;
    let mut hits = 0usize;
    for &e in series.events() {
        if run >= k {
            windows += 1;
            hits += e as usize;
        }
        run = if e == want { run + 1 } else { 0 };
    }
    if windows == 0 {
        return Err(EnergyError::NoWindows(n));
    }
    Ok((hits as f64 / windows as f64, windows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub p: f64,
    pub count: usize,
}

/// Conditional event profile over `N ∈ [-n_max, -1] ∪ [1, n_max]`. Entries
/// without any conditioning window are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestProfile {
    entries: BTreeMap<i64, ProfileEntry>,
    n_max: usize,
    marginal_rate: f64,
}

impl HarvestProfile {
    pub fn from_parts(entries: BTreeMap<i64, ProfileEntry>, n_max: usize, marginal_rate: f64) -> Self {
        Self {
            entries,
            n_max,
            marginal_rate,
        }
    }

    pub fn h(&self, n: i64) -> Option<f64> {
        self.entries.get(&n).map(|e| e.p)
    }

    pub fn entries(&self) -> &BTreeMap<i64, ProfileEntry> {
        &self.entries
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn marginal_rate(&self) -> f64 {
        self.marginal_rate
    }

    pub fn support(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.keys().copied()
    }
}

pub fn harvest_profile(series: &EventSeries, n_max: usize) -> Result<HarvestProfile, EnergyError> {
    if n_max == 0 {
        return Err(EnergyError::ZeroParameter("n_max"));
    }
    if n_max >= series.len() {
        return Err(EnergyError::ConditioningTooLong {
            n: n_max as i64,
            len: series.len(),
        });
    }
    let mut entries = BTreeMap::new();
    let n_max_i = n_max as i64;
    for n in (-n_max_i..=-1).chain(1..=n_max_i) {
        match conditional_event_prob(series, n) {
            Ok((p, count)) => {
                entries.insert(n, ProfileEntry { p, count });
            }
            Err(EnergyError::NoWindows(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(HarvestProfile {
        entries,
        n_max,
        marginal_rate: series.event_rate(),
    })
}

/// Discrete 1-Wasserstein distance between two profiles over their common
/// support, each normalized to unit mass.
pub fn kw_distance(a: &HarvestProfile, b: &HarvestProfile) -> Result<f64, EnergyError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .entries
        .iter()
        .filter_map(|(n, ea)| b.entries.get(n).map(|eb| (ea.p, eb.p)))
        .unzip();
    if xs.is_empty() {
        return Err(EnergyError::EmptySupport);
    }
    Ok(cdf_distance(&xs, &ys))
}

/// Sum of absolute CDF differences of two mass vectors on a shared ordered
/// support. A vector of zero mass counts as uniform.
pub(crate) fn cdf_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let na = normalized(a);
    let nb = normalized(b);
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut total = 0.0;
    for (x, y) in na.iter().zip(&nb) {
        ca += x;
        cb += y;
        total += (ca - cb).abs();
    }
    total
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter().map(|x| x / sum).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaFactor {
    pub eta: f64,
    pub kw_observed: f64,
    pub kw_random: f64,
}

/// Eta-factor of a profile.
///
/// The persistent reference keeps its state forever: `h = 1` after events and
/// `h = 0` after non-events. The memoryless reference has `h = marginal_rate`
/// everywhere. Both live on the profile's own support.
pub fn eta_factor(profile: &HarvestProfile) -> Result<EtaFactor, EnergyError> {
    if profile.entries.is_empty() {
        return Err(EnergyError::EmptySupport);
    }
    let observed: Vec<f64> = profile.entries.values().map(|e| e.p).collect();
    let ideal: Vec<f64> = profile.support().map(|n| if n > 0 { 1.0 } else { 0.0 }).collect();
    let random = vec![profile.marginal_rate; observed.len()];
    let kw_observed = cdf_distance(&observed, &ideal);
    let kw_random = cdf_distance(&random, &ideal);
    let eta = if kw_random <= f64::EPSILON {
        1.0
    } else {
        (1.0 - kw_observed / kw_random).clamp(0.0, 1.0)
    };
    Ok(EtaFactor {
        eta,
        kw_observed,
        kw_random,
    })
}

/// Convenience: binarize, profile and score in one go.
pub fn estimate_eta(
    trace: &HarvestTrace,
    dk_uj: u64,
    dt_us: u64,
    n_max: usize,
) -> Result<(HarvestProfile, EtaFactor), EnergyError> {
    let series = binarize_trace(trace, dk_uj, dt_us)?;
    let n_max = n_max.min(series.len().saturating_sub(1)).max(1);
    let profile = harvest_profile(&series, n_max)?;
    let eta = eta_factor(&profile)?;
    Ok((profile, eta))
}

/// Probability of an event in the slot after the end of `series`, read from
/// the profile at the trailing run length (clamped to `n_max`).
pub fn predict_next(series: &EventSeries, profile: &HarvestProfile) -> f64 {
    let events = series.events();
    let Some(&last) = events.last() else {
        return profile.marginal_rate;
    };
    let run = events.iter().rev().take_while(|&&e| e == last).count();
    let n = run.min(profile.n_max.max(1)) as i64;
    let key = if last { n } else { -n };
    profile.h(key).unwrap_or(profile.marginal_rate)
}

/// Expected outage length `η / (1 − η)` in event slots.
pub fn expected_off_duration(eta: f64) -> Result<f64, EnergyError> {
    if !(0.0..1.0).contains(&eta) {
        return Err(EnergyError::EtaOutOfRange(eta));
    }
    Ok(eta / (1.0 - eta))
}

/// One row of the exported `h(N)` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub n: i64,
    pub p: f64,
    pub count: usize,
}

/// JSON export of a characterized harvester.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileExport {
    pub eta: f64,
    pub kw_observed: f64,
    pub kw_random: f64,
    pub h: Vec<ProfileRow>,
    pub marginal_rate: f64,
}

impl ProfileExport {
    pub fn new(profile: &HarvestProfile, eta: &EtaFactor) -> Self {
        Self {
            eta: eta.eta,
            kw_observed: eta.kw_observed,
            kw_random: eta.kw_random,
            h: profile
                .entries
                .iter()
                .map(|(&n, e)| ProfileRow {
                    n,
                    p: e.p,
                    count: e.count,
                })
                .collect(),
            marginal_rate: profile.marginal_rate,
        }
    }

    /// Rebuilds the profile. `n_max` is the largest `|N|` present.
    pub fn to_profile(&self) -> HarvestProfile {
        let entries: BTreeMap<i64, ProfileEntry> = self
            .h
            .iter()
            .map(|r| (r.n, ProfileEntry { p: r.p, count: r.count }))
            .collect();
        let n_max = entries.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(1);
        HarvestProfile::from_parts(entries, n_max, self.marginal_rate)
    }
}
