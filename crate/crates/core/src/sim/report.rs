//! Expected lifetime and gain from the intervals a run actually achieved.

use super::{EpisodeKind, EpisodeRecord};
use crate::energy::{expected_lifetime, lifetime_gain, EnergyParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorLifetime {
    pub sensor_index: usize,
    pub sensor_id: usize,
    /// Completed intervals that entered the average.
    pub intervals: usize,
    pub mean_interval_steps: f64,
    pub lifetime_s: f64,
    pub baseline_lifetime_s: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeReport {
    pub sensors: Vec<SensorLifetime>,
    pub mean_gain: f64,
    pub min_gain: f64,
}

/// Averages each sensor's completed intervals over the last `window_steps`
/// grid steps of the stream and converts them to expected lifetimes.
///
/// `baseline_steps` holds the fixed update time each sensor is compared
/// against, one entry per sensor or a single shared entry. A sensor without
/// a completed interval in the window falls back to all of its intervals,
/// then to the interval it was last assigned.
pub fn lifetime_report(
    records: &[EpisodeRecord],
    energy: &EnergyParams,
    baseline_steps: &[u32],
    time_step: f64,
    window_steps: u64,
) -> Result<LifetimeReport> {
    let last = records
        .iter()
        .map(|r| r.step)
        .max()
        .ok_or_else(|| Error::contract("lifetime report needs a nonempty record stream"))?;
    let n = records.iter().map(|r| r.sensor_index).max().unwrap_or(0) + 1;
    if baseline_steps.len() != 1 && baseline_steps.len() != n {
        return Err(Error::contract(format!(
            "{} baseline intervals for {n} sensors",
            baseline_steps.len()
        )));
    }
    let start = last.saturating_sub(window_steps);
    let mut sensors = Vec::with_capacity(n);
    for i in 0..n {
        let own: Vec<&EpisodeRecord> = records.iter().filter(|r| r.sensor_index == i).collect();
        let Some(first) = own.first() else { continue };
        let completed = |r: &&&EpisodeRecord| matches!(r.kind, EpisodeKind::Learning | EpisodeKind::Fixed);
        let mut used: Vec<f64> = own
            .iter()
            .filter(completed)
            .filter(|r| r.step >= start)
            .map(|r| r.posterior.update_time as f64)
            .collect();
        if used.is_empty() {
            used = own.iter().filter(completed).map(|r| r.posterior.update_time as f64).collect();
        }
        let count = used.len();
        let mean_steps = if count > 0 {
            used.iter().sum::<f64>() / count as f64
        } else {
            own.last().map_or(first.next_update_time, |r| r.next_update_time) as f64
        };
        let baseline = baseline_steps.get(i).copied().unwrap_or(baseline_steps[0]) as f64;
        let lifetime_s = expected_lifetime(energy, mean_steps * time_step)?;
        let baseline_lifetime_s = expected_lifetime(energy, baseline * time_step)?;
        sensors.push(SensorLifetime {
            sensor_index: i,
            sensor_id: first.sensor_id,
            intervals: count,
            mean_interval_steps: mean_steps,
            lifetime_s,
            baseline_lifetime_s,
            gain: lifetime_gain(lifetime_s, baseline_lifetime_s)?,
        });
    }
    let mean_gain = sensors.iter().map(|s| s.gain).sum::<f64>() / sensors.len() as f64;
    let min_gain = sensors.iter().map(|s| s.gain).fold(f64::INFINITY, f64::min);
    Ok(LifetimeReport {
        sensors,
        mean_gain,
        min_gain,
    })
}
