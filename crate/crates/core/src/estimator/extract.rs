//! Online fitting of the covariance model from a window of observations.
//!
//! `σ` is the pooled within-sensor standard deviation. The decay rates come
//! from least-squares fits through the origin of `-ln r` against lag, where
//! `r` is the sample Pearson correlation of:
//!
//! - same-sensor sample pairs `lag` grid steps apart (temporal rate), and
//! - same-time sample pairs of two sensors `d` meters apart (spatial rate).
//!
//! Non-positive correlations are left out of the log fit, and an axis with
//! fewer than two usable points keeps its previous rate.

use std::collections::BTreeMap;

use super::{distance, CovarianceModel, Location, Observation};

/// Window means used for the estimator offset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldMeans {
    pub per_sensor: BTreeMap<usize, f64>,
    /// Mean over all samples of the window; `μ_Z` of the offset.
    pub pooled: f64,
}

impl FieldMeans {
    pub fn uniform(mean: f64, sensors: impl IntoIterator<Item = usize>) -> Self {
        Self {
            per_sensor: sensors.into_iter().map(|s| (s, mean)).collect(),
            pooled: mean,
        }
    }

    /// Falls back to the pooled mean for sensors absent from the window.
    pub fn sensor_mean(&self, sensor_id: usize) -> f64 {
        self.per_sensor.get(&sensor_id).copied().unwrap_or(self.pooled)
    }
}

/// A covariance model together with the window means it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: CovarianceModel,
    pub means: FieldMeans,
}

impl FittedModel {
    pub fn zero_mean(model: CovarianceModel) -> Self {
        Self {
            model,
            means: FieldMeans::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    /// Grid spacing in seconds.
    pub time_step: f64,
    /// Largest temporal lag in grid steps.
    pub max_lag: usize,
    /// Samples a sensor needs to take part in the fit.
    pub min_samples: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            time_step: 10.0,
            max_lag: 20,
            min_samples: 10,
        }
    }
}

struct SensorSeries {
    location: Location,
    /// Centered values indexed by `step - first_step`; NaN where missing.
    samples: Vec<f64>,
    first_step: i64,
}

impl SensorSeries {
    fn at(&self, step: i64) -> Option<f64> {
        let i = step - self.first_step;
        if i < 0 {
            return None;
        }
        self.samples.get(i as usize).copied().filter(|v| !v.is_nan())
    }
}

/// Pearson accumulator over (x, y) pairs.
#[derive(Default)]
struct Pearson {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Pearson {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn coefficient(&self) -> Option<f64> {
        if self.n < 3.0 {
            return None;
        }
        let cov = self.sxy - self.sx * self.sy / self.n;
        let vx = self.sxx - self.sx * self.sx / self.n;
        let vy = self.syy - self.sy * self.sy / self.n;
        let denom = (vx * vy).sqrt();
        if !(denom > 0.0) {
            return None;
        }
        Some((cov / denom).clamp(-1.0, 1.0))
    }
}

/// Least-squares slope through the origin of `-ln r` against `x`, over
/// points with `r > 0`. `None` with fewer than two usable points.
fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, r)| *x > 0.0 && *r > 0.0)
        .map(|&(x, r)| (x, -r.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let sxy: f64 = usable.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| x * x).sum();
    Some((sxy / sxx).max(0.0))
}

/// Fits the covariance model to the observations of the last
/// `window_length` seconds of `window`.
///
/// Returns `previous` unchanged when fewer than two sensors have
/// `min_samples` readings, or when the pooled variance vanishes.
pub fn extract_parameters(
    window: &[Observation],
    window_length: f64,
    config: &ExtractionConfig,
    previous: &FittedModel,
) -> FittedModel {
    let latest = window.iter().map(|o| o.time).fold(f64::NEG_INFINITY, f64::max);
    let start = latest - window_length;

    let mut raw: BTreeMap<usize, (Location, BTreeMap<i64, (f64, u32)>)> = BTreeMap::new();
    for o in window.iter().filter(|o| o.time >= start && o.value.is_finite()) {
        let step = (o.time / config.time_step).round() as i64;
        let entry = raw.entry(o.sensor_id).or_insert_with(|| (o.location, BTreeMap::new()));
        let slot = entry.1.entry(step).or_insert((0.0, 0));
        slot.0 += o.value;
        slot.1 += 1;
    }
    raw.retain(|_, (_, s)| s.len() >= config.min_samples);
    if raw.len() < 2 {
        return previous.clone();
    }

    let mut means = FieldMeans::default();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut series = Vec::with_capacity(raw.len());
    for (&id, (location, steps)) in &raw {
        let sum: f64 = steps.values().map(|&(s, n)| s / n as f64).sum();
        let mean = sum / steps.len() as f64;
        means.per_sensor.insert(id, mean);
        total += sum;
        count += steps.len();
        let first_step = *steps.keys().next().unwrap();
        let last_step = *steps.keys().next_back().unwrap();
        let mut samples = vec![f64::NAN; (last_step - first_step + 1) as usize];
        for (&k, &(s, n)) in steps {
            samples[(k - first_step) as usize] = s / n as f64 - mean;
        }
        series.push(SensorSeries {
            location: *location,
            samples,
            first_step,
        });
    }
    means.pooled = total / count as f64;

    let dof = count - series.len();
    let ss: f64 = series
        .iter()
        .flat_map(|s| s.samples.iter())
        .filter(|v| !v.is_nan())
        .map(|v| v * v)
        .sum();
    let sigma = (ss / dof as f64).sqrt();
    let scale = 1.0 + means.pooled.abs();
    if !(sigma > 1e-9 * scale) {
        return previous.clone();
    }

    let mut temporal = Vec::with_capacity(config.max_lag);
    for lag in 1..=config.max_lag {
        let mut acc = Pearson::default();
        for s in &series {
            for (v, w) in s.samples.iter().zip(s.samples.iter().skip(lag)) {
                if !(v.is_nan() || w.is_nan()) {
                    acc.push(*v, *w);
                }
            }
        }
        if let Some(r) = acc.coefficient() {
            temporal.push((lag as f64 * config.time_step, r));
        }
    }

    let mut spatial = Vec::new();
    for (i, a) in series.iter().enumerate() {
        for b in &series[i + 1..] {
            let d = distance(&a.location, &b.location);
            if d <= 0.0 {
                continue;
            }
            let mut acc = Pearson::default();
            for (k, v) in a.samples.iter().enumerate() {
                if v.is_nan() {
                    continue;
                }
                if let Some(w) = b.at(a.first_step + k as i64) {
                    acc.push(*v, w);
                }
            }
            if let Some(r) = acc.coefficient() {
                spatial.push((d, r));
            }
        }
    }

    let prev = previous.model;
    FittedModel {
        model: CovarianceModel {
            sigma,
            theta_time: log_slope(&temporal).unwrap_or(prev.theta_time),
            theta_space: log_slope(&spatial).unwrap_or(prev.theta_space),
        },
        means,
    }
}
