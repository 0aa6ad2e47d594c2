//! Ground-truth data: dataset ingestion, gridding onto the simulation time
//! step and synthetic correlated fields.

mod intel;
mod synthetic;

pub use intel::{parse_locations, parse_readings, write_readings, ParseOutcome, RawReading};
pub use synthetic::{generate_synthetic_field, psd_cholesky, MAX_SYNTHETIC_SENSORS};

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::estimator::Location;
use crate::{Error, Result};

/// Observed physical quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Temperature,
    Humidity,
    Synthetic,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Temperature => "temperature",
            Quantity::Humidity => "humidity",
            Quantity::Synthetic => "synthetic",
        }
    }

    pub fn from_name(name: &str) -> Option<Quantity> {
        match name {
            "temperature" => Some(Quantity::Temperature),
            "humidity" => Some(Quantity::Humidity),
            "synthetic" => Some(Quantity::Synthetic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorLocation {
    pub mote_id: usize,
    pub x: f64,
    pub y: f64,
}

impl SensorLocation {
    pub fn location(&self) -> Location {
        [self.x, self.y]
    }
}

/// Per-sensor values on a regular grid of `time_step` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedSeries {
    pub quantity: Quantity,
    pub time_step: f64,
    pub sensors: Vec<SensorLocation>,
    /// `values[sensor][step]`.
    pub values: Vec<Vec<f64>>,
}

impl GriddedSeries {
    pub fn horizon(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn positions(&self) -> Vec<Location> {
        self.sensors.iter().map(SensorLocation::location).collect()
    }

    /// Keeps the sensors at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<GriddedSeries> {
        if let Some(bad) = indices.iter().find(|&&i| i >= self.sensors.len()) {
            return Err(Error::Data(format!("sensor index {bad} out of range ({} sensors)", self.sensors.len())));
        }
        Ok(GriddedSeries {
            quantity: self.quantity,
            time_step: self.time_step,
            sensors: indices.iter().map(|&i| self.sensors[i]).collect(),
            values: indices.iter().map(|&i| self.values[i].clone()).collect(),
        })
    }

    /// Checks that every sensor covers `horizon` steps with finite values.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.values.len() != self.sensors.len() {
            return Err(Error::Data(format!(
                "{} value series for {} sensors",
                self.values.len(),
                self.sensors.len()
            )));
        }
        for (s, vals) in self.sensors.iter().zip(&self.values) {
            if vals.len() < horizon {
                return Err(Error::Data(format!(
                    "sensor {} has {} grid steps, horizon needs {horizon}",
                    s.mote_id,
                    vals.len()
                )));
            }
            if let Some(step) = vals[..horizon].iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sensor {} has a gap at grid step {step}", s.mote_id)));
            }
        }
        Ok(())
    }

    /// Writes `step,sensor_id,value` rows, step-major.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "sensor_id", "value"])?;
        for step in 0..self.horizon() {
            for (s, vals) in self.sensors.iter().zip(&self.values) {
                w.write_record([step.to_string(), s.mote_id.to_string(), vals[step].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the CSV written by [`GriddedSeries::write_csv`]; positions come
    /// from `locations`.
    pub fn read_csv<R: Read>(
        reader: R,
        locations: &[SensorLocation],
        quantity: Quantity,
        time_step: f64,
    ) -> Result<GriddedSeries> {
        let mut rows: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            let (step, id, value): (usize, usize, f64) = rec?;
            rows.entry(id).or_default().insert(step, value);
        }
        let mut sensors = Vec::new();
        let mut values = Vec::new();
        for (id, steps) in rows {
            let loc = locations
                .iter()
                .find(|l| l.mote_id == id)
                .ok_or_else(|| Error::Data(format!("no location for sensor {id}")))?;
            let horizon = steps.keys().next_back().map_or(0, |k| k + 1);
            if steps.len() != horizon {
                return Err(Error::Data(format!("sensor {id} has missing grid steps")));
            }
            sensors.push(*loc);
            values.push(steps.into_values().collect());
        }
        Ok(GriddedSeries {
            quantity,
            time_step,
            sensors,
            values,
        })
    }
}

/// Buckets readings onto the grid `start + k ts`, `k < horizon`.
///
/// Multiple readings in a bucket are averaged. Gaps carry the last value
/// forward and leading gaps take the first available one. Sensors covering
/// fewer than half of the buckets are dropped with a warning.
pub fn grid_series(
    readings: &[RawReading],
    locations: &[SensorLocation],
    ts: f64,
    horizon: usize,
    quantity: Quantity,
    start: Option<f64>,
) -> Result<GriddedSeries> {
    if !(ts > 0.0) {
        return Err(Error::contract(format!("time step must be positive, got {ts}")));
    }
    let value_of = |r: &RawReading| match quantity {
        Quantity::Humidity => r.humidity,
        _ => r.temperature,
    };
    let start = start.unwrap_or_else(|| readings.iter().map(|r| r.timestamp).fold(f64::INFINITY, f64::min));

    let mut buckets: BTreeMap<usize, Vec<(f64, u32)>> = BTreeMap::new();
    for r in readings {
        let v = value_of(r);
        if !v.is_finite() {
            continue;
        }
        let k = ((r.timestamp - start) / ts).round();
        if !(k >= 0.0 && k < horizon as f64) {
            continue;
        }
        let slots = buckets.entry(r.mote_id).or_insert_with(|| vec![(0.0, 0); horizon]);
        let slot = &mut slots[k as usize];
        slot.0 += v;
        slot.1 += 1;
    }

    let mut sensors = Vec::new();
    let mut values = Vec::new();
    for (id, slots) in buckets {
        let Some(loc) = locations.iter().find(|l| l.mote_id == id) else {
            log::warn!("sensor {id} has no location; dropped");
            continue;
        };
        let covered = slots.iter().filter(|s| s.1 > 0).count();
        if (covered as f64) < 0.5 * horizon as f64 {
            log::warn!("sensor {id} covers {covered}/{horizon} grid steps; dropped");
            continue;
        }
        let first = slots.iter().find(|s| s.1 > 0).map(|s| s.0 / s.1 as f64).unwrap_or(f64::NAN);
        let mut last = first;
        let filled: Vec<f64> = slots
            .iter()
            .map(|&(sum, n)| {
                if n > 0 {
                    last = sum / n as f64;
                }
                last
            })
            .collect();
        sensors.push(*loc);
        values.push(filled);
    }
    if sensors.is_empty() {
        return Err(Error::Data(format!(
            "no sensor has usable {} readings over {horizon} grid steps",
            quantity.name()
        )));
    }
    Ok(GriddedSeries {
        quantity,
        time_step: ts,
        sensors,
        values,
    })
}

/// Largest interval, in seconds, such that readings taken that far apart
/// differ by at most `accuracy` on average, scanning `1..=max_steps` grid
/// steps and stopping at the first interval that fails. Returns 0 when even
/// one grid step fails.
pub fn baseline_interval(series: &GriddedSeries, accuracy: f64, max_steps: usize) -> f64 {
    let horizon = series.horizon();
    let limit = max_steps.min(horizon.saturating_sub(1));
    let mut best = 0;
    for lag in 1..=limit {
        let mut total = 0.0;
        let mut n = 0usize;
        for vals in &series.values {
            for w in 0..horizon - lag {
                total += (vals[w + lag] - vals[w]).abs();
                n += 1;
            }
        }
        if total / n as f64 > accuracy {
            break;
        }
        best = lag;
    }
    best as f64 * series.time_step
}
