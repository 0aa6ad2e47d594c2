//! Reader for the Intel Berkeley lab sensor log format.
//!
//! Each line holds whitespace-separated columns
//! `date time epoch moteid temperature humidity [light [voltage]]`, e.g.
//! `2004-03-31 03:38:15.757551 2 1 19.9884 37.0933 45.08 2.69964`.

use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime};

use super::{GriddedSeries, Quantity, SensorLocation};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub date: String,
    pub time: String,
    pub epoch: i64,
    pub mote_id: usize,
    /// °C.
    pub temperature: f64,
    /// %RH.
    pub humidity: f64,
    pub light: Option<f64>,
    pub voltage: Option<f64>,
    /// Seconds since the Unix epoch, from `date` and `time` read as UTC.
    pub timestamp: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub readings: Vec<RawReading>,
    /// Lines that were malformed or lacked finite temperature and humidity.
    pub skipped: usize,
}

fn parse_timestamp(date: &str, time: &str) -> Option<f64> {
    let dt = NaiveDateTime::parse_from_str(&format!("{date} {time}"), "%Y-%m-%d %H:%M:%S%.f").ok()?;
    let utc = dt.and_utc();
    Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9)
}

fn parse_line(line: &str) -> Option<RawReading> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() < 6 {
        return None;
    }
    let temperature: f64 = f[4].parse().ok()?;
    let humidity: f64 = f[5].parse().ok()?;
    if !(temperature.is_finite() && humidity.is_finite()) {
        return None;
    }
    let mote_id: usize = f[3].parse().ok()?;
    if mote_id == 0 {
        return None;
    }
    Some(RawReading {
        timestamp: parse_timestamp(f[0], f[1])?,
        date: f[0].to_string(),
        time: f[1].to_string(),
        epoch: f[2].parse().ok()?,
        mote_id,
        temperature,
        humidity,
        light: f.get(6).and_then(|v| v.parse().ok()),
        voltage: f.get(7).and_then(|v| v.parse().ok()),
    })
}

/// Parses a reading log. Malformed rows are counted and skipped; blank lines
/// are ignored.
pub fn parse_readings<R: BufRead>(reader: R) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<readings>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Some(r) => out.readings.push(r),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Parses `mote_id x y` lines; `#` starts a comment.
pub fn parse_locations<R: BufRead>(reader: R) -> Result<Vec<SensorLocation>> {
    let mut out: Vec<SensorLocation> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<locations>", e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Config {
            path: "<locations>".into(),
            line: i + 1,
            message: msg.into(),
        };
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() < 3 {
            return Err(bad("expected `mote_id x y`"));
        }
        let loc = SensorLocation {
            mote_id: f[0].parse().map_err(|_| bad("bad mote id"))?,
            x: f[1].parse().map_err(|_| bad("bad x coordinate"))?,
            y: f[2].parse().map_err(|_| bad("bad y coordinate"))?,
        };
        if out.iter().any(|l| l.mote_id == loc.mote_id) {
            return Err(bad(&format!("duplicate mote id {}", loc.mote_id)));
        }
        out.push(loc);
    }
    Ok(out)
}

/// Writes a gridded series back out in the reading-log format, one row per
/// sensor and grid step starting at Unix time `start`.
pub fn write_readings<W: Write>(series: &GriddedSeries, start: f64, mut out: W) -> Result<()> {
    let io = |e| Error::io("<readings>", e);
    for step in 0..series.horizon() {
        let t = start + step as f64 * series.time_step;
        let secs = t.floor();
        let nanos = ((t - secs) * 1e9).round() as u32;
        let dt = DateTime::from_timestamp(secs as i64, nanos)
            .ok_or_else(|| Error::Data(format!("timestamp {t} out of range")))?;
        for (s, vals) in series.sensors.iter().zip(&series.values) {
            let (temp, hum) = match series.quantity {
                Quantity::Humidity => (20.0, vals[step]),
                _ => (vals[step], 40.0),
            };
            writeln!(
                out,
                "{} {} {step} {} {temp} {hum}",
                dt.format("%Y-%m-%d"),
                dt.format("%H:%M:%S%.6f"),
                s.mote_id
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
