//! Output files: the episode log, the run summary and the sweep table.
//!
//! `episodes.csv` has one row per [`EpisodeRecord`]:
//!
//! ```text
//! episode,pass,step,sim_time,sensor_index,sensor_id,kind,
//! prior_update_time,prior_avg_mse,prior_energy,action,
//! update_time,avg_mse,energy,next_update_time,
//! rewarded,reward_acc,reward_en,reward_total
//! ```
//!
//! The unprefixed state columns are the posterior state. Floats use the
//! shortest representation that parses back to the same value, so the
//! summary can be rebuilt exactly from the log.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{Action, SensorState};
use crate::energy::EnergyParams;
use crate::sim::{lifetime_report, EpisodeKind, EpisodeRecord, LifetimeReport};
use crate::{Error, Result, JULIAN_YEAR_S};

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeRow {
    episode: usize,
    pass: usize,
    step: u64,
    sim_time: f64,
    sensor_index: usize,
    sensor_id: usize,
    kind: String,
    prior_update_time: u32,
    prior_avg_mse: f64,
    prior_energy: f64,
    action: String,
    update_time: u32,
    avg_mse: f64,
    energy: f64,
    next_update_time: u32,
    rewarded: bool,
    reward_acc: f64,
    reward_en: f64,
    reward_total: f64,
}

impl From<&EpisodeRecord> for EpisodeRow {
    fn from(r: &EpisodeRecord) -> Self {
        Self {
            episode: r.episode,
            pass: r.pass,
            step: r.step,
            sim_time: r.sim_time,
            sensor_index: r.sensor_index,
            sensor_id: r.sensor_id,
            kind: r.kind.name().to_string(),
            prior_update_time: r.prior.update_time,
            prior_avg_mse: r.prior.avg_mse,
            prior_energy: r.prior.energy,
            action: r.action.map_or(String::new(), |a| a.name().to_string()),
            update_time: r.posterior.update_time,
            avg_mse: r.posterior.avg_mse,
            energy: r.posterior.energy,
            next_update_time: r.next_update_time,
            rewarded: r.rewarded,
            reward_acc: r.reward_acc,
            reward_en: r.reward_en,
            reward_total: r.reward_total,
        }
    }
}

impl TryFrom<EpisodeRow> for EpisodeRecord {
    type Error = Error;

    fn try_from(r: EpisodeRow) -> Result<Self> {
        let kind = EpisodeKind::from_name(&r.kind).ok_or_else(|| Error::Data(format!("unknown kind `{}`", r.kind)))?;
        let action = match r.action.as_str() {
            "" => None,
            name => Some(Action::from_name(name).ok_or_else(|| Error::Data(format!("unknown action `{name}`")))?),
        };
        Ok(EpisodeRecord {
            episode: r.episode,
            pass: r.pass,
            step: r.step,
            sim_time: r.sim_time,
            sensor_index: r.sensor_index,
            sensor_id: r.sensor_id,
            kind,
            prior: SensorState {
                update_time: r.prior_update_time,
                avg_mse: r.prior_avg_mse,
                energy: r.prior_energy,
            },
            posterior: SensorState {
                update_time: r.update_time,
                avg_mse: r.avg_mse,
                energy: r.energy,
            },
            action,
            next_update_time: r.next_update_time,
            rewarded: r.rewarded,
            reward_acc: r.reward_acc,
            reward_en: r.reward_en,
            reward_total: r.reward_total,
        })
    }
}

const EPISODE_HEADER: [&str; 19] = [
    "episode",
    "pass",
    "step",
    "sim_time",
    "sensor_index",
    "sensor_id",
    "kind",
    "prior_update_time",
    "prior_avg_mse",
    "prior_energy",
    "action",
    "update_time",
    "avg_mse",
    "energy",
    "next_update_time",
    "rewarded",
    "reward_acc",
    "reward_en",
    "reward_total",
];

pub fn write_episodes<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    // written by hand so an empty log still carries the header
    w.write_record(EPISODE_HEADER)?;
    for r in records {
        w.serialize(EpisodeRow::from(r))?;
    }
    w.flush().map_err(|e| Error::io("episodes.csv", e))?;
    Ok(())
}

pub fn read_episodes<R: Read>(input: R) -> Result<Vec<EpisodeRecord>> {
    csv::Reader::from_reader(input)
        .deserialize::<EpisodeRow>()
        .map(|row| EpisodeRecord::try_from(row?))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassSummary {
    pub pass: usize,
    /// Index of the pass's first record.
    pub first_record: usize,
    pub first_step: u64,
    pub rewarded: usize,
    /// Mean total reward over the pass's rewarded episodes.
    pub mean_reward: Option<f64>,
}

/// Everything the summary file reports, computed from the episode log alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub records: usize,
    pub learning_episodes: usize,
    pub transmissions: usize,
    pub passes: Vec<PassSummary>,
    /// `None` for an empty log.
    pub lifetime: Option<LifetimeReport>,
}

impl RunSummary {
    pub fn from_records(
        records: &[EpisodeRecord],
        seed: u64,
        energy: &EnergyParams,
        baseline_steps: &[u32],
        time_step: f64,
        window_steps: u64,
    ) -> Result<Self> {
        let mut passes: Vec<PassSummary> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if passes.last().is_none_or(|p| p.pass != r.pass) {
                passes.push(PassSummary {
                    pass: r.pass,
                    first_record: i,
                    first_step: r.step,
                    rewarded: 0,
                    mean_reward: None,
                });
                sums.push(0.0);
            }
            if r.rewarded {
                passes.last_mut().unwrap().rewarded += 1;
                *sums.last_mut().unwrap() += r.reward_total;
            }
        }
        for (p, s) in passes.iter_mut().zip(sums) {
            p.mean_reward = (p.rewarded > 0).then(|| s / p.rewarded as f64);
        }
        let lifetime = if records.is_empty() {
            None
        } else {
            Some(lifetime_report(records, energy, baseline_steps, time_step, window_steps)?)
        };
        Ok(Self {
            seed,
            records: records.len(),
            learning_episodes: records.iter().filter(|r| r.kind == EpisodeKind::Learning).count(),
            transmissions: records.iter().filter(|r| r.kind.transmits()).count(),
            passes,
            lifetime,
        })
    }

    /// `key=value` lines.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("seed={}", self.seed),
            format!("records={}", self.records),
            format!("learning_episodes={}", self.learning_episodes),
            format!("transmissions={}", self.transmissions),
        ];
        for p in &self.passes {
            out.push(format!("pass.{}.first_step={}", p.pass, p.first_step));
            out.push(format!("pass.{}.first_record={}", p.pass, p.first_record));
            out.push(format!("pass.{}.rewarded={}", p.pass, p.rewarded));
            if let Some(m) = p.mean_reward {
                out.push(format!("pass.{}.mean_reward={m}", p.pass));
            }
        }
        if let Some(rep) = &self.lifetime {
            out.push(format!("sensors={}", rep.sensors.len()));
            for s in &rep.sensors {
                let k = format!("sensor.{}", s.sensor_id);
                out.push(format!("{k}.intervals={}", s.intervals));
                out.push(format!("{k}.mean_interval_steps={}", s.mean_interval_steps));
                out.push(format!("{k}.lifetime_s={}", s.lifetime_s));
                out.push(format!("{k}.lifetime_years={}", s.lifetime_s / JULIAN_YEAR_S));
                out.push(format!("{k}.baseline_lifetime_s={}", s.baseline_lifetime_s));
                out.push(format!("{k}.gain={}", s.gain));
            }
            out.push(format!("mean_gain={}", rep.mean_gain));
            out.push(format!("min_gain={}", rep.min_gain));
        } else {
            out.push("sensors=0".into());
        }
        out
    }
}

/// Parses `key=value` lines back into pairs, keeping order.
pub fn parse_summary(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sensors: usize,
    pub learning_episodes: usize,
    pub mean_interval_steps: f64,
    pub mean_lifetime_s: f64,
    pub mean_lifetime_years: f64,
    pub baseline_lifetime_s: f64,
    pub mean_gain: f64,
    pub min_gain: f64,
}

impl SweepRow {
    pub fn new(summary: &RunSummary, sensors: usize) -> Option<Self> {
        let rep = summary.lifetime.as_ref()?;
        let n = rep.sensors.len() as f64;
        let mean = |f: fn(&crate::sim::SensorLifetime) -> f64| rep.sensors.iter().map(f).sum::<f64>() / n;
        let lifetime = mean(|s| s.lifetime_s);
        Some(Self {
            sensors,
            learning_episodes: summary.learning_episodes,
            mean_interval_steps: mean(|s| s.mean_interval_steps),
            mean_lifetime_s: lifetime,
            mean_lifetime_years: lifetime / JULIAN_YEAR_S,
            baseline_lifetime_s: mean(|s| s.baseline_lifetime_s),
            mean_gain: rep.mean_gain,
            min_gain: rep.min_gain,
        })
    }
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("sweep.csv", e))?;
    Ok(())
}
