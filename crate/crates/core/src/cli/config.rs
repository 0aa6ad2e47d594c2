//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Lists are comma separated (`hidden = 64, 64`). `event` may repeat; every
//! other key may appear once. Unknown keys are rejected so typos surface as
//! diagnostics anchored to their line.
//!
//! ```text
//! # two sensors, desk-scale network
//! sensors = 2
//! spacing = 10
//! hidden = 64
//! event = 300 theta_time 0.0005
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::agent::UpdateBounds;
use crate::data::Quantity;
use crate::energy::EnergyParams;
use crate::estimator::{CovarianceModel, Location};
use crate::sim::{Change, CovarianceMode, ScheduledChange, SimConfig};
use crate::{Error, Result};

/// Environment variable naming the directory relative dataset paths are
/// resolved against.
pub const DATA_ENV: &str = "SENSORLIFE_DATA";

/// `(key, default, meaning)` for every accepted key, in the order `defaults`
/// prints them.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("time_step", "10", "seconds per grid step"),
    ("horizon", "77760", "grid steps per pass over the data (9 days)"),
    ("passes", "5", "replays of the data"),
    ("t0", "81", "initial update time per sensor in grid steps, or `auto`"),
    ("t_min", "1", "shortest update time, grid steps"),
    ("t_max", "1000", "longest update time, grid steps"),
    ("e0", "6696", "initial battery energy, J"),
    ("pc", "0.00003", "continuous power draw, W"),
    ("etr", "0.0637", "energy per acquire-and-transmit, J"),
    ("initial_energy", "1", "starting energy per sensor as a fraction of e0"),
    ("phi_acc", "0.6", "accuracy reward weight"),
    ("phi_en", "0.4", "energy reward weight"),
    ("alpha", "0.9", "Q-learning rate"),
    ("gamma", "0.2", "discount factor"),
    ("epsilon", "0.15", "exploration probability"),
    ("eps_target", "0.0625", "target average estimation error, squared units"),
    ("hidden", "1500, 1500, 1500", "hidden layer widths of the Q-network"),
    ("step_size", "0.001", "gradient descent step size"),
    ("batch_size", "32", "minibatch size"),
    ("epochs", "1", "passes over the training window per training session"),
    ("train_every", "10", "learning episodes between training sessions"),
    ("train_window", "256", "most recent transitions used for training"),
    ("neighbors", "8", "nearest reports used by the estimator"),
    ("learning", "true", "whether each sensor adapts its update time"),
    ("sigma", "1", "field standard deviation"),
    ("theta_time", "0.001", "temporal decay rate, 1/s"),
    ("theta_space", "0.05", "spatial decay rate, 1/m"),
    ("covariance", "fixed", "`fixed` or `extracted` (refit from the data)"),
    ("extract_window", "8640", "grid steps per parameter fit"),
    ("refit_every", "360", "grid steps between parameter fits"),
    ("max_lag", "20", "largest temporal lag of the fit, grid steps"),
    ("event", "", "`<episodes> <sigma|theta_time|theta_space|eps_target> <value>`"),
    ("max_episodes", "none", "stop after this many learning episodes"),
    ("report_window", "8640", "trailing grid steps averaged for lifetimes"),
    ("seed", "7", "random seed of the controller"),
    ("quantity", "synthetic", "`synthetic`, `temperature` or `humidity`"),
    ("sensors", "8", "synthetic sensor count"),
    ("layout", "grid", "synthetic placement: `grid` or `line`"),
    ("spacing", "10", "synthetic sensor spacing, m"),
    ("positions", "", "explicit synthetic positions `x y, x y, ...`"),
    ("field_seed", "1", "random seed of the synthetic field"),
    ("readings", "", "reading log for temperature or humidity runs"),
    ("locations", "", "`mote_id x y` file for temperature or humidity runs"),
    ("motes", "", "subset of mote ids to simulate"),
    ("start", "", "Unix time of grid step 0 (default: first reading)"),
    ("baseline", "t0", "fixed update time lifetimes are compared against"),
    ("baseline_accuracy", "0.25", "accuracy used when t0 = auto"),
    ("output", "out", "output directory"),
    ("checkpoint_every", "0", "learning episodes between network checkpoints (0: off)"),
    ("sweep", "", "sensor counts to run, each on the first N sensors"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Grid,
    Line,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Synthetic {
        sensors: usize,
        layout: Layout,
        spacing: f64,
        positions: Option<Vec<Location>>,
        field_seed: u64,
    },
    Dataset {
        quantity: Quantity,
        readings: PathBuf,
        locations: PathBuf,
        motes: Option<Vec<usize>>,
        start: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialTimes {
    Fixed(Vec<u32>),
    /// Derived from the data with `baseline_interval` at this accuracy.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub source: FieldSource,
    pub t0: InitialTimes,
    /// `None` compares against the initial update times.
    pub baseline: Option<Vec<u32>>,
    pub baseline_accuracy: f64,
    pub output: PathBuf,
    pub checkpoint_every: usize,
    pub sweep: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            source: FieldSource::Synthetic {
                sensors: 8,
                layout: Layout::Grid,
                spacing: 10.0,
                positions: None,
                field_seed: 1,
            },
            t0: InitialTimes::Fixed(vec![81]),
            baseline: None,
            baseline_accuracy: 0.25,
            output: PathBuf::from("out"),
            checkpoint_every: 0,
            sweep: Vec::new(),
        }
    }
}

/// Settings collected before the field source can be assembled.
#[derive(Default)]
struct Pending {
    quantity: Option<Quantity>,
    sensors: Option<usize>,
    layout: Option<Layout>,
    spacing: Option<f64>,
    positions: Option<Vec<Location>>,
    field_seed: Option<u64>,
    readings: Option<PathBuf>,
    locations: Option<PathBuf>,
    motes: Option<Vec<usize>>,
    start: Option<f64>,
    t_min: Option<u32>,
    t_max: Option<u32>,
    e0: Option<f64>,
    pc: Option<f64>,
    etr: Option<f64>,
    sigma: Option<f64>,
    theta_time: Option<f64>,
    theta_space: Option<f64>,
    extracted: Option<bool>,
    extract_window: Option<usize>,
    refit_every: Option<usize>,
    max_lag: Option<usize>,
}

fn number<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|p| number(p.trim())).collect()
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn positions(v: &str) -> std::result::Result<Vec<Location>, String> {
    v.split(',')
        .map(|p| {
            let xy: Vec<f64> = p.split_whitespace().map(number).collect::<std::result::Result<_, _>>()?;
            match xy[..] {
                [x, y] => Ok([x, y]),
                _ => Err(format!("position `{}` needs two coordinates", p.trim())),
            }
        })
        .collect()
}

fn event(v: &str) -> std::result::Result<ScheduledChange, String> {
    let f: Vec<&str> = v.split_whitespace().collect();
    let [after, param, value] = f[..] else {
        return Err("expected `<episodes> <parameter> <value>`".into());
    };
    let value: f64 = number(value)?;
    let change = match param {
        "sigma" => Change::Sigma(value),
        "theta_time" => Change::ThetaTime(value),
        "theta_space" => Change::ThetaSpace(value),
        "eps_target" => Change::EpsTarget(value),
        other => return Err(format!("unknown event parameter `{other}`")),
    };
    Ok(ScheduledChange {
        after_episodes: number(after)?,
        change,
    })
}

fn resolve(path: &str, base: &Path) -> PathBuf {
    let p = PathBuf::from(path);
    if p.is_absolute() {
        return p;
    }
    match std::env::var_os(DATA_ENV) {
        Some(root) => PathBuf::from(root).join(p),
        None => base.join(p),
    }
}

impl ExperimentConfig {
    /// Reads a configuration file; relative dataset paths resolve against
    /// `$SENSORLIFE_DATA` when set, else the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base, &[])
    }

    /// Parses `text` followed by `overrides` (`key=value` strings, applied
    /// as if appended to the file, replacing earlier values).
    pub fn parse(text: &str, origin: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut p = Pending::default();
        let mut seen = BTreeSet::new();
        let mut events = Vec::new();
        let mut replaced_events = false;

        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (origin.to_string(), i + 1, l.to_string(), false));
        let extra = overrides
            .iter()
            .enumerate()
            .map(|(i, l)| ("<override>".to_string(), i + 1, l.clone(), true));
        for (src, line_no, raw, is_override) in lines.chain(extra) {
            let err = |message: String| Error::Config {
                path: src.clone(),
                line: line_no,
                message,
            };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(err(format!("expected `key = value`, got `{body}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if key == "event" {
                if is_override && !replaced_events {
                    events.clear();
                    replaced_events = true;
                }
                events.push(event(value).map_err(err)?);
                continue;
            }
            if !seen.insert(key.to_string()) && !is_override {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(&mut p, key, value, base).map_err(err)?;
        }
        cfg.sim.events = events;
        cfg.finish(p).map_err(|message| Error::Config {
            path: origin.to_string(),
            line: 0,
            message,
        })?;
        Ok(cfg)
    }

    fn set(&mut self, p: &mut Pending, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        let s = &mut self.sim;
        match key {
            "time_step" => s.time_step = number(v)?,
            "horizon" => s.horizon = number(v)?,
            "passes" => s.passes = number(v)?,
            "t0" => {
                self.t0 = if v == "auto" {
                    InitialTimes::Auto
                } else {
                    InitialTimes::Fixed(list(v)?)
                }
            }
            "t_min" => p.t_min = Some(number(v)?),
            "t_max" => p.t_max = Some(number(v)?),
            "e0" => p.e0 = Some(number(v)?),
            "pc" => p.pc = Some(number(v)?),
            "etr" => p.etr = Some(number(v)?),
            "initial_energy" => s.initial_energy = list(v)?,
            "phi_acc" => s.reward.phi_acc = number(v)?,
            "phi_en" => s.reward.phi_en = number(v)?,
            "alpha" => s.q.alpha = number(v)?,
            "gamma" => s.q.gamma = number(v)?,
            "epsilon" => s.q.epsilon_explore = number(v)?,
            "eps_target" => s.q.eps_target = number(v)?,
            "hidden" => s.hidden = list(v)?,
            "step_size" => s.train.step_size = number(v)?,
            "batch_size" => s.train.batch_size = number(v)?,
            "epochs" => s.train.epochs_per_update = number(v)?,
            "train_every" => s.train_every = number(v)?,
            "train_window" => s.train_window = number(v)?,
            "neighbors" => s.neighbors = number(v)?,
            "learning" => s.learning = v.split(',').map(|b| boolean(b.trim())).collect::<std::result::Result<_, _>>()?,
            "sigma" => p.sigma = Some(number(v)?),
            "theta_time" => p.theta_time = Some(number(v)?),
            "theta_space" => p.theta_space = Some(number(v)?),
            "covariance" => {
                p.extracted = Some(match v {
                    "fixed" => false,
                    "extracted" => true,
                    _ => return Err(format!("covariance must be `fixed` or `extracted`, got `{v}`")),
                })
            }
            "extract_window" => p.extract_window = Some(number(v)?),
            "refit_every" => p.refit_every = Some(number(v)?),
            "max_lag" => p.max_lag = Some(number(v)?),
            "max_episodes" => s.max_episodes = if v == "none" { None } else { Some(number(v)?) },
            "report_window" => s.report_window_steps = number(v)?,
            "seed" => s.seed = number(v)?,
            "quantity" => p.quantity = Some(Quantity::from_name(v).ok_or_else(|| format!("unknown quantity `{v}`"))?),
            "sensors" => p.sensors = Some(number(v)?),
            "layout" => {
                p.layout = Some(match v {
                    "grid" => Layout::Grid,
                    "line" => Layout::Line,
                    _ => return Err(format!("layout must be `grid` or `line`, got `{v}`")),
                })
            }
            "spacing" => p.spacing = Some(number(v)?),
            "positions" => p.positions = Some(positions(v)?),
            "field_seed" => p.field_seed = Some(number(v)?),
            "readings" => p.readings = Some(resolve(v, base)),
            "locations" => p.locations = Some(resolve(v, base)),
            "motes" => p.motes = Some(list(v)?),
            "start" => p.start = Some(number(v)?),
            "baseline" => self.baseline = Some(list(v)?),
            "baseline_accuracy" => self.baseline_accuracy = number(v)?,
            "output" => self.output = PathBuf::from(v),
            "checkpoint_every" => self.checkpoint_every = number(v)?,
            "sweep" => self.sweep = list(v)?,
            _ => unreachable!("key table and setter disagree on `{key}`"),
        }
        Ok(())
    }

    fn finish(&mut self, p: Pending) -> std::result::Result<(), String> {
        let s = &mut self.sim;
        let b = s.bounds;
        s.bounds = UpdateBounds::new(p.t_min.unwrap_or(b.min), p.t_max.unwrap_or(b.max)).map_err(|e| e.to_string())?;
        let e = s.energy;
        s.energy = EnergyParams::new(p.e0.unwrap_or(e.e0), p.pc.unwrap_or(e.p_c), p.etr.unwrap_or(e.e_tr))
            .map_err(|e| e.to_string())?;
        let m = s.model;
        s.model = CovarianceModel::new(
            p.sigma.unwrap_or(m.sigma),
            p.theta_time.unwrap_or(m.theta_time),
            p.theta_space.unwrap_or(m.theta_space),
        )
        .map_err(|e| e.to_string())?;
        if p.extracted.unwrap_or(false) {
            let CovarianceMode::Extracted { window_steps, refit_every, max_lag } = CovarianceMode::extracted_default()
            else {
                unreachable!()
            };
            s.covariance = CovarianceMode::Extracted {
                window_steps: p.extract_window.unwrap_or(window_steps),
                refit_every: p.refit_every.unwrap_or(refit_every),
                max_lag: p.max_lag.unwrap_or(max_lag),
            };
        }
        if let InitialTimes::Fixed(t0) = &self.t0 {
            s.initial_update_times = t0.clone();
        }
        if self.sweep.iter().any(|&n| n == 0) {
            return Err("sweep sensor counts must be >= 1".into());
        }
        if !(self.baseline_accuracy > 0.0) {
            return Err("baseline_accuracy must be positive".into());
        }

        let quantity = p.quantity.unwrap_or(Quantity::Synthetic);
        self.source = match quantity {
            Quantity::Synthetic => {
                if p.readings.is_some() || p.locations.is_some() {
                    return Err("readings and locations need quantity = temperature or humidity".into());
                }
                FieldSource::Synthetic {
                    sensors: p.positions.as_ref().map_or(p.sensors.unwrap_or(8), Vec::len),
                    layout: p.layout.unwrap_or(Layout::Grid),
                    spacing: p.spacing.unwrap_or(10.0),
                    positions: p.positions,
                    field_seed: p.field_seed.unwrap_or(1),
                }
            }
            q => FieldSource::Dataset {
                quantity: q,
                readings: p.readings.ok_or_else(|| format!("quantity = {} needs `readings`", q.name()))?,
                locations: p.locations.ok_or_else(|| format!("quantity = {} needs `locations`", q.name()))?,
                motes: p.motes,
                start: p.start,
            },
        };
        Ok(())
    }

    /// A configuration file listing every key at its default.
    pub fn defaults_text() -> String {
        let mut out = String::from("# sensorlife experiment configuration; every key at its default\n");
        for (key, default, meaning) in KEYS {
            out.push_str(&format!("# {meaning}\n"));
            if default.is_empty() || *default == "t0" {
                out.push_str(&format!("# {key} =\n"));
            } else {
                out.push_str(&format!("{key} = {default}\n"));
            }
        }
        out
    }
}

/// Synthetic placement of `n` sensors: a near-square grid or a line.
pub fn layout_positions(n: usize, layout: Layout, spacing: f64) -> Vec<Location> {
    let cols = match layout {
        Layout::Line => n.max(1),
        Layout::Grid => (n as f64).sqrt().ceil().max(1.0) as usize,
    };
    (0..n)
        .map(|i| [(i % cols) as f64 * spacing, (i / cols) as f64 * spacing])
        .collect()
}
