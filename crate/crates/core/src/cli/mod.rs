//! Command-line front end: configuration files, experiment runs and the
//! helper subcommands.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid usage or
//! configuration, 3 the oracle found no feasible update time.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::data::{
    baseline_interval, generate_synthetic_field, grid_series, parse_locations, parse_readings, GriddedSeries,
    SensorLocation,
};
use crate::energy::{expected_lifetime, EnergyParams};
use crate::estimator::{extract_parameters, ExtractionConfig, FittedModel, Observation};
use crate::network::QNetwork;
use crate::sim::{oracle_optimal_update_time, CovarianceMode, ExperimentOutput, OracleQuery, SimConfig, Simulation};
use crate::{Error, Result, JULIAN_YEAR_S};

pub use config::{ExperimentConfig, FieldSource, InitialTimes, Layout, DATA_ENV, KEYS};
pub use output::{parse_summary, read_episodes, write_episodes, RunSummary, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

pub const CHECKPOINT_FILE: &str = "network.ckpt";

#[derive(Parser)]
#[command(name = "sensorlife", version, about = "Learned update scheduling for correlated battery-powered sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write episodes.csv, summary and sweep.csv.
    Run {
        config: PathBuf,
        /// Independent seeds run concurrently, starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Output directory, overriding `output`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Start from a saved network instead of a fresh one.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override a configuration key, e.g. `--set seed=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the longest update time meeting the accuracy target.
    Oracle {
        config: PathBuf,
        /// Mote id of the sensor to search for.
        #[arg(long)]
        sensor: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the expected lifetime for a fixed update interval.
    Lifetime {
        /// Initial battery energy, J.
        #[arg(long, default_value_t = 6696.0)]
        e0: f64,
        /// Continuous power draw, W.
        #[arg(long, default_value_t = 30e-6)]
        pc: f64,
        /// Energy per acquire-and-transmit, J.
        #[arg(long, default_value_t = 0.0637)]
        etr: f64,
        /// Update interval, s.
        #[arg(long, default_value_t = 809.0, allow_negative_numbers = true)]
        interval: f64,
    },
    /// Fit the covariance model to the configured data.
    ExtractParams {
        config: PathBuf,
        /// Trailing grid steps to fit on (default: `extract_window`).
        #[arg(long)]
        window: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the fixed interval keeping consecutive readings within an accuracy.
    BaselineInterval {
        config: PathBuf,
        /// Allowed mean absolute change between reports (default: `baseline_accuracy`).
        #[arg(long)]
        accuracy: Option<f64>,
        /// Longest interval scanned, grid steps (default: `t_max`).
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print a configuration file listing every key at its default.
    Defaults,
}

fn keys_help() -> String {
    let mut s = String::from("Configuration keys (key = default: meaning):\n");
    for (k, d, m) in KEYS {
        let d = if d.is_empty() { "unset" } else { d };
        s.push_str(&format!("  {k} = {d}: {m}\n"));
    }
    s
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let command = Cli::command()
        .mut_subcommand("run", |c| c.after_long_help(keys_help()))
        .after_long_help(keys_help());
    let cli = match command
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Contract(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn load(path: &Path, set: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::parse(&text, &path.display().to_string(), base, set)
}

fn dispatch(command: Command) -> Result<i32> {
    let mut out = std::io::stdout().lock();
    let io = |e| Error::io("<stdout>", e);
    match command {
        Command::Run {
            config,
            replicas,
            output,
            resume,
            set,
        } => {
            let mut cfg = load(&config, &set)?;
            if let Some(dir) = output {
                cfg.output = dir;
            }
            let resume = resume
                .map(|p| {
                    let f = File::open(&p).map_err(|e| Error::io(&p, e))?;
                    QNetwork::read_from(BufReader::new(f))
                })
                .transpose()?;
            let lines = run(&cfg, replicas, resume.as_ref())?;
            for l in lines {
                writeln!(out, "{l}").map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Oracle { config, sensor, set } => {
            let cfg = load(&config, &set)?;
            let r = oracle(&cfg, sensor)?;
            writeln!(out, "update_time={}", r.update_time).map_err(io)?;
            writeln!(out, "update_interval_s={}", r.update_time as f64 * cfg.sim.time_step).map_err(io)?;
            writeln!(out, "feasible={}", r.feasible).map_err(io)?;
            writeln!(out, "avg_mse={}", r.avg_mse).map_err(io)?;
            Ok(if r.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Lifetime { e0, pc, etr, interval } => {
            let params = EnergyParams::new(e0, pc, etr)?;
            let s = expected_lifetime(&params, interval)?;
            writeln!(out, "lifetime_s={s}").map_err(io)?;
            writeln!(out, "lifetime_years={}", s / JULIAN_YEAR_S).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::ExtractParams { config, window, set } => {
            let cfg = load(&config, &set)?;
            let field = load_field(&cfg)?;
            let fitted = extract(&cfg, &field, window)?;
            writeln!(out, "sigma={}", fitted.model.sigma).map_err(io)?;
            writeln!(out, "theta_time={}", fitted.model.theta_time).map_err(io)?;
            writeln!(out, "theta_space={}", fitted.model.theta_space).map_err(io)?;
            writeln!(out, "mean={}", fitted.means.pooled).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::BaselineInterval {
            config,
            accuracy,
            max_steps,
            set,
        } => {
            let cfg = load(&config, &set)?;
            let field = load_field(&cfg)?;
            let acc = accuracy.unwrap_or(cfg.baseline_accuracy);
            if !(acc > 0.0) {
                return Err(Error::Contract(format!("accuracy must be positive, got {acc}")));
            }
            let max = max_steps.unwrap_or(cfg.sim.bounds.max as usize);
            let s = baseline_interval(&field, acc, max);
            writeln!(out, "interval_s={s}").map_err(io)?;
            writeln!(out, "interval_steps={}", (s / field.time_step).round()).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Defaults => {
            write!(out, "{}", ExperimentConfig::defaults_text()).map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

/// Sensor placement of a synthetic source, or the location file of a
/// dataset source, restricted to the configured motes.
pub fn source_locations(cfg: &ExperimentConfig) -> Result<Vec<SensorLocation>> {
    match &cfg.source {
        FieldSource::Synthetic {
            sensors,
            layout,
            spacing,
            positions,
            ..
        } => {
            let pos = positions
                .clone()
                .unwrap_or_else(|| config::layout_positions(*sensors, *layout, *spacing));
            Ok(pos
                .iter()
                .enumerate()
                .map(|(i, p)| SensorLocation {
                    mote_id: i + 1,
                    x: p[0],
                    y: p[1],
                })
                .collect())
        }
        FieldSource::Dataset { locations, motes, .. } => {
            let f = File::open(locations).map_err(|e| Error::io(locations, e))?;
            let mut locs = parse_locations(BufReader::new(f))?;
            if let Some(m) = motes {
                locs.retain(|l| m.contains(&l.mote_id));
            }
            Ok(locs)
        }
    }
}

/// Builds the ground truth the configuration describes.
pub fn load_field(cfg: &ExperimentConfig) -> Result<GriddedSeries> {
    let locs = source_locations(cfg)?;
    match &cfg.source {
        FieldSource::Synthetic { field_seed, .. } => {
            generate_synthetic_field(&cfg.sim.model, &locs, cfg.sim.horizon, cfg.sim.time_step, *field_seed)
        }
        FieldSource::Dataset {
            quantity,
            readings,
            start,
            ..
        } => {
            let f = File::open(readings).map_err(|e| Error::io(readings, e))?;
            let parsed = parse_readings(BufReader::new(f))?;
            if parsed.skipped > 0 {
                log::warn!("{}: skipped {} malformed rows", readings.display(), parsed.skipped);
            }
            grid_series(&parsed.readings, &locs, cfg.sim.time_step, cfg.sim.horizon, *quantity, *start)
        }
    }
}

/// Initial update times, deriving them from the data for `t0 = auto`.
pub fn resolve_initial_times(cfg: &ExperimentConfig, field: &GriddedSeries) -> Vec<u32> {
    match &cfg.t0 {
        InitialTimes::Fixed(t) => t.clone(),
        InitialTimes::Auto => {
            let b = cfg.sim.bounds;
            let s = baseline_interval(field, cfg.baseline_accuracy, b.max as usize);
            let steps = (s / field.time_step).round() as i64;
            if steps < b.min as i64 {
                log::warn!("no interval keeps readings within {}; using t_min", cfg.baseline_accuracy);
            }
            vec![b.clamp(steps)]
        }
    }
}

fn extract(cfg: &ExperimentConfig, field: &GriddedSeries, window: Option<usize>) -> Result<FittedModel> {
    let (default_window, max_lag) = match cfg.sim.covariance {
        CovarianceMode::Extracted { window_steps, max_lag, .. } => (window_steps, max_lag),
        CovarianceMode::Fixed => (8640, 20),
    };
    let horizon = field.horizon();
    if horizon == 0 {
        return Err(Error::Data("the field is empty".into()));
    }
    let window = window.unwrap_or(default_window).clamp(1, horizon);
    let ts = field.time_step;
    let mut obs = Vec::with_capacity(window * field.sensors.len());
    for step in horizon - window..horizon {
        for (i, s) in field.sensors.iter().enumerate() {
            obs.push(Observation {
                sensor_id: s.mote_id,
                location: s.location(),
                time: step as f64 * ts,
                value: field.values[i][step],
            });
        }
    }
    let ecfg = ExtractionConfig {
        time_step: ts,
        max_lag,
        min_samples: 10,
    };
    Ok(extract_parameters(
        &obs,
        window as f64 * ts,
        &ecfg,
        &FittedModel::zero_mean(cfg.sim.model),
    ))
}

/// Oracle for the sensor with mote id `sensor`, with every peer at its
/// initial update time.
pub fn oracle(cfg: &ExperimentConfig, sensor: usize) -> Result<crate::sim::OracleResult> {
    let locs = source_locations(cfg)?;
    let index = locs
        .iter()
        .position(|l| l.mote_id == sensor)
        .ok_or_else(|| Error::Contract(format!("no sensor with id {sensor}")))?;
    let t0 = match &cfg.t0 {
        InitialTimes::Fixed(t) => t.clone(),
        InitialTimes::Auto => resolve_initial_times(cfg, &load_field(cfg)?),
    };
    let update_times = (0..locs.len())
        .map(|i| match t0[..] {
            [one] => Ok(one),
            _ => t0
                .get(i)
                .copied()
                .ok_or_else(|| Error::Contract(format!("t0 has {} entries for {} sensors", t0.len(), locs.len()))),
        })
        .collect::<Result<Vec<u32>>>()?;
    oracle_optimal_update_time(&OracleQuery {
        model: cfg.sim.model,
        positions: locs.iter().map(SensorLocation::location).collect(),
        sensor: index,
        update_times,
        eps_target: cfg.sim.q.eps_target,
        bounds: cfg.sim.bounds,
        time_step: cfg.sim.time_step,
        neighbors: cfg.sim.neighbors,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(f);
    write(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    write_file(path, |w| {
        for l in lines {
            writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

fn save_network(path: &Path, net: &QNetwork) -> Result<()> {
    write_file(path, |w| net.write_to(w).map_err(|e| Error::io(path, e)))
}

/// Keeps the first `n` entries of a per-sensor list; a single shared entry
/// stays as is.
fn truncate<T: Clone>(values: &[T], n: usize) -> Vec<T> {
    if values.len() == 1 {
        values.to_vec()
    } else {
        values.iter().take(n).cloned().collect()
    }
}

/// One simulation with optional periodic network checkpoints.
fn simulate(
    sim_cfg: &SimConfig,
    field: &GriddedSeries,
    checkpoint: Option<(usize, &Path)>,
    resume: Option<&QNetwork>,
) -> Result<ExperimentOutput> {
    let mut sim = Simulation::new(sim_cfg, field)?;
    if let Some(net) = resume {
        sim.set_network(net.clone())?;
    }
    if let Some((every, path)) = checkpoint {
        loop {
            let target = sim.learning_episodes() + every;
            sim.run_until(target)?;
            if sim.learning_episodes() < target {
                break;
            }
            save_network(path, sim.network())?;
        }
    }
    let out = sim.run()?;
    if let Some((_, path)) = checkpoint {
        save_network(path, &out.network)?;
    }
    Ok(out)
}

fn baseline_for(cfg: &ExperimentConfig, t0: &[u32], n: usize) -> Vec<u32> {
    truncate(cfg.baseline.as_deref().unwrap_or(t0), n)
}

/// Runs one configuration into `dir` and returns its summary lines.
fn run_single(
    cfg: &ExperimentConfig,
    sim_cfg: &SimConfig,
    field: &GriddedSeries,
    dir: &Path,
    resume: Option<&QNetwork>,
) -> Result<(RunSummary, Vec<String>)> {
    create_dir(dir)?;
    let n = field.sensors.len();
    let ckpt = dir.join(CHECKPOINT_FILE);
    let checkpoint = (cfg.checkpoint_every > 0).then_some((cfg.checkpoint_every, ckpt.as_path()));
    let started = std::time::Instant::now();
    let out = simulate(sim_cfg, field, checkpoint, resume)?;
    log::info!(
        "{}: {} sensors, {} learning episodes in {:.1?}",
        dir.display(),
        n,
        out.learning_episodes,
        started.elapsed()
    );
    write_file(&dir.join("episodes.csv"), |w| write_episodes(&out.records, w))?;
    let baseline = baseline_for(cfg, &sim_cfg.initial_update_times, n);
    let summary = RunSummary::from_records(
        &out.records,
        sim_cfg.seed,
        &sim_cfg.energy,
        &baseline,
        sim_cfg.time_step,
        sim_cfg.report_window_steps as u64,
    )?;
    let mut lines = summary.to_lines();
    lines.push(format!("steps_run={}", out.steps_run));
    lines.push(format!("initial_update_times={}", join(&sim_cfg.initial_update_times)));
    lines.push(format!("baseline_update_times={}", join(&baseline)));
    lines.push(format!("final.sigma={}", out.final_model.sigma));
    lines.push(format!("final.theta_time={}", out.final_model.theta_time));
    lines.push(format!("final.theta_space={}", out.final_model.theta_space));
    lines.push(format!("final.eps_target={}", out.final_eps_target));
    write_lines(&dir.join("summary"), &lines)?;
    Ok((summary, lines))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// One replica: a plain run, or one run per swept sensor count.
fn run_replica(
    cfg: &ExperimentConfig,
    field: &GriddedSeries,
    t0: &[u32],
    seed: u64,
    dir: &Path,
    resume: Option<&QNetwork>,
) -> Result<Vec<String>> {
    let mut sim_cfg = cfg.sim.clone();
    sim_cfg.seed = seed;
    sim_cfg.initial_update_times = t0.to_vec();
    if cfg.sweep.is_empty() {
        return Ok(run_single(cfg, &sim_cfg, field, dir, resume)?.1);
    }
    create_dir(dir)?;
    let mut rows = Vec::new();
    let mut lines = vec![format!("seed={seed}")];
    for &n in &cfg.sweep {
        if n > field.sensors.len() {
            return Err(Error::Contract(format!(
                "sweep asks for {n} sensors, the field has {}",
                field.sensors.len()
            )));
        }
        let sub = field.select(&(0..n).collect::<Vec<_>>())?;
        let mut c = sim_cfg.clone();
        c.initial_update_times = truncate(&sim_cfg.initial_update_times, n);
        c.initial_energy = truncate(&sim_cfg.initial_energy, n);
        c.learning = truncate(&sim_cfg.learning, n);
        let (summary, _) = run_single(cfg, &c, &sub, &dir.join(format!("n{n}")), None)?;
        if let Some(row) = SweepRow::new(&summary, n) {
            lines.push(format!("sweep.{n}.mean_gain={}", row.mean_gain));
            lines.push(format!("sweep.{n}.min_gain={}", row.min_gain));
            rows.push(row);
        }
    }
    write_file(&dir.join("sweep.csv"), |w| output::write_sweep(&rows, w))?;
    write_lines(&dir.join("summary"), &lines)?;
    Ok(lines)
}

/// Runs `replicas` seeds concurrently and returns the merged summary lines,
/// which are also written to `<output>/summary`.
pub fn run(cfg: &ExperimentConfig, replicas: usize, resume: Option<&QNetwork>) -> Result<Vec<String>> {
    if replicas == 0 {
        return Err(Error::Contract("replicas must be >= 1".into()));
    }
    let field = load_field(cfg)?;
    let t0 = resolve_initial_times(cfg, &field);
    if replicas == 1 {
        return run_replica(cfg, &field, &t0, cfg.sim.seed, &cfg.output, resume);
    }
    create_dir(&cfg.output)?;
    let results: Vec<Result<Vec<String>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..replicas)
            .map(|r| {
                let (field, t0) = (&field, &t0);
                let seed = cfg.sim.seed + r as u64;
                let dir = cfg.output.join(format!("replica{r}"));
                scope.spawn(move || run_replica(cfg, field, t0, seed, &dir, resume))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("replica thread panicked".into()))))
            .collect()
    });
    let mut merged = vec![format!("replicas={replicas}")];
    let mut gains = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let lines = res?;
        for l in &lines {
            if let Some(g) = l.strip_prefix("mean_gain=") {
                gains.push(g.parse::<f64>().unwrap_or(f64::NAN));
            }
            merged.push(format!("replica.{r}.{l}"));
        }
    }
    if !gains.is_empty() {
        merged.push(format!("mean_gain={}", gains.iter().sum::<f64>() / gains.len() as f64));
    }
    write_lines(&cfg.output.join("summary"), &merged)?;
    Ok(merged)
}
