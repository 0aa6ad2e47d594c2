//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line (bypassing output capture) and then
//! asserts on the same outcome.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensorlife::agent::{accuracy_reward, energy_reward, total_reward, RewardWeights, UpdateBounds};
use sensorlife::cli::{self, ExperimentConfig};
use sensorlife::data::{baseline_interval, generate_synthetic_field, GriddedSeries, SensorLocation};
use sensorlife::energy::{expected_lifetime, EnergyParams};
use sensorlife::estimator::{
    assemble_covariances, estimation_error, extract_parameters, solve_weights, CovarianceModel, ExtractionConfig,
    FittedModel, Observation,
};
use sensorlife::network::{gradient_check, Activation, NetworkLayout, QNetwork, TrainConfig};
use sensorlife::sim::{
    lifetime_report, oracle_optimal_update_time, run_experiment, Change, EpisodeKind, EpisodeRecord, OracleQuery,
    ScheduledChange, SimConfig, Simulation,
};
use sensorlife::JULIAN_YEAR_S;

fn report(id: u32, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "criterion {id}: {} {detail} [{:.1?}]\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed()
    );
    // written directly so the line survives the test harness's capture
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn sensors(points: &[[f64; 2]]) -> Vec<SensorLocation> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| SensorLocation {
            mote_id: i + 1,
            x: p[0],
            y: p[1],
        })
        .collect()
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

/// Desk-scale training used by the learning criteria: a 64-unit network
/// retrained after every learning episode on the last 1000 transitions.
fn desk_training(cfg: &mut SimConfig) {
    cfg.hidden = vec![64];
    cfg.train = TrainConfig {
        step_size: 0.1,
        batch_size: 32,
        epochs_per_update: 20,
    };
    cfg.train_every = 1;
    cfg.train_window = 1000;
}

#[test]
fn criterion_1_baseline_lifetime() {
    let t = Instant::now();
    let p = EnergyParams::default();
    let y809 = expected_lifetime(&p, 809.0).unwrap() / JULIAN_YEAR_S;
    let y606 = expected_lifetime(&p, 606.0).unwrap() / JULIAN_YEAR_S;
    let pass = within(y809, 1.95, 0.01) && within(y606, 1.56, 0.015);
    report(
        1,
        pass,
        &format!("809 s -> {y809:.4} yr (1.95 +-1%), 606 s -> {y606:.4} yr (1.56 +-1.5%)"),
        t,
    );
}

/// Gaussian elimination with partial pivoting, independent of the library's
/// Cholesky path.
fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| row.iter().copied().chain([bi]).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    x
}

#[test]
fn criterion_2_lmmse_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_residual, mut worst_oracle, mut worst_fresh) = (0.0f64, 0.0f64, 0.0f64);
    let mut bounded = true;
    for _ in 0..1000 {
        let model = CovarianceModel::new(
            rng.random_range(0.5..3.0),
            rng.random_range(1e-4..1e-2),
            rng.random_range(0.01..0.2),
        )
        .unwrap();
        let var = model.variance();
        let n = rng.random_range(1..=8usize);
        let obs: Vec<Observation> = (0..n)
            .map(|i| Observation {
                sensor_id: i,
                location: [rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)],
                time: rng.random_range(0.0..1000.0),
                value: 0.0,
            })
            .collect();
        let target = [rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)];
        let t_target = 1000.0 + rng.random_range(0.0..500.0);

        let pair = assemble_covariances(&model, &obs, target, t_target).unwrap();
        let a = solve_weights(&pair).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| pair.c_yy[(i, j)]).collect()).collect();
        let c_yz: Vec<f64> = pair.c_yz.iter().copied().collect();
        let residual = (0..n)
            .map(|i| ((0..n).map(|j| rows[i][j] * a[j]).sum::<f64>() - c_yz[i]).abs())
            .fold(0.0, f64::max);
        worst_residual = worst_residual.max(residual / var);

        let exact = gauss_solve(&rows, &c_yz);
        let mse = estimation_error(&model, &pair, &a).unwrap();
        let mse_exact = var - c_yz.iter().zip(&exact).map(|(c, x)| c * x).sum::<f64>();
        worst_oracle = worst_oracle.max((mse - mse_exact).abs() / var);
        bounded &= (0.0..=var).contains(&mse);

        // a fresh report at the target location
        let mut with_fresh = obs.clone();
        with_fresh.push(Observation {
            sensor_id: n,
            location: target,
            time: t_target,
            value: 0.0,
        });
        let pair = assemble_covariances(&model, &with_fresh, target, t_target).unwrap();
        let a = solve_weights(&pair).unwrap();
        worst_fresh = worst_fresh.max(estimation_error(&model, &pair, &a).unwrap() / var);
    }
    let pass = worst_residual < 1e-8 && worst_oracle < 1e-8 && bounded && worst_fresh < 1e-6;
    report(
        2,
        pass,
        &format!(
            "1000 geometries: max residual {worst_residual:.2e} s2, max |mse - oracle| {worst_oracle:.2e} s2, \
             mse in [0, s2]: {bounded}, max fresh mse {worst_fresh:.2e} s2"
        ),
        t,
    );
}

#[test]
fn criterion_3_reward_fidelity() {
    let t = Instant::now();
    let tar = 0.0625;
    // (ε̄, Δ, hand-evaluated value)
    let accuracy = [
        (0.03, 10, 1.0 + 8e-6 * 10.0 + 0.1),
        (0.0625, 0, 0.75),
        (0.0125, -1, -1.05),
        (0.1625, 1, -1.1),
        (0.1, 0, -0.75),
        (0.178125, -10, 1.11),
    ];
    let energy = [(50.0, 100.0, 3, 1.0), (50.0, 100.0, 0, 0.5), (50.0, 100.0, -1, -1.0)];
    let mut worst = 0.0f64;
    for (e, d, want) in accuracy {
        worst = worst.max((accuracy_reward(e, tar, d) - want).abs());
    }
    for (e, avg, d, want) in energy {
        worst = worst.max((energy_reward(e, avg, d).unwrap() - want).abs());
    }
    let w = RewardWeights::default();
    worst = worst.max((total_reward(0.75, 0.5, &w) - 0.65).abs());
    report(
        3,
        worst < 1e-12,
        &format!("6 accuracy + 3 energy branches + weighted total, max error {worst:.1e}"),
        t,
    );
}

/// Smallest |pre-activation| over the rectified units for input `x`.
fn kink_margin(net: &QNetwork, x: &[f64]) -> f64 {
    let mut input = x.to_vec();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let z: Vec<f64> = (0..layer.outputs)
            .map(|o| {
                layer.bias[o]
                    + (0..layer.inputs)
                        .map(|i| layer.weights[o * layer.inputs + i] * input[i])
                        .sum::<f64>()
            })
            .collect();
        if layer.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            input = z.iter().map(|v| v.max(0.0)).collect();
        } else {
            input = z;
        }
    }
    margin
}

#[test]
fn criterion_4_gradient_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut redrawn, mut worst) = (0, 0, 0.0f64);
    while checked < 50 {
        let inputs = rng.random_range(1..=6usize);
        let depth = rng.random_range(1..=3usize);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8usize)).collect();
        let mut net = QNetwork::init(&NetworkLayout::new(inputs, hidden, 5).unwrap(), &mut rng).unwrap();
        for layer in net.layers_mut() {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        // a finite difference straddling a rectifier kink measures nothing
        if kink_margin(&net, &x) < 1e-3 {
            redrawn += 1;
            continue;
        }
        worst = worst.max(gradient_check(&net, &x, &target).unwrap());
        checked += 1;
    }
    report(
        4,
        worst < 1e-4,
        &format!("50 random networks ({redrawn} redrawn near a kink), max relative error {worst:.2e}"),
        t,
    );
}

#[test]
fn criterion_5_parameter_recovery() {
    let t = Instant::now();
    let truth = CovarianceModel::new(1.0, 0.001, 0.05).unwrap();
    let locs = sensors(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]]);
    let steps = 50_000;
    let field = generate_synthetic_field(&truth, &locs, steps, 10.0, 5).unwrap();
    let mut window = Vec::with_capacity(steps * 4);
    for k in 0..steps {
        for (i, s) in locs.iter().enumerate() {
            window.push(Observation {
                sensor_id: s.mote_id,
                location: s.location(),
                time: k as f64 * 10.0,
                value: field.values[i][k],
            });
        }
    }
    let start = FittedModel::zero_mean(CovarianceModel::new(3.0, 0.1, 0.5).unwrap());
    let fit = extract_parameters(&window, steps as f64 * 10.0, &ExtractionConfig::default(), &start).model;
    let pass = within(fit.theta_time, truth.theta_time, 0.2)
        && within(fit.theta_space, truth.theta_space, 0.2)
        && within(fit.sigma, truth.sigma, 0.1);
    report(
        5,
        pass,
        &format!(
            "recovered theta_time {:.3e} (1e-3 +-20%), theta_space {:.4} (0.05 +-20%), sigma {:.4} (1 +-10%)",
            fit.theta_time, fit.theta_space, fit.sigma
        ),
        t,
    );
}

fn median(values: &[u32]) -> u32 {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[v.len() / 2]
}

fn learned_times(records: &[EpisodeRecord]) -> Vec<u32> {
    records
        .iter()
        .filter(|r| r.kind == EpisodeKind::Learning)
        .map(|r| r.next_update_time)
        .collect()
}

#[test]
fn criterion_6_optimal_tracking() {
    const CHANGE_AT: usize = 300;
    const SEEDS: u64 = 9;
    let t = Instant::now();
    let model = CovarianceModel::new(1.0, 1e-3, 0.05).unwrap();
    let changed = CovarianceModel {
        theta_time: 5e-4,
        ..model
    };
    let points = [[0.0, 0.0], [10.0, 0.0]];
    let field = generate_synthetic_field(&model, &sensors(&points), 400_000, 10.0, 1).unwrap();
    let bounds = UpdateBounds::new(1, 100).unwrap();
    let query = OracleQuery {
        model,
        positions: points.to_vec(),
        sensor: 0,
        update_times: vec![0, 61],
        eps_target: 0.0625,
        bounds,
        time_step: 10.0,
        neighbors: 8,
    };
    let before = oracle_optimal_update_time(&query).unwrap().update_time;
    let after = oracle_optimal_update_time(&OracleQuery {
        model: changed,
        ..query.clone()
    })
    .unwrap()
    .update_time;

    let mut cfg = SimConfig {
        horizon: 400_000,
        passes: 1,
        initial_update_times: vec![61],
        learning: vec![true, false],
        model,
        bounds,
        events: vec![ScheduledChange {
            after_episodes: CHANGE_AT,
            change: Change::ThetaTime(changed.theta_time),
        }],
        max_episodes: Some(CHANGE_AT + 100),
        ..Default::default()
    };
    desk_training(&mut cfg);

    let near = |t: u32, target: u32| (t as i64 - target as i64).abs() <= 3;
    let mut passed = 0;
    let mut outcomes = Vec::new();
    for seed in 1..=SEEDS {
        let cfg = SimConfig { seed, ..cfg.clone() };
        let out = run_experiment(&cfg, &field).unwrap();
        let times = learned_times(&out.records);
        // learned T: median of the last 50 episodes before the change
        let learned = median(&times[CHANGE_AT - 50..CHANGE_AT]);
        // re-converged: some 25-episode median after the change is within tolerance
        let reconverged = (CHANGE_AT + 25..=times.len()).find(|&e| near(median(&times[e - 25..e]), after));
        let ok = near(learned, before) && reconverged.is_some();
        passed += ok as usize;
        outcomes.push(format!(
            "s{seed}:{learned}/{}{}",
            reconverged.map_or("-".to_string(), |e| (e - CHANGE_AT).to_string()),
            if ok { "" } else { "x" }
        ));
    }
    let pass = passed * 2 > SEEDS as usize;
    report(
        6,
        pass,
        &format!(
            "oracle {before} -> {after} after theta_time halves; {passed}/{SEEDS} seeds within +-3 and \
             re-converged within 100 episodes (majority required) [learned T/episodes to re-converge: {}]",
            outcomes.join(" ")
        ),
        t,
    );
}

#[test]
fn criterion_7_energy_balancing() {
    let t = Instant::now();
    let model = CovarianceModel::new(1.0, 2e-4, 0.005).unwrap();
    let field = generate_synthetic_field(&model, &sensors(&[[0.0, 0.0], [2.0, 0.0]]), 400_000, 10.0, 1).unwrap();
    let mut cfg = SimConfig {
        horizon: 400_000,
        passes: 1,
        initial_update_times: vec![30],
        initial_energy: vec![0.95, 0.5],
        model,
        max_episodes: Some(1000),
        ..Default::default()
    };
    desk_training(&mut cfg);
    let eps = cfg.q.eps_target;
    let mut all = true;
    let mut details = Vec::new();
    for seed in 1..=3 {
        let out = run_experiment(&SimConfig { seed, ..cfg.clone() }, &field).unwrap();
        let learning: Vec<&EpisodeRecord> = out.records.iter().filter(|r| r.kind == EpisodeKind::Learning).collect();
        let tail = &learning[learning.len() * 3 / 4..];
        let stats: Vec<(f64, f64)> = (0..2)
            .map(|s| {
                let mine: Vec<_> = tail.iter().filter(|r| r.sensor_index == s).collect();
                let n = mine.len() as f64;
                (
                    mine.iter().map(|r| r.posterior.update_time as f64).sum::<f64>() / n,
                    mine.iter().map(|r| r.posterior.avg_mse).sum::<f64>() / n / eps,
                )
            })
            .collect();
        let ok = stats[1].0 > stats[0].0 && stats.iter().all(|s| (0.5..=1.5).contains(&s.1));
        all &= ok;
        details.push(format!(
            "seed {seed}: T {:.1} (95%) vs {:.1} (50%), eps/target {:.2} / {:.2}",
            stats[0].0, stats[1].0, stats[0].1, stats[1].1
        ));
    }
    report(7, all, &details.join("; "), t);
}

fn gain_field() -> GriddedSeries {
    let model = CovarianceModel::new(1.0, 2e-4, 0.005).unwrap();
    let points: Vec<[f64; 2]> = (0..8).map(|i| [(i % 4) as f64 * 2.0, (i / 4) as f64 * 2.0]).collect();
    generate_synthetic_field(&model, &sensors(&points), 200_000, 10.0, 1).unwrap()
}

#[test]
fn criterion_8_lifetime_gain_trend() {
    let t = Instant::now();
    let full = gain_field();
    let t0 = (baseline_interval(&full, 0.25, 1000) / 10.0) as u32;
    let mut gains = Vec::new();
    for n in [2usize, 4, 8] {
        let field = full.select(&(0..n).collect::<Vec<_>>()).unwrap();
        let mut cfg = SimConfig {
            horizon: 200_000,
            passes: 1,
            initial_update_times: vec![t0],
            model: CovarianceModel::new(1.0, 2e-4, 0.005).unwrap(),
            max_episodes: Some(250 * n),
            seed: 1,
            ..Default::default()
        };
        desk_training(&mut cfg);
        let out = run_experiment(&cfg, &field).unwrap();
        let rep = lifetime_report(&out.records, &cfg.energy, &[t0], 10.0, 8640).unwrap();
        gains.push((n, rep.mean_gain));
    }
    let monotone = gains.windows(2).all(|w| w[1].1 >= w[0].1);
    let pass = monotone && gains[2].1 > 1.5;
    let listed: Vec<String> = gains.iter().map(|(n, g)| format!("eta({n}) = {g:.3}")).collect();
    report(
        8,
        pass,
        &format!("baseline T0 = {t0} steps; {}; non-decreasing: {monotone}", listed.join(", ")),
        t,
    );
}

fn dataset_paths() -> Option<(PathBuf, PathBuf)> {
    let root = PathBuf::from(std::env::var_os(cli::DATA_ENV)?);
    let readings = root.join("data.txt");
    let locations = root.join("mote_locs.txt");
    (readings.is_file() && locations.is_file()).then_some((readings, locations))
}

#[test]
fn criterion_8_dataset_lifetime() {
    let t = Instant::now();
    let Some((readings, locations)) = dataset_paths() else {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "criterion 8 (dataset): SKIP set {} to a directory holding data.txt and mote_locs.txt",
            cli::DATA_ENV
        );
        return;
    };
    // nine days of humidity from eight motes, desk-scale network
    let text = format!(
        "quantity = humidity\nreadings = {}\nlocations = {}\nmotes = 1,2,3,4,6,7,8,9\n\
         t0 = auto\nbaseline_accuracy = 0.25\neps_target = 0.0625\ncovariance = extracted\n\
         passes = 5\nhidden = 64\nstep_size = 0.1\nepochs = 20\ntrain_every = 1\ntrain_window = 1000\n",
        readings.display(),
        locations.display()
    );
    let cfg = ExperimentConfig::parse(&text, "dataset", Path::new("."), &[]).unwrap();
    let field = cli::load_field(&cfg).unwrap();
    let t0 = cli::resolve_initial_times(&cfg, &field);
    let mut sim_cfg = cfg.sim.clone();
    sim_cfg.initial_update_times = t0.clone();
    let out = Simulation::new(&sim_cfg, &field).unwrap().run().unwrap();
    let rep = lifetime_report(&out.records, &sim_cfg.energy, &t0, sim_cfg.time_step, 8640).unwrap();
    let years = rep.sensors.iter().map(|s| s.lifetime_s).sum::<f64>() / rep.sensors.len() as f64 / JULIAN_YEAR_S;
    let pass = within(rep.mean_gain, 2.56, 0.25) && within(years, 4.0, 0.25);
    report(
        8,
        pass,
        &format!(
            "(dataset) humidity, T0 = {} steps: eta {:.3} (2.56 +-25%), lifetime {years:.2} yr (4 +-25%)",
            t0[0], rep.mean_gain
        ),
        t,
    );
}

#[test]
fn criterion_9_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let text = "sensors = 3\nspacing = 5\nhorizon = 20000\npasses = 2\nt0 = 20\nhidden = 32\n\
                step_size = 0.05\nepochs = 5\ntrain_every = 2\nseed = 7\nevent = 200 eps_target 0.05\n";
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = ExperimentConfig::parse(text, "determinism", Path::new("."), &[]).unwrap();
        cfg.output = dir.path().join(run);
        cli::run(&cfg, 1, None).unwrap();
        files.push(std::fs::read(cfg.output.join("episodes.csv")).unwrap());
    }
    let rows = files[0].iter().filter(|&&b| b == b'\n').count() - 1;
    let pass = files[0] == files[1] && rows > 1000;
    report(
        9,
        pass,
        &format!("two runs, seed 7: episodes.csv byte-identical ({rows} rows, {} bytes)", files[0].len()),
        t,
    );
}
