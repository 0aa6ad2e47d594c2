//! End-to-end checks of the `sensorlife` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sensorlife::cli::{parse_summary, read_episodes, RunSummary, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};
use sensorlife::energy::EnergyParams;

fn sensorlife(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensorlife"))
        .args(args)
        .current_dir(dir)
        .env_remove(sensorlife::cli::DATA_ENV)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value<'a>(pairs: &'a [(String, String)], key: &str) -> &'a str {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .unwrap_or_else(|| panic!("missing `{key}`"))
}

const SMALL: &str = "sensors = 2\nspacing = 10\nhorizon = 6000\npasses = 1\nt0 = 20\n\
                     hidden = 16\nepochs = 2\ntrain_every = 4\nseed = 3\n";

#[test]
fn run_writes_outputs_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.conf"), SMALL).unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = sensorlife(&["run", "small.conf", "--output", name], dir.path());
        assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = fs::read_to_string(dir.path().join(name).join("summary")).unwrap();
        assert_eq!(summary.trim_end(), stdout(&out).trim_end());
        csvs.push(fs::read(dir.path().join(name).join("episodes.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);

    // the written log reproduces the summary it was reported with
    let records = read_episodes(csvs[0].as_slice()).unwrap();
    assert!(!records.is_empty());
    let pairs = parse_summary(&fs::read_to_string(dir.path().join("a/summary")).unwrap());
    let rebuilt = RunSummary::from_records(&records, 3, &EnergyParams::default(), &[20], 10.0, 8640).unwrap();
    assert_eq!(rebuilt.to_lines(), pairs[..rebuilt.to_lines().len()].iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>());
    assert_eq!(value(&pairs, "records"), records.len().to_string());
}

#[test]
fn zero_horizon_gives_header_only_log() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("h0.conf"), "sensors = 3\nhorizon = 0\n").unwrap();
    let out = sensorlife(&["run", "h0.conf", "--output", "o"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let csv = fs::read_to_string(dir.path().join("o/episodes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("episode,pass,step,"));
    let pairs = parse_summary(&stdout(&out));
    assert_eq!(value(&pairs, "records"), "0");
    assert_eq!(value(&pairs, "sensors"), "0");
}

#[test]
fn sweep_and_replicas_lay_out_directories() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.conf"), format!("{SMALL}sweep = 1,2\n")).unwrap();
    let out = sensorlife(&["run", "s.conf", "--output", "o", "--replicas", "2"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    for r in 0..2 {
        let base = dir.path().join(format!("o/replica{r}"));
        assert!(base.join("n1/episodes.csv").is_file());
        assert!(base.join("n2/summary").is_file());
        let sweep = fs::read_to_string(base.join("sweep.csv")).unwrap();
        assert_eq!(sweep.lines().count(), 3, "{sweep}");
    }
    let pairs = parse_summary(&stdout(&out));
    assert_eq!(value(&pairs, "replicas"), "2");
    assert_eq!(value(&pairs, "replica.1.seed"), "4");
}

#[test]
fn set_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.conf"), SMALL).unwrap();
    let out = sensorlife(&["run", "small.conf", "--output", "o", "--set", "horizon=0", "--set", "seed=11"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let pairs = parse_summary(&stdout(&out));
    assert_eq!(value(&pairs, "seed"), "11");
    assert_eq!(value(&pairs, "steps_run"), "0");
}

#[test]
fn oracle_reports_feasibility_in_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let conf = "positions = 0 0, 10 0\nt0 = 61\n";
    fs::write(dir.path().join("o.conf"), conf).unwrap();
    let out = sensorlife(&["oracle", "o.conf", "--sensor", "1"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let pairs = parse_summary(&stdout(&out));
    assert_eq!(value(&pairs, "update_time"), "7");
    assert_eq!(value(&pairs, "feasible"), "true");

    // no update time of at least two steps meets a near-zero target
    let out = sensorlife(
        &["oracle", "o.conf", "--sensor", "1", "--set", "t_min=2", "--set", "eps_target=1e-9"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(EXIT_INFEASIBLE));
    assert_eq!(value(&parse_summary(&stdout(&out)), "feasible"), "false");
}

#[test]
fn lifetime_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = sensorlife(&["lifetime", "--interval", "809"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let pairs = parse_summary(&stdout(&out));
    let years: f64 = value(&pairs, "lifetime_years").parse().unwrap();
    assert!((years - 1.9513).abs() < 1e-3, "{years}");

    let out = sensorlife(&["lifetime", "--interval", "0"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn config_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.conf"), "sensors = 3\n\nbogus = 1\n").unwrap();
    let out = sensorlife(&["run", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:3"), "{err}");
    assert!(err.contains("bogus"), "{err}");

    let out = sensorlife(&["run", "missing.conf"], dir.path());
    assert_ne!(out.status.code(), Some(EXIT_OK));

    let out = sensorlife(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn defaults_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = sensorlife(&["defaults"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK));
    fs::write(dir.path().join("d.conf"), stdout(&out)).unwrap();
    let out = sensorlife(&["baseline-interval", "d.conf"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let steps: u32 = value(&parse_summary(&stdout(&out)), "interval_steps").parse().unwrap();
    assert!(steps > 0);
}

#[test]
fn resume_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.conf"), format!("{SMALL}checkpoint_every = 50\n")).unwrap();
    let out = sensorlife(&["run", "small.conf", "--output", "first"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let ckpt = dir.path().join("first").join(sensorlife::cli::CHECKPOINT_FILE);
    assert!(ckpt.is_file());
    let out = sensorlife(
        &["run", "small.conf", "--output", "second", "--resume", ckpt.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("second/episodes.csv").is_file());
}
