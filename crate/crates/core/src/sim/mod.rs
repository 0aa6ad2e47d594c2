//! Discrete-time simulation of a controller scheduling sensor updates.
//!
//! Time advances in grid steps of `time_step` seconds. At step 0 every
//! sensor reports once. Afterwards a sensor wakes when its update time has
//! elapsed, reports the true field value and receives its next update time.
//! Between wakes the controller evaluates the estimation error at every
//! sensor location on every grid step; a sensor's `ε̄` is the mean of those
//! errors from its previous report (inclusive) to the current one
//! (exclusive).
//!
//! Each wake of a learning sensor closes one episode: the reward for the
//! previous action is computed from the finished interval, the transition is
//! stored, and a new action is chosen ε-greedily from the shared Q-network
//! evaluated on the global state with the waking sensor first.

mod oracle;
mod report;

pub use oracle::{interval_mse_profile, oracle_optimal_update_time, OracleQuery, OracleResult};
pub use report::{lifetime_report, LifetimeReport, SensorLifetime};

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    accuracy_reward, apply_action, build_training_targets, encode_state, energy_reward, select_action,
    total_reward, Action, QLearningParams, RewardWeights, SensorState, StateNorms, Transition, UpdateBounds,
};
use crate::data::GriddedSeries;
use crate::energy::{debit_energy, EnergyAccount, EnergyParams};
use crate::estimator::{
    extract_parameters, mse_at, select_neighbors, CovarianceModel, ExtractionConfig, FittedModel, Observation,
};
use crate::network::{NetworkLayout, QNetwork, TrainConfig};
use crate::{Error, Result};

/// Ground truth the simulator replays: every sensor's true value per grid step.
pub type GroundTruthField = GriddedSeries;

/// How the controller obtains its covariance model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceMode {
    /// Keep the configured model, changed only by scheduled events.
    Fixed,
    /// Refit from the last `window_steps` of ground truth every
    /// `refit_every` steps.
    Extracted {
        window_steps: usize,
        refit_every: usize,
        max_lag: usize,
    },
}

impl CovarianceMode {
    pub fn extracted_default() -> Self {
        CovarianceMode::Extracted {
            window_steps: 8640,
            refit_every: 360,
            max_lag: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Change {
    Sigma(f64),
    ThetaTime(f64),
    ThetaSpace(f64),
    EpsTarget(f64),
}

/// A parameter change applied once `after_episodes` learning episodes have
/// completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledChange {
    pub after_episodes: usize,
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Seconds per grid step.
    pub time_step: f64,
    /// Grid steps per pass over the data.
    pub horizon: usize,
    pub passes: usize,
    /// Starting update time per sensor, grid steps; one entry applies to all.
    pub initial_update_times: Vec<u32>,
    pub bounds: UpdateBounds,
    pub energy: EnergyParams,
    /// Starting energy per sensor as a fraction of `e0`; one entry applies to all.
    pub initial_energy: Vec<f64>,
    pub reward: RewardWeights,
    pub q: QLearningParams,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Learning episodes between training sessions.
    pub train_every: usize,
    /// Most recent transitions used per training session.
    pub train_window: usize,
    pub neighbors: usize,
    /// Which sensors adapt their update time; one entry applies to all.
    pub learning: Vec<bool>,
    pub model: CovarianceModel,
    pub covariance: CovarianceMode,
    pub events: Vec<ScheduledChange>,
    /// Stop after this many learning episodes.
    pub max_episodes: Option<usize>,
    /// Trailing grid steps over which achieved intervals are averaged.
    pub report_window_steps: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_step: 10.0,
            horizon: 77_760,
            passes: 5,
            initial_update_times: vec![81],
            bounds: UpdateBounds::default(),
            energy: EnergyParams::default(),
            initial_energy: vec![1.0],
            reward: RewardWeights::default(),
            q: QLearningParams::default(),
            hidden: vec![1500; 3],
            train: TrainConfig::default(),
            train_every: 10,
            train_window: 256,
            neighbors: 8,
            learning: vec![true],
            model: CovarianceModel {
                sigma: 1.0,
                theta_time: 1e-3,
                theta_space: 0.05,
            },
            covariance: CovarianceMode::Fixed,
            events: Vec::new(),
            max_episodes: None,
            report_window_steps: 8640,
            seed: 7,
        }
    }
}

fn per_sensor<T: Copy>(values: &[T], i: usize, what: &str) -> Result<T> {
    match values {
        [one] => Ok(*one),
        many => many
            .get(i)
            .copied()
            .ok_or_else(|| Error::contract(format!("{what} has {} entries, sensor {i} needs one", many.len()))),
    }
}

impl SimConfig {
    pub fn validate(&self, n_sensors: usize) -> Result<()> {
        if !(self.time_step > 0.0) {
            return Err(Error::contract("time step must be positive"));
        }
        self.energy.validate()?;
        self.q.validate()?;
        self.model.validate()?;
        if self.train_every == 0 || self.train_window == 0 || self.train.batch_size == 0 {
            return Err(Error::contract("training cadence, window and batch size must be >= 1"));
        }
        if self.neighbors == 0 {
            return Err(Error::contract("neighbor count must be >= 1"));
        }
        if self.phi_invalid() {
            return Err(Error::contract("reward weights must be >= 0"));
        }
        for (what, len) in [
            ("initial_update_times", self.initial_update_times.len()),
            ("initial_energy", self.initial_energy.len()),
            ("learning", self.learning.len()),
        ] {
            if len != 1 && len != n_sensors {
                return Err(Error::contract(format!("{what} has {len} entries for {n_sensors} sensors")));
            }
        }
        for i in 0..n_sensors {
            let t = per_sensor(&self.initial_update_times, i, "initial_update_times")?;
            if !(self.bounds.min..=self.bounds.max).contains(&t) {
                return Err(Error::contract(format!("initial update time {t} outside bounds")));
            }
            let f = per_sensor(&self.initial_energy, i, "initial_energy")?;
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::contract(format!("initial energy fraction {f} outside [0, 1]")));
            }
        }
        if let CovarianceMode::Extracted { window_steps, refit_every, .. } = self.covariance {
            if window_steps == 0 || refit_every == 0 {
                return Err(Error::contract("extraction window and cadence must be >= 1"));
            }
        }
        Ok(())
    }

    fn phi_invalid(&self) -> bool {
        !(self.reward.phi_acc >= 0.0 && self.reward.phi_en >= 0.0)
    }

    pub fn total_steps(&self) -> u64 {
        self.horizon as u64 * self.passes as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeKind {
    /// The report every sensor sends at step 0.
    Initial,
    /// A wake of a learning sensor.
    Learning,
    /// A wake of a sensor with a frozen update time.
    Fixed,
    /// The wake of a sensor whose battery is empty; nothing is sent.
    Inert,
}

impl EpisodeKind {
    pub fn name(self) -> &'static str {
        match self {
            EpisodeKind::Initial => "initial",
            EpisodeKind::Learning => "learning",
            EpisodeKind::Fixed => "fixed",
            EpisodeKind::Inert => "inert",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Initial, Self::Learning, Self::Fixed, Self::Inert]
            .into_iter()
            .find(|k| k.name() == name)
    }

    pub fn transmits(self) -> bool {
        self != EpisodeKind::Inert
    }
}

/// One sensor wake.
///
/// `posterior.update_time` is the interval that just finished and
/// `posterior.avg_mse` its average error. The reward fields score the action
/// taken at the previous wake; `action` is the one chosen now.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub pass: usize,
    pub step: u64,
    pub sim_time: f64,
    pub sensor_index: usize,
    pub sensor_id: usize,
    pub kind: EpisodeKind,
    pub prior: SensorState,
    pub posterior: SensorState,
    pub action: Option<Action>,
    pub next_update_time: u32,
    pub rewarded: bool,
    pub reward_acc: f64,
    pub reward_en: f64,
    pub reward_total: f64,
}

/// First grid step of a pass over the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassMarker {
    pub pass: usize,
    pub step: u64,
    pub episodes_before: usize,
}

#[derive(Debug, Clone)]
struct SensorRuntime {
    index: usize,
    id: usize,
    position: [f64; 2],
    learning: bool,
    account: EnergyAccount,
    state: SensorState,
    update_time: u32,
    next_wake: u64,
    last_report: u64,
    last_delta: i64,
    mse_sum: f64,
    mse_steps: u32,
    pending: Option<(Vec<f64>, Action)>,
}

pub struct ExperimentOutput {
    pub records: Vec<EpisodeRecord>,
    pub markers: Vec<PassMarker>,
    pub steps_run: u64,
    pub learning_episodes: usize,
    pub training_losses: Vec<f64>,
    pub network: QNetwork,
    pub final_model: CovarianceModel,
    pub final_eps_target: f64,
}

/// Mutable simulation state.
#[derive(Clone)]
pub struct Simulation<'a> {
    config: &'a SimConfig,
    field: &'a GroundTruthField,
    sensors: Vec<SensorRuntime>,
    latest: Vec<Option<Observation>>,
    /// Per target sensor, every sensor index ordered by distance then id.
    neighbor_order: Vec<Vec<usize>>,
    recency: Vec<usize>,
    fitted: FittedModel,
    eps_target: f64,
    network: QNetwork,
    action_rng: ChaCha8Rng,
    train_rng: ChaCha8Rng,
    transitions: VecDeque<Transition>,
    since_training: usize,
    learning_episodes: usize,
    next_event: usize,
    step: u64,
    records: Vec<EpisodeRecord>,
    markers: Vec<PassMarker>,
    training_losses: Vec<f64>,
    /// Greedy evaluation: no exploration, training or scheduled changes.
    frozen: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a SimConfig, field: &'a GroundTruthField) -> Result<Self> {
        let n = field.sensors.len();
        if n == 0 {
            return Err(Error::Data("ground-truth field has no sensors".into()));
        }
        config.validate(n)?;
        if config.horizon > 0 {
            field.validate(config.horizon)?;
        }
        let mut sensors = Vec::with_capacity(n);
        for (i, s) in field.sensors.iter().enumerate() {
            let frac = per_sensor(&config.initial_energy, i, "initial_energy")?;
            let t0 = per_sensor(&config.initial_update_times, i, "initial_update_times")?;
            let account = EnergyAccount::new(frac * config.energy.e0)?;
            sensors.push(SensorRuntime {
                index: i,
                id: s.mote_id,
                position: s.location(),
                learning: per_sensor(&config.learning, i, "learning")?,
                account,
                state: SensorState {
                    update_time: t0,
                    avg_mse: 0.0,
                    energy: account.remaining(),
                },
                update_time: t0,
                next_wake: 0,
                last_report: 0,
                last_delta: 0,
                mse_sum: 0.0,
                mse_steps: 0,
                pending: None,
            });
        }
        let probes: Vec<Observation> = sensors
            .iter()
            .map(|s| Observation {
                sensor_id: s.index,
                location: s.position,
                time: 0.0,
                value: 0.0,
            })
            .collect();
        let neighbor_order = sensors
            .iter()
            .map(|s| select_neighbors(&probes, s.position, n).iter().map(|o| o.sensor_id).collect())
            .collect();

        let layout = NetworkLayout::new(3 * n, config.hidden.clone(), Action::ALL.len())?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        init_rng.set_stream(1);
        let network = QNetwork::init(&layout, &mut init_rng)?;
        let mut action_rng = ChaCha8Rng::seed_from_u64(config.seed);
        action_rng.set_stream(2);
        let mut train_rng = ChaCha8Rng::seed_from_u64(config.seed);
        train_rng.set_stream(3);

        Ok(Self {
            config,
            field,
            sensors,
            latest: vec![None; n],
            neighbor_order,
            recency: (0..n).collect(),
            fitted: FittedModel::zero_mean(config.model),
            eps_target: config.q.eps_target,
            network,
            action_rng,
            train_rng,
            transitions: VecDeque::with_capacity(config.train_window),
            since_training: 0,
            learning_episodes: 0,
            next_event: 0,
            step: 0,
            records: Vec::new(),
            markers: Vec::new(),
            training_losses: Vec::new(),
            frozen: false,
        })
    }

    /// Replaces the freshly initialized Q-network, e.g. from a checkpoint.
    pub fn set_network(&mut self, network: QNetwork) -> Result<()> {
        if network.layout() != self.network.layout() {
            return Err(Error::contract(format!(
                "checkpoint layout {:?} does not match {:?}",
                network.layout(),
                self.network.layout()
            )));
        }
        self.network = network;
        Ok(())
    }

    pub fn network(&self) -> &QNetwork {
        &self.network
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.fitted.model
    }

    pub fn eps_target(&self) -> f64 {
        self.eps_target
    }

    pub fn learning_episodes(&self) -> usize {
        self.learning_episodes
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn sensor_state(&self, sensor: usize) -> SensorState {
        self.sensors[sensor].state
    }

    pub fn remaining_energy(&self, sensor: usize) -> f64 {
        self.sensors[sensor].account.remaining()
    }

    fn norms(&self) -> StateNorms {
        StateNorms {
            t_max: self.config.bounds.max,
            eps_target: self.eps_target,
            e0: self.config.energy.e0,
        }
    }

    fn finished(&self) -> bool {
        self.step >= self.config.total_steps()
            || (!self.frozen && self.config.max_episodes.is_some_and(|m| self.learning_episodes >= m))
    }

    fn true_value(&self, sensor: usize, step: u64) -> f64 {
        self.field.values[sensor][(step % self.config.horizon as u64) as usize]
    }

    fn mean_alive_energy(&self) -> f64 {
        let alive: Vec<f64> = self
            .sensors
            .iter()
            .map(|s| s.account.remaining())
            .filter(|&e| e > 0.0)
            .collect();
        if alive.is_empty() {
            0.0
        } else {
            alive.iter().sum::<f64>() / alive.len() as f64
        }
    }

    fn transmit(&mut self, sensor: usize) {
        let value = self.true_value(sensor, self.step);
        let s = &mut self.sensors[sensor];
        s.account = debit_energy(s.account, &self.config.energy, 0.0, 1);
        s.last_report = self.step;
        self.latest[sensor] = Some(Observation {
            sensor_id: sensor,
            location: s.position,
            time: self.step as f64 * self.config.time_step,
            value,
        });
        self.recency.retain(|&i| i != sensor);
        self.recency.insert(0, sensor);
    }

    fn global_state(&self) -> Result<Vec<f64>> {
        let states: Vec<SensorState> = self.sensors.iter().map(|s| s.state).collect();
        encode_state(&states, &self.recency, &self.norms())
    }

    fn pass_of(&self, step: u64) -> usize {
        (step / self.config.horizon.max(1) as u64) as usize
    }

    /// Handles the wake of `sensor`, which must be due at the current step.
    pub fn run_episode(&mut self, sensor: usize) -> Result<EpisodeRecord> {
        let now = self.step;
        let s = self
            .sensors
            .get(sensor)
            .ok_or_else(|| Error::contract(format!("no sensor {sensor}")))?;
        if s.next_wake != now {
            return Err(Error::contract(format!(
                "sensor {sensor} is due at step {}, not {now}",
                s.next_wake
            )));
        }
        let prior = s.state;
        let base = EpisodeRecord {
            episode: self.records.len(),
            pass: self.pass_of(now),
            step: now,
            sim_time: now as f64 * self.config.time_step,
            sensor_index: sensor,
            sensor_id: s.id,
            kind: EpisodeKind::Inert,
            prior,
            posterior: prior,
            action: None,
            next_update_time: s.update_time,
            rewarded: false,
            reward_acc: 0.0,
            reward_en: 0.0,
            reward_total: 0.0,
        };

        if s.account.is_dead() {
            let s = &mut self.sensors[sensor];
            s.next_wake = u64::MAX;
            s.pending = None;
            let mut rec = base;
            rec.posterior.energy = 0.0;
            self.records.push(rec.clone());
            return Ok(rec);
        }

        if now == 0 {
            self.transmit(sensor);
            let s = &mut self.sensors[sensor];
            s.state.energy = s.account.remaining();
            s.next_wake = s.update_time as u64;
            let mut rec = base;
            rec.kind = EpisodeKind::Initial;
            rec.posterior = s.state;
            rec.prior = s.state;
            self.records.push(rec.clone());
            return Ok(rec);
        }

        self.transmit(sensor);
        let avg_energy = self.mean_alive_energy();
        let s = &mut self.sensors[sensor];
        let interval = s.update_time;
        let avg_mse = if s.mse_steps > 0 { s.mse_sum / s.mse_steps as f64 } else { 0.0 };
        s.mse_sum = 0.0;
        s.mse_steps = 0;
        s.state = SensorState {
            update_time: interval,
            avg_mse,
            energy: s.account.remaining(),
        };

        let mut rec = base;
        rec.posterior = s.state;
        rec.kind = if s.learning { EpisodeKind::Learning } else { EpisodeKind::Fixed };

        if s.pending.is_some() || !s.learning {
            let acc = accuracy_reward(avg_mse, self.eps_target, s.last_delta);
            let en = if avg_energy > 0.0 {
                energy_reward(s.state.energy, avg_energy, s.last_delta)?
            } else {
                0.0
            };
            rec.rewarded = true;
            rec.reward_acc = acc;
            rec.reward_en = en;
            rec.reward_total = total_reward(acc, en, &self.config.reward);
        }

        let state_vec = self.global_state()?;
        let s = &mut self.sensors[sensor];
        let action = if s.learning {
            if let Some((prev_state, prev_action)) = s.pending.take() {
                if self.transitions.len() == self.config.train_window {
                    self.transitions.pop_front();
                }
                self.transitions.push_back(Transition {
                    state: prev_state,
                    action: prev_action,
                    reward: rec.reward_total,
                    next_state: state_vec.clone(),
                });
                self.since_training += 1;
            }
            let q = self.network.forward(&state_vec)?;
            let eps = if self.frozen { 0.0 } else { self.config.q.epsilon_explore };
            select_action(&q, eps, &mut self.action_rng)?
        } else {
            Action::Keep
        };

        let s = &mut self.sensors[sensor];
        let (next_t, delta) = apply_action(s.update_time, action, &self.config.bounds);
        s.update_time = next_t;
        s.last_delta = delta;
        s.next_wake = now + next_t as u64;
        if s.learning {
            s.pending = Some((state_vec, action));
        }
        rec.action = Some(action);
        rec.next_update_time = next_t;
        let learning = s.learning;
        self.records.push(rec.clone());

        if learning {
            self.learning_episodes += 1;
            if self.frozen {
                return Ok(rec);
            }
            if self.since_training >= self.config.train_every {
                self.train();
                self.since_training = 0;
            }
            self.apply_events();
        }
        Ok(rec)
    }

    fn apply_events(&mut self) {
        while let Some(ev) = self.config.events.get(self.next_event) {
            if ev.after_episodes > self.learning_episodes {
                break;
            }
            let m = &mut self.fitted.model;
            match ev.change {
                Change::Sigma(v) => m.sigma = v,
                Change::ThetaTime(v) => m.theta_time = v,
                Change::ThetaSpace(v) => m.theta_space = v,
                Change::EpsTarget(v) => self.eps_target = v,
            }
            log::info!("episode {}: applied {:?}", self.learning_episodes, ev.change);
            self.next_event += 1;
        }
    }

    fn train(&mut self) {
        let mut inputs = Vec::with_capacity(self.transitions.len());
        let mut targets = Vec::with_capacity(self.transitions.len());
        for tr in &self.transitions {
            let current = self.network.forward(&tr.state);
            let next = self.network.forward(&tr.next_state);
            let (Ok(current), Ok(next)) = (current, next) else { continue };
            if let Ok(t) = build_training_targets(tr, &current, &next, &self.config.q) {
                inputs.push(tr.state.clone());
                targets.push(t);
            }
        }
        if inputs.is_empty() {
            return;
        }
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut last_loss = f64::NAN;
        for _ in 0..self.config.train.epochs_per_update.max(1) {
            order.shuffle(&mut self.train_rng);
            for chunk in order.chunks(self.config.train.batch_size) {
                let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                let ts: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
                match self.network.train_batch(&xs, &ts, &self.config.train) {
                    Ok(loss) => last_loss = loss,
                    Err(e) => log::warn!("training batch skipped: {e}"),
                }
            }
        }
        self.training_losses.push(last_loss);
    }

    fn refit(&mut self) {
        let CovarianceMode::Extracted { window_steps, refit_every, max_lag } = self.config.covariance else {
            return;
        };
        if self.step == 0 || self.step % refit_every as u64 != 0 {
            return;
        }
        let first = self.step.saturating_sub(window_steps as u64 - 1);
        let ts = self.config.time_step;
        let mut window = Vec::with_capacity((self.step - first + 1) as usize * self.sensors.len());
        for k in first..=self.step {
            for s in &self.sensors {
                window.push(Observation {
                    sensor_id: s.index,
                    location: s.position,
                    time: k as f64 * ts,
                    value: self.true_value(s.index, k),
                });
            }
        }
        let cfg = ExtractionConfig {
            time_step: ts,
            max_lag,
            min_samples: 10,
        };
        self.fitted = extract_parameters(&window, window_steps as f64 * ts, &cfg, &self.fitted);
    }

    fn accumulate_errors(&mut self) -> Result<()> {
        let t = self.step as f64 * self.config.time_step;
        let k = self.config.neighbors;
        let mut nearest = Vec::with_capacity(k);
        for target in 0..self.sensors.len() {
            if self.sensors[target].account.is_dead() {
                continue;
            }
            nearest.clear();
            nearest.extend(
                self.neighbor_order[target]
                    .iter()
                    .filter_map(|&i| self.latest[i])
                    .take(k),
            );
            let e = mse_at(&self.fitted.model, &nearest, self.sensors[target].position, t, k)?;
            let s = &mut self.sensors[target];
            s.mse_sum += e;
            s.mse_steps += 1;
        }
        Ok(())
    }

    /// Advances one grid step: continuous energy drain, covariance refit,
    /// wakes in ascending sensor order, then error accumulation.
    pub fn advance(&mut self) -> Result<Vec<EpisodeRecord>> {
        let horizon = self.config.horizon as u64;
        if self.step > 0 && self.step % horizon == 0 {
            self.markers.push(PassMarker {
                pass: self.pass_of(self.step),
                step: self.step,
                episodes_before: self.records.len(),
            });
        }
        if self.step > 0 {
            for s in &mut self.sensors {
                s.account = debit_energy(s.account, &self.config.energy, self.config.time_step, 0);
            }
        }
        self.refit();
        let mut out = Vec::new();
        for i in 0..self.sensors.len() {
            if self.sensors[i].next_wake == self.step && !self.finished() {
                out.push(self.run_episode(i)?);
            }
        }
        self.accumulate_errors()?;
        self.step += 1;
        Ok(out)
    }

    /// Runs until `episodes` learning episodes have completed in total or
    /// the data is exhausted.
    pub fn run_until(&mut self, episodes: usize) -> Result<()> {
        while self.learning_episodes < episodes && !self.finished() {
            self.advance()?;
        }
        Ok(())
    }

    /// Update times the current greedy policy assigns over the next
    /// `episodes` learning episodes, on a copy of the simulation with
    /// exploration, training and scheduled changes switched off.
    pub fn greedy_rollout(&self, episodes: usize) -> Result<Vec<u32>> {
        let mut sim = self.clone();
        sim.frozen = true;
        let start = sim.records.len();
        sim.run_until(self.learning_episodes + episodes)?;
        Ok(sim.records[start..]
            .iter()
            .filter(|r| r.kind == EpisodeKind::Learning)
            .map(|r| r.next_update_time)
            .collect())
    }

    pub fn run(mut self) -> Result<ExperimentOutput> {
        while !self.finished() {
            self.advance()?;
        }
        Ok(ExperimentOutput {
            records: self.records,
            markers: self.markers,
            steps_run: self.step,
            learning_episodes: self.learning_episodes,
            training_losses: self.training_losses,
            network: self.network,
            final_model: self.fitted.model,
            final_eps_target: self.eps_target,
        })
    }
}

/// Runs a full experiment over `passes` replays of `field`.
pub fn run_experiment(config: &SimConfig, field: &GroundTruthField) -> Result<ExperimentOutput> {
    Simulation::new(config, field)?.run()
}
