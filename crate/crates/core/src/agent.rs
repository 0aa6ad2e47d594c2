//! Learning logic of the network controller.
//!
//! Each sensor is described by its current update time `T`, the average
//! estimation error `ε̄` over its last sleep interval and its remaining
//! energy `E`. The controller picks one of five update-time adjustments and is
//! rewarded for keeping `ε̄` under the target while balancing energy across
//! the network.

use rand::Rng;

use crate::{Error, Result};

/// Update-time adjustment chosen by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Dec10,
    Dec1,
    Keep,
    Incr1,
    Incr10,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Dec10, Action::Dec1, Action::Keep, Action::Incr1, Action::Incr10];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    /// Change in update time, grid steps.
    pub fn delta(self) -> i64 {
        match self {
            Action::Dec10 => -10,
            Action::Dec1 => -1,
            Action::Keep => 0,
            Action::Incr1 => 1,
            Action::Incr10 => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Dec10 => "dec10",
            Action::Dec1 => "dec1",
            Action::Keep => "cons",
            Action::Incr1 => "incr1",
            Action::Incr10 => "incr10",
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// Allowed update times in grid steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateBounds {
    pub min: u32,
    pub max: u32,
}

impl Default for UpdateBounds {
    fn default() -> Self {
        Self { min: 1, max: 1000 }
    }
}

impl UpdateBounds {
    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min == 0 || min > max {
            return Err(Error::contract(format!("invalid update-time bounds [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn clamp(&self, t: i64) -> u32 {
        t.clamp(self.min as i64, self.max as i64) as u32
    }
}

/// Applies `action` and clamps to `bounds`. Returns the new update time and
/// the post-clamp change.
pub fn apply_action(update_time: u32, action: Action, bounds: &UpdateBounds) -> (u32, i64) {
    let next = bounds.clamp(update_time as i64 + action.delta());
    (next, next as i64 - update_time as i64)
}

/// Per-sensor state atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorState {
    /// Grid steps.
    pub update_time: u32,
    /// Squared observation units.
    pub avg_mse: f64,
    /// Joules.
    pub energy: f64,
}

/// Constants that map state atoms onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateNorms {
    pub t_max: u32,
    pub eps_target: f64,
    pub e0: f64,
}

/// Concatenates `(T/T_max, min(ε̄/(2ε_tar), 1), E/E0)` over sensors in
/// `recency_order`, most recent transmitter first.
pub fn encode_state(states: &[SensorState], recency_order: &[usize], norms: &StateNorms) -> Result<Vec<f64>> {
    if recency_order.len() != states.len() {
        return Err(Error::contract(format!(
            "recency order has {} entries for {} sensors",
            recency_order.len(),
            states.len()
        )));
    }
    let mut seen = vec![false; states.len()];
    let mut out = Vec::with_capacity(3 * states.len());
    for &i in recency_order {
        if i >= states.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::contract("recency order is not a permutation of sensor indices"));
        }
        let s = &states[i];
        out.push((s.update_time as f64 / norms.t_max as f64).clamp(0.0, 1.0));
        out.push((s.avg_mse / (2.0 * norms.eps_target)).clamp(0.0, 1.0));
        out.push((s.energy / norms.e0).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Piecewise accuracy reward for the average error `avg_mse` of an interval
/// reached by changing the update time by `delta_t` steps.
pub fn accuracy_reward(avg_mse: f64, eps_target: f64, delta_t: i64) -> f64 {
    let td = delta_t as f64;
    if avg_mse <= eps_target {
        match delta_t {
            d if d > 0 => 1.0 + (0.8 * eps_target - avg_mse).powi(3) * td + td / 100.0,
            0 => 0.75,
            _ => -1.0 + td * (eps_target - avg_mse),
        }
    } else {
        match delta_t {
            d if d > 0 => -1.0 + td * (eps_target - avg_mse),
            0 => -0.75,
            _ => 1.0 + (1.25 * eps_target - avg_mse).powi(3) * td - td / 100.0,
        }
    }
}

/// Energy reward: positive when a sensor below the network average sleeps
/// longer or a sensor above it sleeps less.
pub fn energy_reward(energy: f64, avg_energy: f64, delta_t: i64) -> Result<f64> {
    if !(avg_energy > 0.0) {
        return Err(Error::contract(format!("average energy must be positive, got {avg_energy}")));
    }
    Ok(match delta_t {
        d if d > 0 => 2.0 * (avg_energy - energy) / avg_energy,
        0 => (avg_energy - energy) / avg_energy,
        _ => 2.0 * (energy - avg_energy) / avg_energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub phi_acc: f64,
    pub phi_en: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            phi_acc: 0.6,
            phi_en: 0.4,
        }
    }
}

pub fn total_reward(acc: f64, en: f64, weights: &RewardWeights) -> f64 {
    weights.phi_acc * acc + weights.phi_en * en
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLearningParams {
    /// Learning rate.
    pub alpha: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Exploration probability.
    pub epsilon_explore: f64,
    /// Target average error, squared observation units.
    pub eps_target: f64,
}

impl Default for QLearningParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            gamma: 0.2,
            epsilon_explore: 0.15,
            eps_target: 0.0625,
        }
    }
}

impl QLearningParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha <= 1.0
            && (0.0..1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.epsilon_explore)
            && self.eps_target > 0.0
            && self.eps_target.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid Q-learning parameters {self:?}")))
        }
    }
}

/// `Q + α (R + γ max Q' - Q)`.
pub fn q_target(q_old: f64, reward: f64, max_next_q: f64, params: &QLearningParams) -> f64 {
    q_old + params.alpha * (reward + params.gamma * max_next_q - q_old)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy selection over the five action values.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon_explore: f64, rng: &mut R) -> Result<Action> {
    if q_values.len() != Action::ALL.len() || q_values.iter().any(|q| !q.is_finite()) {
        return Err(Error::contract(format!("expected 5 finite Q-values, got {q_values:?}")));
    }
    // one uniform draw decides exploration so greedy runs consume the rng identically
    let explore = rng.random::<f64>() < epsilon_explore;
    if explore {
        Ok(Action::ALL[rng.random_range(0..Action::ALL.len())])
    } else {
        Ok(Action::ALL[argmax(q_values)])
    }
}

/// One learning cycle of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Training targets: the current outputs, with the taken action's entry
/// replaced by its Q-learning target.
pub fn build_training_targets(
    transition: &Transition,
    current: &[f64],
    next: &[f64],
    params: &QLearningParams,
) -> Result<Vec<f64>> {
    if current.len() != Action::ALL.len() || next.len() != Action::ALL.len() {
        return Err(Error::contract("Q-value vectors must have 5 entries"));
    }
    let max_next = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut targets = current.to_vec();
    let a = transition.action.index();
    targets[a] = q_target(current[a], transition.reward, max_next, params);
    Ok(targets)
}
