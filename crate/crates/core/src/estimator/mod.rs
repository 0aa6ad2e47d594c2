//! LMMSE estimation of a spatiotemporal field.
//!
//! Observations are the latest readings `y_n = Z(x_n, t_n)` reported by each
//! sensor. The field at `(x, t)` is estimated as `a0 + Σ a_n y_n` where the
//! weights solve `C_YY a = C_YZ` under the separable exponential covariance
//!
//! ```text
//! Cov(Z(x_i, t_i), Z(x_j, t_j)) = σ² exp(-θ_space ‖x_i - x_j‖ - θ_time |t_i - t_j|)
//! ```
//!
//! and the mean squared error of the estimate is `σ² - C_YZᵀ a`.

mod extract;

pub use extract::{extract_parameters, ExtractionConfig, FieldMeans, FittedModel};

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Planar sensor position in meters.
pub type Location = [f64; 2];

/// Relative diagonal jitter used when `C_YY` is singular or near-singular.
pub const JITTER: f64 = 1e-9;

/// Condition estimate above which the jittered system is solved instead.
pub const MAX_CONDITION: f64 = 1e10;

pub fn distance(a: &Location, b: &Location) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One reading reported by a sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub sensor_id: usize,
    pub location: Location,
    /// Seconds since the start of the run.
    pub time: f64,
    pub value: f64,
}

impl Observation {
    pub fn new(sensor_id: usize, location: Location, time: f64, value: f64) -> Result<Self> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::contract(format!("observation time {time} must be >= 0")));
        }
        if !(location[0].is_finite() && location[1].is_finite() && value.is_finite()) {
            return Err(Error::contract("observation location and value must be finite"));
        }
        Ok(Self {
            sensor_id,
            location,
            time,
            value,
        })
    }
}

/// Separable exponential covariance model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceModel {
    /// Standard deviation in observation units.
    pub sigma: f64,
    /// Temporal decay rate, 1/s.
    pub theta_time: f64,
    /// Spatial decay rate, 1/m.
    pub theta_space: f64,
}

impl CovarianceModel {
    pub fn new(sigma: f64, theta_time: f64, theta_space: f64) -> Result<Self> {
        let model = Self {
            sigma,
            theta_time,
            theta_space,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::contract(format!("sigma must be > 0, got {}", self.sigma)));
        }
        // theta = +inf is allowed: instantaneous decorrelation
        if !(self.theta_time >= 0.0 && self.theta_space >= 0.0) {
            return Err(Error::contract(format!(
                "decay rates must be >= 0, got theta_time={} theta_space={}",
                self.theta_time, self.theta_space
            )));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `exp(-θ_space r - θ_time Δ)`.
    pub fn correlation(&self, distance: f64, time_diff: f64) -> Result<f64> {
        if !(distance >= 0.0 && time_diff >= 0.0) {
            return Err(Error::contract(format!(
                "distance ({distance}) and time difference ({time_diff}) must be >= 0"
            )));
        }
        Ok(self.correlation_unchecked(distance, time_diff))
    }

    fn correlation_unchecked(&self, distance: f64, time_diff: f64) -> f64 {
        // 0 * inf would be NaN; a zero lag is always fully correlated
        let space = if distance == 0.0 { 0.0 } else { self.theta_space * distance };
        let time = if time_diff == 0.0 { 0.0 } else { self.theta_time * time_diff };
        (-space - time).exp()
    }
}

/// Returns the `k` observations nearest to `target`, ties broken by lower
/// sensor id.
pub fn select_neighbors(observations: &[Observation], target: Location, k: usize) -> Vec<Observation> {
    let mut ranked: Vec<(f64, &Observation)> = observations
        .iter()
        .map(|o| (distance(&o.location, &target), o))
        .collect();
    ranked.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.sensor_id.cmp(&b.1.sensor_id),
        other => other,
    });
    ranked.into_iter().take(k).map(|(_, o)| *o).collect()
}

/// Observation-to-observation and observation-to-target covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub c_yy: DMatrix<f64>,
    pub c_yz: DVector<f64>,
    /// σ² of the model the pair was assembled from.
    pub variance: f64,
}

impl CovariancePair {
    pub fn len(&self) -> usize {
        self.c_yz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_yz.is_empty()
    }
}

pub fn assemble_covariances(
    model: &CovarianceModel,
    observations: &[Observation],
    target: Location,
    target_time: f64,
) -> Result<CovariancePair> {
    if observations.is_empty() {
        return Err(Error::contract("cannot assemble covariances without observations"));
    }
    let n = observations.len();
    let var = model.variance();
    let mut c_yy = DMatrix::zeros(n, n);
    let mut c_yz = DVector::zeros(n);
    for (i, oi) in observations.iter().enumerate() {
        let lag = target_time - oi.time;
        if lag < 0.0 {
            return Err(Error::contract(format!(
                "observation at t={} is after the target time {target_time}",
                oi.time
            )));
        }
        c_yz[i] = var * model.correlation_unchecked(distance(&oi.location, &target), lag);
        c_yy[(i, i)] = var;
        for (j, oj) in observations.iter().enumerate().skip(i + 1) {
            let c = var
                * model.correlation_unchecked(
                    distance(&oi.location, &oj.location),
                    (oi.time - oj.time).abs(),
                );
            c_yy[(i, j)] = c;
            c_yy[(j, i)] = c;
        }
    }
    Ok(CovariancePair {
        c_yy,
        c_yz,
        variance: var,
    })
}

/// Solves `C_YY a = C_YZ`, falling back to `(C_YY + λI) a = C_YZ` with
/// `λ = 1e-9 σ²` when the system is singular or badly conditioned.
pub fn solve_weights(pair: &CovariancePair) -> Result<Vec<f64>> {
    let n = pair.len();
    if pair.c_yy.nrows() != n || pair.c_yy.ncols() != n {
        return Err(Error::contract(format!(
            "C_YY is {}x{} but C_YZ has {n} entries",
            pair.c_yy.nrows(),
            pair.c_yy.ncols()
        )));
    }
    if pair.c_yy.iter().chain(pair.c_yz.iter()).any(|v| !v.is_finite()) {
        return Err(Error::contract("covariance entries must be finite"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    if let Some(chol) = pair.c_yy.clone().cholesky() {
        let l = chol.l_dirty();
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = l[(i, i)].abs();
            (lo.min(d), hi.max(d))
        });
        let condition = (hi / lo).powi(2);
        if condition.is_finite() && condition <= MAX_CONDITION {
            return Ok(chol.solve(&pair.c_yz).iter().copied().collect());
        }
    }

    let lambda = JITTER * pair.variance;
    let mut jittered = pair.c_yy.clone();
    for i in 0..n {
        jittered[(i, i)] += lambda;
    }
    let solution = match jittered.clone().cholesky() {
        Some(chol) => chol.solve(&pair.c_yz),
        None => jittered
            .lu()
            .solve(&pair.c_yz)
            .ok_or_else(|| Error::numerical("jittered covariance matrix is singular"))?,
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite estimator weights"));
    }
    Ok(solution.iter().copied().collect())
}

/// Estimator weights including the offset `a0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorWeights {
    pub offset: f64,
    pub weights: Vec<f64>,
}

impl EstimatorWeights {
    /// Completes solved weights with `a0 = μ_Z - Σ a_n μ_n`.
    pub fn with_means(weights: Vec<f64>, observations: &[Observation], means: &FieldMeans) -> Self {
        let offset = means.pooled
            - weights
                .iter()
                .zip(observations)
                .map(|(a, o)| a * means.sensor_mean(o.sensor_id))
                .sum::<f64>();
        Self { offset, weights }
    }
}

/// `a0 + Σ a_n y_n`.
pub fn estimate(weights: &EstimatorWeights, observations: &[Observation]) -> Result<f64> {
    if weights.weights.len() != observations.len() {
        return Err(Error::contract(format!(
            "{} weights for {} observations",
            weights.weights.len(),
            observations.len()
        )));
    }
    Ok(weights.offset
        + weights
            .weights
            .iter()
            .zip(observations)
            .map(|(a, o)| a * o.value)
            .sum::<f64>())
}

/// `σ² - C_YZᵀ a`, with round-off negatives down to `-1e-9 σ²` clamped to 0.
pub fn estimation_error(model: &CovarianceModel, pair: &CovariancePair, weights: &[f64]) -> Result<f64> {
    if weights.len() != pair.len() {
        return Err(Error::contract(format!(
            "{} weights for a {}-observation covariance pair",
            weights.len(),
            pair.len()
        )));
    }
    let var = model.variance();
    let explained: f64 = pair.c_yz.iter().zip(weights).map(|(c, a)| c * a).sum();
    let mse = var - explained;
    if !mse.is_finite() || mse < -JITTER * var {
        return Err(Error::numerical(format!("negative estimation error {mse}")));
    }
    Ok(mse.max(0.0))
}

/// Estimated value and its mean squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    pub mse: f64,
}

/// Estimates the field at `(target, time)` from the `k` observations nearest
/// to `target`. With no observations, returns the pooled mean and `σ²`.
pub fn estimate_at(
    model: &CovarianceModel,
    means: &FieldMeans,
    observations: &[Observation],
    target: Location,
    time: f64,
    k: usize,
) -> Result<EstimateResult> {
    let neighbors = select_neighbors(observations, target, k);
    if neighbors.is_empty() {
        return Ok(EstimateResult {
            value: means.pooled,
            mse: model.variance(),
        });
    }
    let pair = assemble_covariances(model, &neighbors, target, time)?;
    let a = solve_weights(&pair)?;
    let mse = estimation_error(model, &pair, &a)?;
    let weights = EstimatorWeights::with_means(a, &neighbors, means);
    Ok(EstimateResult {
        value: estimate(&weights, &neighbors)?,
        mse,
    })
}

/// Mean squared error at `(target, time)` from the `k` nearest observations.
pub fn mse_at(
    model: &CovarianceModel,
    observations: &[Observation],
    target: Location,
    time: f64,
    k: usize,
) -> Result<f64> {
    let neighbors = select_neighbors(observations, target, k);
    if neighbors.is_empty() {
        return Ok(model.variance());
    }
    let pair = assemble_covariances(model, &neighbors, target, time)?;
    let a = solve_weights(&pair)?;
    estimation_error(model, &pair, &a)
}
