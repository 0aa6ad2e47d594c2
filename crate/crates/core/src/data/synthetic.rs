//! Gaussian fields with the separable exponential covariance.
//!
//! On a grid of `ts` seconds the field is a spatially mixed first-order
//! autoregression
//!
//! ```text
//! z(k+1) = φ z(k) + σ √(1 - φ²) L ξ(k),   φ = exp(-θ_time ts)
//! ```
//!
//! with `L Lᵀ = R`, `R_ij = exp(-θ_space ‖x_i - x_j‖)` and `z(0) = σ L ξ`.
//! Its stationary covariance is `σ² R_ij φ^|k-l|`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GriddedSeries, Quantity, SensorLocation};
use crate::estimator::{distance, CovarianceModel, JITTER};
use crate::{Error, Result};

pub const MAX_SYNTHETIC_SENSORS: usize = 16;

/// Lower-triangular factor of a positive semidefinite matrix (row-major,
/// `n x n`). Pivots within `tol` of zero get a zero column, so rank-deficient
/// matrices factor exactly. `None` if a pivot is below `-tol`.
pub fn psd_cholesky(a: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let d = a[j * n + j] - (0..j).map(|k| l[j * n + k].powi(2)).sum::<f64>();
        if d < -tol {
            return None;
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / pivot;
        }
    }
    Some(l)
}

/// Draws a zero-mean field over `horizon` grid steps at `sensors`.
pub fn generate_synthetic_field(
    model: &CovarianceModel,
    sensors: &[SensorLocation],
    horizon: usize,
    ts: f64,
    seed: u64,
) -> Result<GriddedSeries> {
    model.validate()?;
    if sensors.len() > MAX_SYNTHETIC_SENSORS {
        return Err(Error::contract(format!(
            "synthetic fields support at most {MAX_SYNTHETIC_SENSORS} sensors, got {}",
            sensors.len()
        )));
    }
    if !(ts > 0.0) {
        return Err(Error::contract(format!("time step must be positive, got {ts}")));
    }
    let n = sensors.len();
    let mut corr = vec![0.0; n * n];
    for (i, a) in sensors.iter().enumerate() {
        for (j, b) in sensors.iter().enumerate() {
            corr[i * n + j] = model.correlation(distance(&a.location(), &b.location()), 0.0)?;
        }
    }
    let l = psd_cholesky(&corr, n, 1e-12)
        .or_else(|| {
            let jittered: Vec<f64> = corr
                .iter()
                .enumerate()
                .map(|(k, c)| if k % (n + 1) == 0 { c + JITTER } else { *c })
                .collect();
            psd_cholesky(&jittered, n, 1e-12)
        })
        .ok_or_else(|| Error::numerical("spatial correlation matrix is not positive semidefinite"))?;

    let phi = if model.theta_time == 0.0 { 1.0 } else { (-model.theta_time * ts).exp() };
    let innovation = model.sigma * (1.0 - phi * phi).max(0.0).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = vec![0.0; n];
    let mut mix = |rng: &mut ChaCha8Rng, scale: f64, out: &mut Vec<f64>| {
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        out.clear();
        out.extend((0..n).map(|i| scale * (0..=i).map(|k| l[i * n + k] * xi[k]).sum::<f64>()));
    };

    let mut values = vec![Vec::with_capacity(horizon); n];
    let mut z = Vec::with_capacity(n);
    let mut shock = Vec::with_capacity(n);
    if horizon > 0 {
        mix(&mut rng, model.sigma, &mut z);
    }
    for step in 0..horizon {
        if step > 0 {
            mix(&mut rng, innovation, &mut shock);
            for (zi, e) in z.iter_mut().zip(&shock) {
                *zi = phi * *zi + e;
            }
        }
        for (series, zi) in values.iter_mut().zip(&z) {
            series.push(*zi);
        }
    }
    Ok(GriddedSeries {
        quantity: Quantity::Synthetic,
        time_step: ts,
        sensors: sensors.to_vec(),
        values,
    })
}
