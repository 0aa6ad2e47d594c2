//! Brute-force search for the longest update time that meets the accuracy
//! target under a frozen covariance model.
//!
//! In steady state the target sensor's own report is `u` steps old, with `u`
//! uniform over `0..T`, and every peer's report is independently `v_j` steps
//! old with `v_j` uniform over `0..T_j`. The interval-averaged error for a
//! candidate `T` is the mean over `u < T` of the error averaged over the peer
//! ages.

use crate::agent::UpdateBounds;
use crate::estimator::{mse_at, select_neighbors, CovarianceModel, Location, Observation};
use crate::{Error, Result};

/// Peer-age combinations are enumerated exactly up to this count and sampled
/// on a low-discrepancy lattice beyond it.
const MAX_EXACT_COMBINATIONS: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleQuery {
    pub model: CovarianceModel,
    pub positions: Vec<Location>,
    /// Index of the sensor whose update time is searched.
    pub sensor: usize,
    /// Update time of every sensor in grid steps; the target's entry is ignored.
    pub update_times: Vec<u32>,
    pub eps_target: f64,
    pub bounds: UpdateBounds,
    pub time_step: f64,
    pub neighbors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub update_time: u32,
    pub feasible: bool,
    /// Interval-averaged error at `update_time`.
    pub avg_mse: f64,
}

fn validate(q: &OracleQuery) -> Result<()> {
    q.model.validate()?;
    if q.positions.is_empty() || q.sensor >= q.positions.len() {
        return Err(Error::contract(format!(
            "sensor {} out of range for {} positions",
            q.sensor,
            q.positions.len()
        )));
    }
    if q.update_times.len() != q.positions.len() {
        return Err(Error::contract("one update time per sensor is required"));
    }
    if q.update_times.iter().enumerate().any(|(i, &t)| i != q.sensor && t == 0) {
        return Err(Error::contract("peer update times must be >= 1"));
    }
    if !(q.time_step > 0.0) || q.neighbors == 0 {
        return Err(Error::contract("time step and neighbor count must be positive"));
    }
    if !(q.eps_target >= 0.0) {
        return Err(Error::contract(format!("accuracy target must be >= 0, got {}", q.eps_target)));
    }
    Ok(())
}

/// Peer ages to average over, each with equal weight.
fn peer_ages(q: &OracleQuery, limit: u64) -> Vec<Vec<u32>> {
    let peers: Vec<u32> = (0..q.positions.len())
        .filter(|&i| i != q.sensor)
        .map(|i| q.update_times[i])
        .collect();
    let total = peers.iter().try_fold(1u64, |acc, &t| acc.checked_mul(t as u64));
    match total {
        Some(total) if total <= limit => {
            let mut out = Vec::with_capacity(total as usize);
            for mut code in 0..total {
                let mut ages = Vec::with_capacity(peers.len());
                for &t in &peers {
                    ages.push((code % t as u64) as u32);
                    code /= t as u64;
                }
                out.push(ages);
            }
            out
        }
        _ => {
            // Weyl sequence with increments √p mod 1 over distinct primes p
            let alphas: Vec<f64> = (2u32..)
                .filter(|&p| (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0))
                .take(peers.len())
                .map(|p| (p as f64).sqrt().fract())
                .collect();
            (0..limit)
                .map(|k| {
                    peers
                        .iter()
                        .zip(&alphas)
                        .map(|(&t, a)| {
                            let frac = (0.5 + k as f64 * a).fract();
                            ((frac * t as f64) as u32).min(t - 1)
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Average error at the target location when its own report is `u` steps
/// old, for `u = 0..=max_age`.
fn age_profile(q: &OracleQuery, max_age: u32, limit: u64) -> Result<Vec<f64>> {
    let combos = peer_ages(q, limit);
    let peer_index: Vec<usize> = (0..q.positions.len()).filter(|&i| i != q.sensor).collect();
    let target = q.positions[q.sensor];
    let mut obs: Vec<Observation> = q
        .positions
        .iter()
        .enumerate()
        .map(|(i, &location)| Observation {
            sensor_id: i,
            location,
            time: 0.0,
            value: 0.0,
        })
        .collect();
    // the nearest-k set depends only on geometry
    let nearest: Vec<usize> = select_neighbors(&obs, target, q.neighbors)
        .iter()
        .map(|o| o.sensor_id)
        .collect();
    let mut chosen = Vec::with_capacity(nearest.len());
    let mut out = Vec::with_capacity(max_age as usize + 1);
    for u in 0..=max_age {
        obs[q.sensor].time = -(u as f64) * q.time_step;
        let mut sum = 0.0;
        for ages in &combos {
            for (&i, &v) in peer_index.iter().zip(ages) {
                obs[i].time = -(v as f64) * q.time_step;
            }
            chosen.clear();
            chosen.extend(nearest.iter().map(|&i| obs[i]));
            sum += mse_at(&q.model, &chosen, target, 0.0, q.neighbors)?;
        }
        out.push(sum / combos.len() as f64);
    }
    Ok(out)
}

/// Interval-averaged error for every candidate `T`: entry `T - 1` holds the
/// mean over own ages `0..T`, for `T = 1..=bounds.max`.
pub fn interval_mse_profile(query: &OracleQuery) -> Result<Vec<f64>> {
    validate(query)?;
    let profile = age_profile(query, query.bounds.max - 1, MAX_EXACT_COMBINATIONS)?;
    let mut out = Vec::with_capacity(profile.len());
    let mut sum = 0.0;
    for (i, m) in profile.iter().enumerate() {
        sum += m;
        out.push(sum / (i + 1) as f64);
    }
    Ok(out)
}

/// Largest `T` in the bounds whose interval-averaged error is within the
/// target, or the lower bound flagged infeasible when none is.
pub fn oracle_optimal_update_time(query: &OracleQuery) -> Result<OracleResult> {
    let avg = interval_mse_profile(query)?;
    let b = query.bounds;
    let best = (b.min..=b.max).rev().find(|&t| avg[t as usize - 1] <= query.eps_target);
    Ok(match best {
        Some(t) => OracleResult {
            update_time: t,
            feasible: true,
            avg_mse: avg[t as usize - 1],
        },
        None => OracleResult {
            update_time: b.min,
            feasible: false,
            avg_mse: avg[b.min as usize - 1],
        },
    })
}
