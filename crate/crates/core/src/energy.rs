//! Sensor energy: expected lifetime, lifetime gain and battery bookkeeping.

use crate::{Error, Result};

/// Energy parameters of a battery-powered sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Initial battery energy, joules.
    pub e0: f64,
    /// Continuous power draw, watts.
    pub p_c: f64,
    /// Expected energy per acquire-and-transmit cycle, joules.
    pub e_tr: f64,
}

impl Default for EnergyParams {
    /// LoRaWAN-class sensor on a 620 mAh lithium cell.
    fn default() -> Self {
        Self {
            e0: 6696.0,
            p_c: 30e-6,
            e_tr: 63.7e-3,
        }
    }
}

impl EnergyParams {
    pub fn new(e0: f64, p_c: f64, e_tr: f64) -> Result<Self> {
        let params = Self { e0, p_c, e_tr };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0.is_finite() && self.p_c.is_finite() && self.e_tr.is_finite()) {
            return Err(Error::contract("energy parameters must be finite"));
        }
        if self.e0 <= 0.0 || self.e_tr <= 0.0 || self.p_c < 0.0 {
            return Err(Error::contract(format!(
                "energy parameters out of range: e0={} p_c={} e_tr={}",
                self.e0, self.p_c, self.e_tr
            )));
        }
        Ok(())
    }
}

/// Expected lifetime in seconds of a sensor transmitting every
/// `update_interval` seconds: `e0 / (p_c + e_tr / T)`.
pub fn expected_lifetime(params: &EnergyParams, update_interval: f64) -> Result<f64> {
    if !(update_interval > 0.0) {
        return Err(Error::contract(format!(
            "update interval must be positive, got {update_interval}"
        )));
    }
    Ok(params.e0 / (params.p_c + params.e_tr / update_interval))
}

/// Ratio of an achieved lifetime to the baseline lifetime.
pub fn lifetime_gain(achieved: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::contract(format!(
            "baseline lifetime must be positive, got {baseline}"
        )));
    }
    Ok(achieved / baseline)
}

/// Remaining battery energy of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAccount {
    remaining: f64,
}

impl EnergyAccount {
    pub fn new(remaining: f64) -> Result<Self> {
        if !(remaining.is_finite() && remaining >= 0.0) {
            return Err(Error::contract(format!(
                "remaining energy must be finite and nonnegative, got {remaining}"
            )));
        }
        Ok(Self { remaining })
    }

    pub fn full(params: &EnergyParams) -> Self {
        Self {
            remaining: params.e0,
        }
    }

    pub fn remaining(&self) -> f64 {
        self.remaining
    }

    pub fn is_dead(&self) -> bool {
        self.remaining <= 0.0
    }
}

/// Debits continuous draw over `elapsed` seconds plus `transmissions`
/// acquire-and-transmit cycles. Energy floors at zero.
pub fn debit_energy(
    account: EnergyAccount,
    params: &EnergyParams,
    elapsed: f64,
    transmissions: u64,
) -> EnergyAccount {
    let drawn = params.p_c * elapsed.max(0.0) + transmissions as f64 * params.e_tr;
    EnergyAccount {
        remaining: (account.remaining - drawn).max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::JULIAN_YEAR_S;

    #[test]
    fn table_one_baselines() {
        let p = EnergyParams::default();
        let temp = expected_lifetime(&p, 809.0).unwrap();
        assert!((temp - 6.16e7).abs() / 6.16e7 < 0.002, "{temp}");
        assert!((temp / JULIAN_YEAR_S - 1.95).abs() < 0.01);
        let hum = expected_lifetime(&p, 606.0).unwrap() / JULIAN_YEAR_S;
        assert!((1.555..=1.575).contains(&hum), "{hum}");
    }

    #[test]
    fn pure_transmission_drain() {
        let p = EnergyParams::new(100.0, 0.0, 1.0).unwrap();
        assert_eq!(expected_lifetime(&p, 1.0).unwrap(), 100.0);
    }

    #[test]
    fn nonpositive_interval_is_rejected() {
        let p = EnergyParams::default();
        assert!(matches!(expected_lifetime(&p, 0.0), Err(Error::Contract(_))));
        assert!(expected_lifetime(&p, -3.0).is_err());
        assert!(expected_lifetime(&p, f64::NAN).is_err());
    }

    #[test]
    fn lifetime_approaches_continuous_limit() {
        let p = EnergyParams::default();
        let limit = p.e0 / p.p_c;
        let l = expected_lifetime(&p, 1e9).unwrap();
        assert!((limit - l) / limit < 1e-3);
        let mut prev = 0.0;
        for t in [1.0, 10.0, 100.0, 809.0, 1e4, 1e6] {
            let l = expected_lifetime(&p, t).unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn gain() {
        assert_eq!(lifetime_gain(7.0, 7.0).unwrap(), 1.0);
        assert!((lifetime_gain(4.0, 1.56).unwrap() - 2.564).abs() < 1e-3);
        assert!((lifetime_gain(3.5, 1.95).unwrap() - 1.795).abs() < 1e-3);
        assert!(lifetime_gain(1.0, 0.0).is_err());
    }

    #[test]
    fn doubled_interval_gain() {
        let p = EnergyParams::default();
        let life = |t| expected_lifetime(&p, t).unwrap();
        // (pc + etr/809) / (pc + etr/1618)
        let eta = lifetime_gain(life(1618.0), life(809.0)).unwrap();
        assert!((eta - 1.5675).abs() < 1e-4, "{eta}");
        // approaches 2 once the continuous draw vanishes
        let q = EnergyParams { p_c: 0.0, ..p };
        let eta = lifetime_gain(expected_lifetime(&q, 1618.0).unwrap(), expected_lifetime(&q, 809.0).unwrap()).unwrap();
        assert!((eta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn debits() {
        let p = EnergyParams::default();
        let one = EnergyAccount::new(1.0).unwrap();
        assert_eq!(debit_energy(one, &p, 0.0, 0).remaining(), 1.0);

        let full = EnergyAccount::full(&p);
        let after = debit_energy(full, &p, 810.0, 1);
        assert!((after.remaining() - 6695.912).abs() < 1e-9);

        let low = EnergyAccount::new(0.01).unwrap();
        let dead = debit_energy(low, &p, 0.0, 1);
        assert_eq!(dead.remaining(), 0.0);
        assert!(dead.is_dead());
    }

    #[test]
    fn cumulative_debit_matches_closed_form() {
        let p = EnergyParams::default();
        let mut acct = EnergyAccount::full(&p);
        let mut elapsed = 0.0;
        let mut tx = 0u64;
        for k in 0..500u64 {
            let dt = 10.0 * ((k % 7) + 1) as f64;
            let n = k % 3;
            acct = debit_energy(acct, &p, dt, n);
            elapsed += dt;
            tx += n;
        }
        let expected = p.e0 - p.p_c * elapsed - p.e_tr * tx as f64;
        assert!((acct.remaining() - expected).abs() < 1e-9);
    }
}
