use crate::error::{Error, Result};
use crate::estimate::{Estimate, EstimatorId};
use crate::hash::HashDistribution;
use crate::stats::{check_level, gamma_interval};

use super::{MaxSketch, MaxState};

/// `-m / sum log F(M_j)` from the summed log-CDF values.
pub fn continuous_mle(sum_log_f: f64, m: usize) -> Result<f64> {
    if !(sum_log_f < 0.0) {
        return Err(Error::Degenerate(
            "all stream maxima sit at the top of the support".into(),
        ));
    }
    Ok(-(m as f64) / sum_log_f)
}

impl MaxSketch {
    /// `log F(M_j)` per stream: `log Y_j` under uniform hashing,
    /// `log(1 - exp(-M_j))` under exponential hashing.
    pub fn log_cdf_values(&self) -> Result<Vec<f64>> {
        let MaxState::Continuous(slots) = &self.state else {
            return Err(Error::Incompatible(
                "continuous estimation needs uniform or exponential hashing".into(),
            ));
        };
        if slots.iter().any(|&s| s == f64::NEG_INFINITY) {
            return Err(Error::EmptySketch);
        }
        Ok(match self.cfg.distribution() {
            HashDistribution::Uniform01 => slots.clone(),
            _ => slots.iter().map(|&x| (-(-x).exp_m1()).ln()).collect(),
        })
    }

    /// `S = -sum log F(M_j)`, the sufficient statistic.
    pub fn sufficient_statistic(&self) -> Result<f64> {
        Ok(-self.log_cdf_values()?.iter().sum::<f64>())
    }

    /// The pivot `-c sum log F(M_j)`, distributed Gamma(m, 1) at the true `c`.
    pub fn pivot(&self, c: f64) -> Result<f64> {
        Ok(c * self.sufficient_statistic()?)
    }

    pub fn estimate_continuous(&self, level: f64) -> Result<Estimate> {
        check_level(level)?;
        let s = self.sufficient_statistic()?;
        let m = self.m();
        let c_hat = continuous_mle(-s, m)?;
        let (g_lo, g_hi) = gamma_interval(m as f64, level);
        Ok(Estimate::new(
            EstimatorId::MaxContinuous,
            m,
            c_hat,
            c_hat / (m as f64).sqrt(),
            (g_lo / s, g_hi / s),
            level,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::HashConfig;

    fn with_slots(slots: Vec<f64>) -> MaxSketch {
        let cfg = HashConfig::new(slots.len(), 0, HashDistribution::Uniform01).unwrap();
        MaxSketch::from_state(cfg, MaxState::Continuous(slots)).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let e = with_slots(vec![-1.0]).estimate_continuous(0.95).unwrap();
        assert!((e.c_hat - 1.0).abs() < 1e-15);
        let e = with_slots(vec![-0.5; 4]).estimate_continuous(0.95).unwrap();
        assert!((e.c_hat - 2.0).abs() < 1e-15);
        assert!((e.std_error - 1.0).abs() < 1e-15);
        assert!(e.ci.0 < e.c_hat && e.c_hat < e.ci.1);
    }

    #[test]
    fn interval_matches_gamma_quantiles() {
        let e = with_slots(vec![-0.25; 16]).estimate_continuous(0.9).unwrap();
        let (lo, hi) = gamma_interval(16.0, 0.9);
        assert!((e.ci.0 - lo / 4.0).abs() < 1e-12);
        assert!((e.ci.1 - hi / 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_slot_is_an_error() {
        let s = with_slots(vec![-1.0, f64::NEG_INFINITY]);
        assert!(matches!(s.estimate_continuous(0.95), Err(Error::EmptySketch)));
        assert!(s.estimate_continuous(1.5).is_err());
    }

    #[test]
    fn exponential_slots_apply_the_cdf() {
        let cfg = HashConfig::new(1, 0, HashDistribution::ExponentialMean1).unwrap();
        // F(M) = 1 - exp(-M) = e^-1 when M = -ln(1 - e^-1).
        let m = -(-(-1f64).exp()).ln_1p();
        let s = MaxSketch::from_state(cfg, MaxState::Continuous(vec![m])).unwrap();
        assert!((s.estimate_continuous(0.95).unwrap().c_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sum_is_reported() {
        assert!(matches!(continuous_mle(0.0, 3), Err(Error::Degenerate(_))));
    }
}
