use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, EstimatorId};
use crate::hash::HashDistribution;
use crate::stats::{check_level, normal_critical, wilson_interval};

use super::{MaxSketch, MaxState};

/// Estimate from `ones` set bits out of `m` under Bernoulli(`p`) hashing.
///
/// `ones == 0` yields `c_hat = 0` with zero standard error and a one-sided
/// upper bound. A saturated array (`ones == m`) only supports a lower
/// confidence bound, which is carried by the error.
pub fn estimate_bernoulli(ones: usize, m: usize, p: f64, level: f64) -> Result<Estimate> {
    check_level(level)?;
    if m == 0 || ones > m {
        return Err(domain(format!("need 0 <= ones <= m with m >= 1, got {ones} of {m}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("p must lie in (0, 1), got {p}")));
    }
    let ln_q = (-p).ln_1p();
    let to_c = |share: f64| (-share).ln_1p() / ln_q;
    let mf = m as f64;
    if ones == m {
        let lower_bound = (-(1.0 - level).powf(1.0 / mf)).ln_1p() / ln_q;
        return Err(Error::Saturated { m, lower_bound });
    }
    if ones == 0 {
        let upper = (1.0 - level).ln() / (mf * ln_q);
        return Ok(Estimate::new(EstimatorId::Bernoulli, m, 0.0, 0.0, (0.0, upper), level));
    }
    let c_hat = to_c(ones as f64 / mf);
    let se = 1.0 / bernoulli_information(c_hat, m, ln_q).sqrt();
    let (p_lo, p_hi) = wilson_interval(ones, m, level);
    let hi = if p_hi >= 1.0 {
        c_hat + normal_critical(level) * se
    } else {
        to_c(p_hi)
    };
    Ok(Estimate::new(
        EstimatorId::Bernoulli,
        m,
        c_hat,
        se,
        (to_c(p_lo), hi),
        level,
    ))
}

/// `m q^c (ln q)^2 / (1 - q^c)`.
fn bernoulli_information(c: f64, m: usize, ln_q: f64) -> f64 {
    let qc = (c * ln_q).exp();
    m as f64 * qc * ln_q * ln_q / -(c * ln_q).exp_m1()
}

impl MaxSketch {
    pub fn ones(&self) -> Result<usize> {
        match &self.state {
            MaxState::Bernoulli(words) => Ok(words.iter().map(|w| w.count_ones() as usize).sum()),
            _ => Err(Error::Incompatible("not a Bernoulli sketch".into())),
        }
    }

    pub fn estimate_bernoulli(&self, level: f64) -> Result<Estimate> {
        let HashDistribution::Bernoulli { p } = self.cfg.distribution() else {
            return Err(Error::Incompatible("not a Bernoulli sketch".into()));
        };
        estimate_bernoulli(self.ones()?, self.m(), p, level)
    }
}
