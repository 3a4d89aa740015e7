use std::collections::BTreeMap;

use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, EstimatorId};
use crate::hash::HashDistribution;
use crate::inference::psi_infinity;
use crate::roots::{bracket_above, newton_decreasing};
use crate::stats::check_level;

use super::{MaxSketch, MaxState};

const MAX_NEWTON_STEPS: usize = 50;
const NEWTON_TOL: f64 = 1e-9;

/// Distinct maxima with multiplicities, plus `ln(1 - q^y)` and `ln(1 - q^(y-1))`.
struct Profile {
    rows: Vec<(f64, f64, f64)>,
}

impl Profile {
    fn new(ys: &[u32], ln_q: f64) -> Result<Self> {
        if ys.is_empty() || ys.iter().any(|&y| y == 0) {
            return Err(Error::EmptySketch);
        }
        let mut counts = BTreeMap::new();
        for &y in ys {
            *counts.entry(y).or_insert(0u64) += 1;
        }
        let ln_one_minus = |y: u32| (-(y as f64 * ln_q).exp()).ln_1p();
        let rows = counts
            .into_iter()
            .map(|(y, n)| {
                let ln_b = if y == 1 { f64::NEG_INFINITY } else { ln_one_minus(y - 1) };
                (n as f64, ln_one_minus(y), ln_b)
            })
            .collect();
        Ok(Self { rows })
    }

    /// Score and its derivative at `c`.
    fn score(&self, c: f64) -> (f64, f64) {
        let (mut s, mut ds) = (0.0, 0.0);
        for &(n, ln_a, ln_b) in &self.rows {
            if ln_b == f64::NEG_INFINITY {
                s += n * ln_a;
                continue;
            }
            let delta = ln_b - ln_a;
            let one_minus_r = -(c * delta).exp_m1();
            let r = (c * delta).exp();
            s += n * (ln_a - delta * r / one_minus_r);
            ds -= n * delta * delta * r / (one_minus_r * one_minus_r);
        }
        (s, ds)
    }
}

fn ln_q_of(q: f64) -> Result<f64> {
    if q > 0.0 && q < 1.0 {
        Ok(q.ln())
    } else {
        Err(domain(format!("q must lie in (0, 1), got {q}")))
    }
}

/// Score of the geometric-maximum likelihood and its derivative in `c`.
pub fn geometric_score(ys: &[u32], q: f64, c: f64) -> Result<(f64, f64)> {
    Ok(Profile::new(ys, ln_q_of(q)?)?.score(c))
}

/// `-m / sum ln(1 - q^y_j)`, the estimator based on the exponential approximation.
pub fn geometric_recursive(ys: &[u32], q: f64) -> Result<f64> {
    let ln_q = ln_q_of(q)?;
    if ys.is_empty() || ys.iter().any(|&y| y == 0) {
        return Err(Error::EmptySketch);
    }
    let s: f64 = ys.iter().map(|&y| (-(y as f64 * ln_q).exp()).ln_1p()).sum();
    Ok(-(ys.len() as f64) / s)
}

/// Consistent starting value `ln(r/m) / ln(1 - q^n)` with
/// `n = floor(log_q(1/2))` and `r = #{y_j <= n}`, falling back to the
/// recursive estimator when `r` is 0 or `m`.
pub fn geometric_initial(ys: &[u32], q: f64) -> Result<f64> {
    let ln_q = ln_q_of(q)?;
    let n = ((0.5f64).ln() / ln_q).floor();
    let r = ys.iter().filter(|&&y| (y as f64) <= n).count();
    if n >= 1.0 && r > 0 && r < ys.len() {
        Ok((r as f64 / ys.len() as f64).ln() / (-(n * ln_q).exp()).ln_1p())
    } else {
        geometric_recursive(ys, q)
    }
}

/// Maximum likelihood estimate of `c` from geometric maxima.
pub fn geometric_mle(ys: &[u32], q: f64) -> Result<f64> {
    let profile = Profile::new(ys, ln_q_of(q)?)?;
    if ys.iter().all(|&y| y == 1) {
        return Err(Error::Degenerate(
            "every stream maximum equals 1; the likelihood peaks at c = 0".into(),
        ));
    }
    let c0 = geometric_initial(ys, q)?;
    let hi = bracket_above(|c| profile.score(c).0, c0)?;
    let out = newton_decreasing(|c| profile.score(c), c0, 0.0, hi, NEWTON_TOL, MAX_NEWTON_STEPS)
        .map_err(|_| Error::NonConvergence {
            iterations: MAX_NEWTON_STEPS,
            initial: c0,
        })?;
    Ok(out.root)
}

impl MaxSketch {
    fn geometric_parts(&self) -> Result<(&[u32], f64)> {
        match (&self.state, self.cfg.distribution()) {
            (MaxState::Geometric(ys), HashDistribution::Geometric { q }) => Ok((ys, q)),
            _ => Err(Error::Incompatible("not a geometric sketch".into())),
        }
    }

    pub fn estimate_geometric(&self, level: f64) -> Result<Estimate> {
        check_level(level)?;
        let (ys, q) = self.geometric_parts()?;
        let c_hat = geometric_mle(ys, q)?;
        let m = self.m();
        let se = c_hat / (m as f64 * psi_infinity(q)?).sqrt();
        Ok(Estimate::wald(EstimatorId::Geometric, m, c_hat, se, level, 0.0))
    }

    pub fn estimate_geometric_recursive(&self) -> Result<f64> {
        let (ys, q) = self.geometric_parts()?;
        geometric_recursive(ys, q)
    }

    /// `sum ln(1 - q^y_j)`, the log of the sufficient product.
    pub fn geometric_log_product(&self) -> Result<f64> {
        let (ys, q) = self.geometric_parts()?;
        Ok(-(ys.len() as f64) / geometric_recursive(ys, q)?)
    }
}
