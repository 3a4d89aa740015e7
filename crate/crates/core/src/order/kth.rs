use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, EstimatorId};
use crate::roots::{bracket_above, newton_decreasing};
use crate::stats::check_level;

use super::{MaxSketch, MaxState};

/// Large-`c` closed form `k / (1 - (prod y_j)^(1/m))`.
pub fn kth_approx(ys: &[f64], k: usize) -> Result<f64> {
    let l = sum_logs(ys)?;
    Ok(k as f64 / -(l / ys.len() as f64).exp_m1())
}

fn sum_logs(ys: &[f64]) -> Result<f64> {
    if ys.is_empty() {
        return Err(Error::EmptySketch);
    }
    if ys.iter().any(|&y| !(y > 0.0 && y < 1.0)) {
        return Err(domain("order statistics must lie in (0, 1)"));
    }
    Ok(ys.iter().map(|y| y.ln()).sum())
}

/// Maximum likelihood estimate of `c` from the `k`-th largest value of each
/// of `m` uniform streams: the root of
/// `sum log y_j + m sum_{i=1..k} 1 / (c - i + 1) = 0` on `c > k - 1`.
pub fn kth_mle(ys: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    let l = sum_logs(ys)?;
    let m = ys.len() as f64;
    let kf = k as f64;
    let score = |c: f64| {
        let (mut s, mut ds) = (0.0, 0.0);
        for i in 0..k {
            let t = 1.0 / (c - i as f64);
            s += t;
            ds -= t * t;
        }
        (l + m * s, m * ds)
    };
    let c0 = kf / -(l / m).exp_m1();
    let lo = kf - 1.0;
    let hi = bracket_above(|c| score(c).0, c0.max(kf))?;
    Ok(newton_decreasing(score, c0, lo, hi, 1e-13, 200)?.root)
}

/// Pools two `k`-th order estimates built from `m1` and `m2` streams.
pub fn combine_kth(c1: f64, m1: usize, c2: f64, m2: usize, k: usize) -> Result<f64> {
    let kf = k as f64;
    if k == 0 || m1 == 0 {
        return Err(domain("k and m1 must be at least 1"));
    }
    if !(c1 > kf) || (m2 > 0 && !(c2 > kf)) {
        return Err(domain(format!("estimates must exceed k = {k}")));
    }
    let mut log_prod = m1 as f64 * (-kf / c1).ln_1p();
    if m2 > 0 {
        log_prod += m2 as f64 * (-kf / c2).ln_1p();
    }
    Ok(kf / -(log_prod / (m1 + m2) as f64).exp_m1())
}

impl MaxSketch {
    /// The `k`-th largest hash value of every stream.
    pub fn kth_values(&self) -> Result<Vec<f64>> {
        let MaxState::TopK { k, lists } = &self.state else {
            return Err(Error::Incompatible("not an order-statistic sketch".into()));
        };
        if lists.iter().all(|l| l.is_empty()) {
            return Err(Error::EmptySketch);
        }
        lists
            .iter()
            .map(|l| {
                l.get(k - 1).copied().ok_or_else(|| {
                    Error::InsufficientData(format!(
                        "a stream holds {} of {k} values, so c < k",
                        l.len()
                    ))
                })
            })
            .collect()
    }

    pub fn estimate_kth(&self, level: f64) -> Result<Estimate> {
        check_level(level)?;
        let k = self.k();
        let c_hat = kth_mle(&self.kth_values()?, k)?;
        let m = self.m();
        let se = c_hat / ((k * m) as f64).sqrt();
        Ok(Estimate::wald(EstimatorId::MaxKth, m, c_hat, se, level, k as f64))
    }
}
