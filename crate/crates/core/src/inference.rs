//! Efficiency constants, Fisher information and tail bounds.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::roots::newton_decreasing;

/// Relative size at which an infinite-sum term stops mattering.
const SUM_TOL: f64 = 1e-15;

/// Efficiency of Bernoulli hashing relative to continuous hashing,
/// `lambda^2 / (e^lambda - 1)` with `lambda = c p`.
pub fn are_bernoulli(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(lambda * lambda / lambda.exp_m1())
}

/// Positive root of `lambda = 2 (1 - exp(-lambda))`, the rate maximising
/// the Bernoulli information.
pub fn optimal_lambda() -> f64 {
    let f = |l: f64| (-2.0 * (-l).exp_m1() - l, 2.0 * (-l).exp() - 1.0);
    newton_decreasing(f, 1.6, 1.0, 2.0, 1e-15, 100)
        .expect("bracketed root")
        .root
}

/// Bernoulli rate that is optimal for a prior guess `c0`.
pub fn optimal_bernoulli_p(c0: f64) -> Result<f64> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(domain(format!("prior cardinality must be positive, got {c0}")));
    }
    Ok(-(-optimal_lambda() / c0).exp_m1())
}

/// Limit of `c^2 I(c)` for geometric hashing with parameter `q`:
/// `sum_k q^(2k) (1/q - 1)^2 / (exp(q^(k-1)) - exp(q^k))` over all integers `k`.
pub fn psi_infinity(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("q must lie in (0, 1), got {q}")));
    }
    let ln_q = q.ln();
    let ln_gap = 2.0 * (1.0 / q - 1.0).ln();
    // Below k_min the denominator exceeds exp(745) and terms vanish.
    let k_min = ((800f64).ln() / ln_q).floor() as i64;
    let tail_ratio = q / (1.0 - q);
    let mut sum = 0.0;
    let mut k = k_min;
    loop {
        let a = ((k - 1) as f64 * ln_q).exp();
        let b = (k as f64 * ln_q).exp();
        let log_term = 2.0 * k as f64 * ln_q + ln_gap - a - (-(b - a).exp_m1()).ln();
        let term = log_term.exp();
        sum += term;
        // Past k = 1 the terms decay geometrically with ratio q.
        if k > 1 && term * tail_ratio < SUM_TOL * sum {
            break;
        }
        k += 1;
    }
    Ok(sum)
}

/// Fisher information about `c` in one geometric maximum:
/// `sum_y (A^c ln A - B^c ln B)^2 / (A^c - B^c)` with `A = 1 - q^y`,
/// `B = 1 - q^(y-1)`.
pub fn fisher_info_geometric(c: u64, q: f64) -> Result<f64> {
    if c == 0 {
        return Err(domain("c must be at least 1"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("q must lie in (0, 1), got {q}")));
    }
    let cf = c as f64;
    let ln_q = q.ln();
    let ln_one_minus = |y: f64| (-(y * ln_q).exp()).ln_1p();
    let tail_ratio = q / (1.0 - q);
    // Beyond this index c q^y is small and terms shrink by q each step.
    let y_mode = (cf.ln() / -ln_q).ceil() + 2.0;
    let mut sum = 0.0;
    let mut y = 1.0;
    loop {
        let ln_a = ln_one_minus(y);
        let term = if y == 1.0 {
            (cf * ln_a).exp() * ln_a * ln_a
        } else {
            let ln_b = ln_one_minus(y - 1.0);
            let delta = ln_b - ln_a;
            let one_minus_r = -(cf * delta).exp_m1();
            let diff = -delta + one_minus_r * ln_b;
            (cf * ln_a).exp() * diff * diff / one_minus_r
        };
        sum += term;
        if y > y_mode && term * tail_ratio < SUM_TOL * sum {
            break;
        }
        y += 1.0;
    }
    Ok(sum)
}

/// Chernoff bounds on the relative error of the continuous estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub epsilon: f64,
    pub m: usize,
    /// Bound on `P(c_hat >= (1 + eps) c)`.
    pub upper: f64,
    /// Bound on `P(c_hat <= (1 - eps) c)`.
    pub lower: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `(1 + x) ln(1 + x) - x`, by series near zero.
fn chernoff_rate(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 / 2.0 - x2 * x / 6.0 + x2 * x2 / 12.0 - x2 * x2 * x / 20.0
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

fn chernoff_constants(epsilon: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let e2 = epsilon * epsilon;
    Ok((
        e2 * (1.0 + epsilon) / chernoff_rate(epsilon),
        e2 * (1.0 - epsilon) / chernoff_rate(-epsilon),
    ))
}

pub fn chernoff_bounds(epsilon: f64, m: usize) -> Result<TailBound> {
    if m == 0 {
        return Err(domain("m must be at least 1"));
    }
    let (c1, c2) = chernoff_constants(epsilon)?;
    let x = m as f64 * epsilon * epsilon;
    Ok(TailBound {
        epsilon,
        m,
        upper: (-x / c1).exp(),
        lower: (-x / c2).exp(),
        c1,
        c2,
    })
}

/// Smallest `m` whose two tail bounds are both at most `delta`.
pub fn required_m(epsilon: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    let (c1, c2) = chernoff_constants(epsilon)?;
    let worst = |m: usize| {
        let b = chernoff_bounds(epsilon, m).expect("validated");
        b.upper.max(b.lower)
    };
    let guess = (c1.max(c2) * (1.0 / delta).ln() / (epsilon * epsilon)).ceil();
    let mut m = (guess as usize).max(1);
    while m > 1 && worst(m - 1) <= delta {
        m -= 1;
    }
    while worst(m) > delta {
        m += 1;
    }
    Ok(m)
}

/// Storage for `m` geometric registers at cardinality `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageEstimate {
    pub m: usize,
    /// Expected maximum of `c` geometric variates.
    pub expected_max: f64,
    pub bits_per_register: u32,
    pub total_bits: u64,
}

/// Register size from the expected maximum `log_{1/q} c + gamma / ln(1/q) + 1/2`.
pub fn register_storage_bits(m: usize, c: f64, q: f64) -> Result<StorageEstimate> {
    if m == 0 || !(c >= 1.0) || !(q > 0.0 && q < 1.0) {
        return Err(domain("need m >= 1, c >= 1 and q in (0, 1)"));
    }
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let inv = -q.ln();
    let expected_max = c.ln() / inv + EULER_GAMMA / inv + 0.5;
    let bits = (expected_max + 1.0).log2().ceil().max(1.0) as u32;
    Ok(StorageEstimate {
        m,
        expected_max,
        bits_per_register: bits,
        total_bits: m as u64 * bits as u64,
    })
}
