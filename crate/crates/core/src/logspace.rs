//! Signed log-space numbers for sums whose terms span hundreds of orders of magnitude.

use serde::{Deserialize, Serialize};

/// Below this gap the smaller term cannot move the larger one.
const NEGLIGIBLE_GAP: f64 = -50.0;

/// `sign * exp(log_mag)`, with `sign == 0` meaning exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    sign: i8,
    log_mag: f64,
}

impl Default for SignedLog {
    fn default() -> Self {
        Self::ZERO
    }
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        log_mag: f64::NEG_INFINITY,
    };

    /// Builds from a sign and a log-magnitude; a zero sign or `-inf`
    /// magnitude both collapse to zero.
    pub fn new(sign: i8, log_mag: f64) -> Self {
        if sign == 0 || log_mag == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self {
                sign: sign.signum(),
                log_mag,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self::new(if x > 0.0 { 1 } else { -1 }, x.abs().ln())
        }
    }

    /// `d` as a signed log number, with `log|d| = ln_1p(|d| - 1)` so that
    /// repeated unit additions and a single multi-unit addition round identically.
    pub fn from_count(d: i64) -> Self {
        if d == 0 {
            return Self::ZERO;
        }
        let mag = d.unsigned_abs() as f64;
        Self::new(if d > 0 { 1 } else { -1 }, (mag - 1.0).ln_1p())
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn log_mag(&self) -> f64 {
        self.log_mag
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn to_f64(&self) -> f64 {
        f64::from(self.sign) * self.log_mag.exp()
    }

    /// Product with a positive number given by its log.
    pub fn scale_log(self, log_factor: f64) -> Self {
        Self::new(self.sign, self.log_mag + log_factor)
    }

    pub fn add(self, other: SignedLog) -> SignedLog {
        if other.sign == 0 {
            return self;
        }
        if self.sign == 0 {
            return other;
        }
        let (big, small) = if self.log_mag >= other.log_mag {
            (self, other)
        } else {
            (other, self)
        };
        let gap = small.log_mag - big.log_mag;
        if gap < NEGLIGIBLE_GAP {
            return big;
        }
        if big.sign == small.sign {
            SignedLog::new(big.sign, big.log_mag + gap.exp().ln_1p())
        } else if gap == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog::new(big.sign, big.log_mag + (-gap.exp_m1()).ln())
        }
    }

    pub fn add_assign(&mut self, other: SignedLog) {
        *self = self.add(other);
    }
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum exp(x_i))`, `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY || hi == f64::INFINITY {
        return hi;
    }
    hi + xs.iter().map(|&x| (x - hi).exp()).sum::<f64>().ln()
}
