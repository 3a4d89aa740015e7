//! Exact signed sums of terms `d * mant * 2^e` with a 53-bit `mant`.
//!
//! Stable variates are quantized once to `mant * 2^e`; every later addition
//! is exact, so deleting an item removes precisely what inserting it added.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::logspace::SignedLog;

/// Two's-complement integer `sum_i limbs[i] 2^(64 (lo + i))`.
///
/// Normalized: no zero bottom limb, no redundant sign-extension top limb,
/// and zero is the empty vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ExactSum {
    lo: i64,
    limbs: Vec<u64>,
}

/// `(mant, exp2)` with `mant * 2^exp2 ~ e^log_x` and `2^52 <= mant <= 2^53`.
pub fn quantize_exp(log_x: f64) -> (u64, i64) {
    let t = log_x / std::f64::consts::LN_2;
    let e = t.floor();
    let mant = ((t - e).exp2() * (1u64 << 52) as f64).round() as u64;
    (mant, e as i64 - 52)
}

fn top_negative(limbs: &[u64]) -> bool {
    limbs.last().is_some_and(|&t| t >> 63 == 1)
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.is_empty()
    }

    pub fn signum(&self) -> i8 {
        match self.limbs.last() {
            None => 0,
            Some(&t) if t >> 63 == 1 => -1,
            _ => 1,
        }
    }

    /// Limb offset and two's-complement limbs, least significant first.
    pub fn parts(&self) -> (i64, &[u64]) {
        (self.lo, &self.limbs)
    }

    pub fn from_parts(lo: i64, limbs: Vec<u64>) -> Result<Self> {
        let s = Self { lo, limbs };
        let mut n = s.clone();
        n.normalize();
        if n != s {
            return Err(Error::InvalidState("exact accumulator is not normalized".into()));
        }
        Ok(s)
    }

    fn sign_fill(&self) -> u64 {
        if top_negative(&self.limbs) {
            u64::MAX
        } else {
            0
        }
    }

    /// Makes limbs `[lo, hi)` addressable, plus one guard limb on top.
    fn cover(&mut self, lo: i64, hi: i64) {
        if self.limbs.is_empty() {
            self.lo = lo;
        }
        if lo < self.lo {
            let n = (self.lo - lo) as usize;
            self.limbs.splice(0..0, std::iter::repeat_n(0, n));
            self.lo = lo;
        }
        let want = (hi + 1 - self.lo) as usize;
        if want > self.limbs.len() {
            let fill = self.sign_fill();
            self.limbs.resize(want, fill);
        }
    }

    fn normalize(&mut self) {
        while self.limbs.len() >= 2 {
            let n = self.limbs.len();
            let (top, next) = (self.limbs[n - 1], self.limbs[n - 2]);
            if (top == 0 && next >> 63 == 0) || (top == u64::MAX && next >> 63 == 1) {
                self.limbs.pop();
            } else {
                break;
            }
        }
        if self.limbs == [0] {
            self.limbs.clear();
        }
        let zeros = self.limbs.iter().take_while(|&&x| x == 0).count();
        if zeros == self.limbs.len() {
            self.limbs.clear();
            self.lo = 0;
        } else if zeros > 0 {
            self.limbs.drain(..zeros);
            self.lo += zeros as i64;
        }
    }

    /// Adds `sign * mag * 2^exp2`.
    pub fn add_term(&mut self, negative: bool, mag: u128, exp2: i64) {
        if mag == 0 {
            return;
        }
        let li = exp2.div_euclid(64);
        let shift = exp2.rem_euclid(64) as u32;
        let low = mag << shift;
        let high = if shift == 0 { 0 } else { (mag >> (128 - shift)) as u64 };
        let words = [low as u64, (low >> 64) as u64, high];
        self.cover(li, li + 3);
        let start = (li - self.lo) as usize;
        let limbs = &mut self.limbs[start..];
        let mut carry = false;
        for (i, x) in limbs.iter_mut().enumerate() {
            let w = words.get(i).copied().unwrap_or(0);
            if i >= words.len() && !carry {
                break;
            }
            if negative {
                let (r1, b1) = x.overflowing_sub(w);
                let (r2, b2) = r1.overflowing_sub(carry as u64);
                *x = r2;
                carry = b1 || b2;
            } else {
                let (r1, c1) = x.overflowing_add(w);
                let (r2, c2) = r1.overflowing_add(carry as u64);
                *x = r2;
                carry = c1 || c2;
            }
        }
        self.normalize();
    }

    /// The quantized `e^log_x`.
    pub fn from_log(log_x: f64) -> Self {
        let mut s = Self::new();
        s.add_scaled_exp(1, log_x);
        s
    }

    /// Adds `d` times the quantized `e^log_x`.
    pub fn add_scaled_exp(&mut self, d: i64, log_x: f64) {
        let (mant, exp2) = quantize_exp(log_x);
        self.add_term(d < 0, mant as u128 * d.unsigned_abs() as u128, exp2);
    }

    pub fn add(&mut self, other: &ExactSum) {
        let n = other.limbs.len();
        for (i, &w) in other.limbs.iter().enumerate() {
            let exp2 = 64 * (other.lo + i as i64);
            if i + 1 == n {
                let s = w as i64;
                self.add_term(s < 0, s.unsigned_abs() as u128, exp2);
            } else {
                self.add_term(false, w as u128, exp2);
            }
        }
    }

    fn magnitude(&self) -> Vec<u64> {
        if !top_negative(&self.limbs) {
            return self.limbs.clone();
        }
        let mut out: Vec<u64> = self.limbs.iter().map(|x| !x).collect();
        for x in out.iter_mut() {
            let (r, c) = x.overflowing_add(1);
            *x = r;
            if !c {
                break;
            }
        }
        out
    }

    /// `floor(log2 |self|)`, or `None` at zero.
    pub fn floor_log2(&self) -> Option<i64> {
        let owned;
        let mag: &[u64] = if top_negative(&self.limbs) {
            owned = self.magnitude();
            &owned
        } else {
            &self.limbs
        };
        let h = mag.iter().rposition(|&x| x != 0)?;
        Some(64 * (self.lo + h as i64) + 63 - mag[h].leading_zeros() as i64)
    }

    /// Rounded to a sign and a natural-log magnitude.
    pub fn to_signed_log(&self) -> SignedLog {
        let mag = self.magnitude();
        let Some(h) = mag.iter().rposition(|&x| x != 0) else {
            return SignedLog::ZERO;
        };
        let (top, base) = if h == 0 {
            (mag[0] as u128, self.lo)
        } else {
            (((mag[h] as u128) << 64) | mag[h - 1] as u128, self.lo + h as i64 - 1)
        };
        let bits = 127 - top.leading_zeros() as i64;
        let frac = top as f64 / (bits as f64).exp2();
        let log_mag = frac.ln() + (64 * base + bits) as f64 * std::f64::consts::LN_2;
        SignedLog::new(self.signum(), log_mag)
    }
}

/// `0`, or `[-]0x<hex>p<exp>` with the exponent of the lowest limb.
impl fmt::Display for ExactSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mag = self.magnitude();
        let h = mag.iter().rposition(|&x| x != 0).unwrap_or(0);
        if self.signum() < 0 {
            f.write_str("-")?;
        }
        write!(f, "0x{:x}", mag[h])?;
        for w in mag[..h].iter().rev() {
            write!(f, "{w:016x}")?;
        }
        write!(f, "p{}", 64 * self.lo)
    }
}

impl FromStr for ExactSum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad exact accumulator {s:?}"));
        if s == "0" {
            return Ok(Self::new());
        }
        let (negative, rest) = match s.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, s),
        };
        let (hex, exp) = rest
            .strip_prefix("0x")
            .and_then(|r| r.split_once('p'))
            .ok_or_else(bad)?;
        let exp: i64 = exp.parse().map_err(|_| bad())?;
        if hex.is_empty() || exp.rem_euclid(64) != 0 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad());
        }
        let mut out = Self::new();
        let bytes = hex.as_bytes();
        for (i, chunk) in bytes.rchunks(16).enumerate() {
            let w = u64::from_str_radix(std::str::from_utf8(chunk).map_err(|_| bad())?, 16).map_err(|_| bad())?;
            out.add_term(negative, w as u128, exp + 64 * i as i64);
        }
        if out.is_zero() {
            return Err(bad());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn value(s: &ExactSum) -> f64 {
        s.to_signed_log().to_f64()
    }

    #[test]
    fn insert_then_delete_is_exactly_zero() {
        let mut s = ExactSum::new();
        s.add_scaled_exp(3, 812.25);
        s.add_scaled_exp(1, -40.0);
        s.add_scaled_exp(-3, 812.25);
        assert_eq!(s.signum(), 1);
        let (m, e) = quantize_exp(-40.0);
        let mut alone = ExactSum::new();
        alone.add_term(false, m as u128, e);
        assert_eq!(s, alone);
        s.add_scaled_exp(-1, -40.0);
        assert!(s.is_zero());
    }

    #[test]
    fn quantization_is_faithful() {
        for lx in [-700.0, -1.5, 0.0, 0.3, 1.0, 44.0, 3000.0] {
            let mut s = ExactSum::new();
            s.add_scaled_exp(1, lx);
            let back = s.to_signed_log().log_mag();
            assert!((back - lx).abs() <= 1e-15 * lx.abs().max(1.0), "{lx} -> {back}");
        }
    }

    #[test]
    fn signs_and_small_values() {
        let mut s = ExactSum::new();
        s.add_term(true, 5, 0);
        assert_eq!(s.signum(), -1);
        let close = |s: &ExactSum, x: f64| (value(s) - x).abs() <= 1e-15 * x.abs();
        assert!(close(&s, -5.0));
        s.add_term(false, 7, 0);
        assert!(close(&s, 2.0));
        s.add_term(false, 1, -3);
        assert!(close(&s, 2.125));
        assert_eq!(s.floor_log2(), Some(1));
        assert_eq!(ExactSum::new().floor_log2(), None);
    }

    #[test]
    fn text_round_trip() {
        let mut s = ExactSum::new();
        s.add_scaled_exp(-2, 500.0);
        s.add_scaled_exp(1, -90.0);
        let t = s.to_string();
        assert!(t.starts_with("-0x"));
        assert_eq!(t.parse::<ExactSum>().unwrap(), s);
        assert_eq!("0".parse::<ExactSum>().unwrap(), ExactSum::new());
        for bad in ["", "0x", "0x1p3", "1p0", "0xzzp0", "-0x0p0"] {
            assert!(bad.parse::<ExactSum>().is_err(), "{bad}");
        }
        assert!(ExactSum::from_parts(0, vec![0]).is_err());
        let (lo, limbs) = s.parts();
        assert_eq!(ExactSum::from_parts(lo, limbs.to_vec()).unwrap(), s);
    }

    proptest! {
        #[test]
        fn matches_i128_arithmetic(terms in proptest::collection::vec((-1i64 << 40..1i64 << 40, 0i64..60), 1..50)) {
            let mut s = ExactSum::new();
            let mut want: i128 = 0;
            for &(v, sh) in &terms {
                s.add_term(v < 0, v.unsigned_abs() as u128, sh);
                want += (v as i128) << sh;
            }
            let mut back = ExactSum::new();
            back.add_term(want < 0, want.unsigned_abs(), 0);
            prop_assert_eq!(&s, &back);
        }

        #[test]
        fn order_and_merge_do_not_matter(lx in proptest::collection::vec((-300f64..300.0, -3i64..4), 1..40)) {
            let mut fwd = ExactSum::new();
            let mut rev = ExactSum::new();
            let (mut a, mut b) = (ExactSum::new(), ExactSum::new());
            for (i, &(x, d)) in lx.iter().enumerate() {
                fwd.add_scaled_exp(d, x);
                if i % 2 == 0 { a.add_scaled_exp(d, x) } else { b.add_scaled_exp(d, x) }
            }
            for &(x, d) in lx.iter().rev() {
                rev.add_scaled_exp(d, x);
            }
            a.add(&b);
            prop_assert_eq!(&fwd, &rev);
            prop_assert_eq!(&fwd, &a);
            let mut neg = ExactSum::new();
            for &(x, d) in &lx {
                neg.add_scaled_exp(-d, x);
            }
            neg.add(&fwd);
            prop_assert!(neg.is_zero());
        }
    }
}
