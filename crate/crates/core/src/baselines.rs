//! Stochastic-averaging competitors: LogLog, HyperLogLog and MinCount.
//!
//! One 64-bit word per item: the top `log2 m` bits select the bucket, the
//! remaining bits give the rank (LogLog, HLL) or a uniform (MinCount).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, EstimatorId, StreamElement};
use crate::hash::{key_to_unit, ItemHash, KEY_BITS};
use crate::stats::check_level;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineAlgo {
    LogLog,
    HyperLogLog,
    MinCount,
}

impl BaselineAlgo {
    /// Relative standard error constant: `se = k c / sqrt(m)`.
    pub fn error_constant(&self) -> f64 {
        match self {
            BaselineAlgo::LogLog => 1.30,
            BaselineAlgo::HyperLogLog => 1.04,
            BaselineAlgo::MinCount => 1.0,
        }
    }

    fn estimator(&self) -> EstimatorId {
        match self {
            BaselineAlgo::LogLog => EstimatorId::LogLog,
            BaselineAlgo::HyperLogLog => EstimatorId::HyperLogLog,
            BaselineAlgo::MinCount => EstimatorId::MinCount,
        }
    }

    fn min_m(&self) -> usize {
        match self {
            BaselineAlgo::HyperLogLog => 16,
            BaselineAlgo::LogLog => 2,
            BaselineAlgo::MinCount => 1,
        }
    }
}

/// Number of order statistics kept per MinCount bucket.
pub const MINCOUNT_K: usize = 3;

/// Registers: ranks for LogLog and HLL, the smallest uniforms (ascending,
/// padded with 1.0) for MinCount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Registers {
    Ranks(Vec<u8>),
    Mins(Vec<[f64; MINCOUNT_K]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterSketch {
    algo: BaselineAlgo,
    m: usize,
    bucket_bits: u32,
    salt: u64,
    registers: Registers,
}

impl RegisterSketch {
    pub fn new(algo: BaselineAlgo, m: usize, salt: u64) -> Result<Self> {
        if !m.is_power_of_two() || m < algo.min_m() || m > 1 << 24 {
            return Err(domain(format!(
                "{algo:?} needs a power-of-two m in [{}, 2^24], got {m}",
                algo.min_m()
            )));
        }
        let registers = match algo {
            BaselineAlgo::MinCount => Registers::Mins(vec![[1.0; MINCOUNT_K]; m]),
            _ => Registers::Ranks(vec![0; m]),
        };
        Ok(Self {
            algo,
            m,
            bucket_bits: m.trailing_zeros(),
            salt,
            registers,
        })
    }

    pub fn from_registers(algo: BaselineAlgo, m: usize, salt: u64, registers: Registers) -> Result<Self> {
        let mut s = Self::new(algo, m, salt)?;
        let max_rank = (65 - s.bucket_bits) as u8;
        let ok = match (&registers, algo) {
            (Registers::Ranks(r), BaselineAlgo::LogLog | BaselineAlgo::HyperLogLog) => {
                r.len() == m && r.iter().all(|&x| x <= max_rank)
            }
            (Registers::Mins(v), BaselineAlgo::MinCount) => {
                v.len() == m
                    && v.iter().all(|b| {
                        b.iter().all(|&x| x > 0.0 && x <= 1.0)
                            && b.windows(2).all(|w| w[0] < w[1] || w[1] == 1.0 && w[0] == 1.0)
                    })
            }
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidState(format!(
                "registers do not fit a {algo:?} sketch with m = {m}"
            )));
        }
        s.registers = registers;
        Ok(s)
    }

    pub fn algo(&self) -> BaselineAlgo {
        self.algo
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn salt(&self) -> u64 {
        self.salt
    }

    pub fn registers(&self) -> &Registers {
        &self.registers
    }

    /// One byte per rank register, three doubles per MinCount bucket.
    pub fn state_bytes(&self) -> usize {
        match self.registers {
            Registers::Ranks(_) => self.m,
            Registers::Mins(_) => 8 * MINCOUNT_K * self.m,
        }
    }

    pub fn insert(&mut self, item: &[u8]) {
        let w = ItemHash::new(item, self.salt).word();
        let (bucket, rest) = if self.bucket_bits == 0 {
            (0, w)
        } else {
            ((w >> (64 - self.bucket_bits)) as usize, w << self.bucket_bits)
        };
        match &mut self.registers {
            Registers::Ranks(r) => {
                let rank = (rest.leading_zeros() + 1).min(65 - self.bucket_bits) as u8;
                if rank > r[bucket] {
                    r[bucket] = rank;
                }
            }
            Registers::Mins(v) => {
                let u = key_to_unit(rest >> (64 - KEY_BITS));
                let b = &mut v[bucket];
                if u < b[MINCOUNT_K - 1] && !b.contains(&u) {
                    b[MINCOUNT_K - 1] = u;
                    b.sort_by(f64::total_cmp);
                }
            }
        }
    }

    /// Only insertions are meaningful; non-positive `d` is rejected.
    pub fn update(&mut self, item: &[u8], d: i64) -> Result<()> {
        if d <= 0 {
            return Err(Error::UnsupportedDeletion(d));
        }
        self.insert(item);
        Ok(())
    }

    pub fn update_element(&mut self, elem: &StreamElement) -> Result<()> {
        self.update(&elem.item, elem.d)
    }

    pub fn merge_from(&mut self, other: &RegisterSketch) -> Result<()> {
        if self.algo != other.algo || self.m != other.m || self.salt != other.salt {
            return Err(Error::Incompatible(
                "register sketches differ in algorithm, m or salt".into(),
            ));
        }
        match (&mut self.registers, &other.registers) {
            (Registers::Ranks(a), Registers::Ranks(b)) => {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x = (*x).max(y);
                }
            }
            (Registers::Mins(a), Registers::Mins(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    let mut all: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
                    all.sort_by(f64::total_cmp);
                    all.dedup();
                    all.resize(MINCOUNT_K.max(all.len()), 1.0);
                    x.copy_from_slice(&all[..MINCOUNT_K]);
                }
            }
            _ => unreachable!("algorithm equality fixes the register kind"),
        }
        Ok(())
    }

    pub fn merge(&self, other: &RegisterSketch) -> Result<RegisterSketch> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    fn is_empty(&self) -> bool {
        match &self.registers {
            Registers::Ranks(r) => r.iter().all(|&x| x == 0),
            Registers::Mins(v) => v.iter().all(|b| b[0] == 1.0),
        }
    }

    /// Point estimate of the published estimator for this algorithm.
    pub fn point_estimate(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptySketch);
        }
        let mf = self.m as f64;
        Ok(match (&self.registers, self.algo) {
            (Registers::Ranks(r), BaselineAlgo::LogLog) => {
                let mean = r.iter().map(|&x| x as f64).sum::<f64>() / mf;
                loglog_alpha(self.m) * mf * mean.exp2()
            }
            (Registers::Ranks(r), _) => {
                let harmonic: f64 = r.iter().map(|&x| (-(x as f64)).exp2()).sum();
                let raw = hll_alpha(self.m) * mf * mf / harmonic;
                let zeros = r.iter().filter(|&&x| x == 0).count();
                if raw <= 2.5 * mf && zeros > 0 {
                    mf * (mf / zeros as f64).ln()
                } else {
                    raw
                }
            }
            (Registers::Mins(v), _) => v
                .iter()
                .map(|b| (MINCOUNT_K - 1) as f64 / b[MINCOUNT_K - 1])
                .sum(),
        })
    }

    pub fn estimate(&self, level: f64) -> Result<Estimate> {
        check_level(level)?;
        let c_hat = self.point_estimate()?;
        let se = self.algo.error_constant() * c_hat / (self.m as f64).sqrt();
        Ok(Estimate::wald(self.algo.estimator(), self.m, c_hat, se, level, 0.0))
    }
}

/// LogLog bias constant `(m Gamma(1 - 1/m) (2^(1/m) - 1) / ln 2)^(-m)`.
pub fn loglog_alpha(m: usize) -> f64 {
    let mf = m as f64;
    let inv = 1.0 / mf;
    (-mf * (mf.ln() + ln_gamma(1.0 - inv) + (inv * std::f64::consts::LN_2).exp_m1().ln()
        - std::f64::consts::LN_2.ln()))
    .exp()
}

/// HyperLogLog bias constant.
pub fn hll_alpha(m: usize) -> f64 {
    match m {
        16 => 0.673,
        32 => 0.697,
        64 => 0.709,
        _ => 0.7213 / (1.0 + 1.079 / m as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(algo: BaselineAlgo, m: usize, n: u32) -> RegisterSketch {
        let mut s = RegisterSketch::new(algo, m, 4).unwrap();
        for i in 0..n {
            s.insert(&i.to_le_bytes());
        }
        s
    }

    const ALGOS: [BaselineAlgo; 3] = [BaselineAlgo::LogLog, BaselineAlgo::HyperLogLog, BaselineAlgo::MinCount];

    #[test]
    fn duplicates_and_order_do_not_matter() {
        for algo in ALGOS {
            let mut a = RegisterSketch::new(algo, 64, 4).unwrap();
            let mut b = a.clone();
            for i in 0..300u32 {
                a.insert(&i.to_le_bytes());
                a.insert(&i.to_le_bytes());
            }
            for i in (0..300u32).rev() {
                b.insert(&i.to_le_bytes());
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_item_touches_one_register() {
        for algo in ALGOS {
            let s = filled(algo, 64, 1);
            let touched = match s.registers() {
                Registers::Ranks(r) => r.iter().filter(|&&x| x != 0).count(),
                Registers::Mins(v) => v.iter().filter(|b| b[0] != 1.0).count(),
            };
            assert_eq!(touched, 1);
        }
    }

    #[test]
    fn hll_equal_registers() {
        let m = 256;
        let s = RegisterSketch::from_registers(BaselineAlgo::HyperLogLog, m, 0, Registers::Ranks(vec![10; m]))
            .unwrap();
        let expected = hll_alpha(m) * m as f64 * 1024.0;
        assert!((s.point_estimate().unwrap() - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn loglog_constant_approaches_its_limit() {
        assert!((loglog_alpha(1 << 16) - 0.39701).abs() < 1e-4);
        // Gamma-function closed form evaluated independently.
        assert!((loglog_alpha(64) - 0.391_781_118_798_569_4).abs() < 1e-12);
        let m = 512.0;
        let approx = 0.39701 - (2.0 * std::f64::consts::PI.powi(2) + 2f64.ln().powi(2)) / (48.0 * m);
        assert!((loglog_alpha(512) - approx).abs() < 5e-4);
    }

    #[test]
    fn estimates_are_in_the_right_range() {
        for algo in ALGOS {
            let e = filled(algo, 256, 20_000).estimate(0.95).unwrap();
            assert!((e.c_hat / 20_000.0 - 1.0).abs() < 0.3, "{algo:?}: {}", e.c_hat);
        }
    }

    #[test]
    fn merge_equals_single_pass() {
        for algo in ALGOS {
            let whole = filled(algo, 32, 500);
            let mut left = RegisterSketch::new(algo, 32, 4).unwrap();
            let mut right = left.clone();
            for i in 0..500u32 {
                if i % 3 == 0 {
                    left.insert(&i.to_le_bytes());
                }
                if i % 2 == 0 || i % 3 != 0 {
                    right.insert(&i.to_le_bytes());
                }
            }
            assert_eq!(left.merge(&right).unwrap(), whole);
        }
        let a = RegisterSketch::new(BaselineAlgo::LogLog, 32, 4).unwrap();
        let b = RegisterSketch::new(BaselineAlgo::HyperLogLog, 32, 4).unwrap();
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn validation() {
        assert!(RegisterSketch::new(BaselineAlgo::HyperLogLog, 8, 0).is_err());
        assert!(RegisterSketch::new(BaselineAlgo::LogLog, 100, 0).is_err());
        let empty = RegisterSketch::new(BaselineAlgo::MinCount, 16, 0).unwrap();
        assert!(matches!(empty.estimate(0.95), Err(Error::EmptySketch)));
        assert!(RegisterSketch::from_registers(BaselineAlgo::LogLog, 4, 0, Registers::Ranks(vec![70; 4])).is_err());
    }
}
