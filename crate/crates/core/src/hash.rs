//! Seeded hashing: an item identifier is the seed of a counter-based generator,
//! and stream `j` of the sketch reads the `j`-th output of that generator.
//!
//! The item bytes are digested once with a salted 64-bit hash. The `j`-th
//! uniform is the SplitMix64 finalizer applied to `digest + (j + 1) * GOLDEN`,
//! truncated to 52 bits and centred in its cell so it never equals 0 or 1.
//! Every variate is a pure function of `(item, j, global_salt)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{domain, Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
/// Keys for the auxiliary lanes (second uniform of a stable pair, register baselines).
const LANE_PAIR: u64 = 0xD1B5_4A32_D192_ED03;
const LANE_WORD: u64 = 0x8CB9_2BA7_2F3D_8DD7;

/// Number of significant bits in a uniform key.
pub const KEY_BITS: u32 = 52;
const KEY_SCALE: f64 = 1.0 / (1u64 << KEY_BITS) as f64;

/// Marginal distribution of the hashed variates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HashDistribution {
    Uniform01,
    ExponentialMean1,
    /// `P(X <= x) = 1 - q^x` on `x = 1, 2, ...`.
    Geometric { q: f64 },
    /// Indicator of `U < p`.
    Bernoulli { p: f64 },
    /// Positive strictly stable law with Laplace transform `exp(-s^alpha)`.
    PositiveStable { alpha: f64 },
}

impl HashDistribution {
    fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(domain(format!("{name} must lie strictly inside (0, 1), got {v}")))
            }
        };
        match *self {
            HashDistribution::Uniform01 | HashDistribution::ExponentialMean1 => Ok(()),
            HashDistribution::Geometric { q } => open_unit("q", q),
            HashDistribution::Bernoulli { p } => open_unit("p", p),
            HashDistribution::PositiveStable { alpha } => open_unit("alpha", alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    m: usize,
    global_salt: u64,
    distribution: HashDistribution,
}

impl HashConfig {
    pub fn new(m: usize, global_salt: u64, distribution: HashDistribution) -> Result<Self> {
        if m == 0 {
            return Err(domain("m must be at least 1"));
        }
        if m > u32::MAX as usize {
            return Err(domain(format!("m = {m} exceeds the supported range")));
        }
        distribution.validate()?;
        Ok(Self {
            m,
            global_salt,
            distribution,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn global_salt(&self) -> u64 {
        self.global_salt
    }

    pub fn distribution(&self) -> HashDistribution {
        self.distribution
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j < self.m {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: j, m: self.m })
        }
    }
}

#[inline(always)]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline(always)]
fn counter_output(seed: u64, j: usize) -> u64 {
    mix64(seed.wrapping_add((j as u64).wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// 52-bit key of position `j` in the lane seeded by `seed`.
#[inline(always)]
pub(crate) fn lane_key(seed: u64, j: usize) -> u64 {
    counter_output(seed, j) >> (64 - KEY_BITS)
}

/// Maps a 52-bit key to the open unit interval. Strictly monotone and exact.
#[inline(always)]
pub fn key_to_unit(key: u64) -> f64 {
    (key as f64 + 0.5) * KEY_SCALE
}

/// Salted digest of an item: the seed of its variate sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemHash {
    digest: u64,
}

impl ItemHash {
    pub fn new(item: &[u8], salt: u64) -> Self {
        Self {
            digest: xxh3_64_with_seed(item, salt),
        }
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// 52-bit key of the `j`-th uniform. Larger key means larger uniform.
    #[inline(always)]
    pub fn key(&self, j: usize) -> u64 {
        counter_output(self.digest, j) >> (64 - KEY_BITS)
    }

    #[inline(always)]
    pub fn uniform(&self, j: usize) -> f64 {
        key_to_unit(self.key(j))
    }

    /// Second uniform of the `j`-th pair, drawn from an independent lane.
    #[inline(always)]
    pub fn pair_uniform(&self, j: usize) -> f64 {
        key_to_unit(lane_key(self.pair_seed(), j))
    }

    /// Seed of the lane holding the second uniform of each pair.
    #[inline(always)]
    pub(crate) fn pair_seed(&self) -> u64 {
        mix64(self.digest ^ LANE_PAIR)
    }

    /// A full 64-bit word for register-based sketches (bucket bits plus rank bits).
    #[inline(always)]
    pub fn word(&self) -> u64 {
        mix64(self.digest ^ LANE_WORD)
    }
}

#[inline(always)]
fn fill_keys_portable(digest: u64, out: &mut [u64]) {
    let mut z = digest;
    for k in out.iter_mut() {
        z = z.wrapping_add(GOLDEN);
        *k = mix64(z) >> (64 - KEY_BITS);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq")]
unsafe fn fill_keys_avx512(digest: u64, out: &mut [u64]) {
    fill_keys_portable(digest, out)
}

/// Keys `0..out.len()` of the lane seeded by `digest`.
pub(crate) fn fill_keys(digest: u64, out: &mut [u64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512dq") {
        // SAFETY: the required features were detected at runtime.
        return unsafe { fill_keys_avx512(digest, out) };
    }
    fill_keys_portable(digest, out)
}

/// Reusable buffer of the first `m` uniform keys of one item. Lets several
/// sketches sharing a salt consume one hashing pass.
#[derive(Debug, Clone, Default)]
pub struct HashedItem {
    salt: u64,
    keys: Vec<u64>,
}

impl HashedItem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fill(&mut self, item: &[u8], salt: u64, m: usize) {
        let h = ItemHash::new(item, salt);
        self.salt = salt;
        self.keys.resize(m, 0);
        fill_keys(h.digest, &mut self.keys);
    }

    pub fn salt(&self) -> u64 {
        self.salt
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }
}

/// The `j`-th pseudo-uniform variate of `item`, strictly inside (0, 1).
pub fn uniform_stream(item: &[u8], j: usize, cfg: &HashConfig) -> Result<f64> {
    cfg.check_index(j)?;
    Ok(ItemHash::new(item, cfg.global_salt).uniform(j))
}

fn check_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("uniform variate must lie in (0, 1), got {u}")))
    }
}

/// Inverse CDF of the unit exponential: `-log(1 - u)`.
pub fn exponential_variate(u: f64) -> Result<f64> {
    check_unit(u)?;
    Ok(exp_from_unit(u))
}

#[inline(always)]
pub(crate) fn exp_from_unit(u: f64) -> f64 {
    -(-u).ln_1p()
}

/// Smallest integer `x >= 1` with `1 - q^x >= u`.
pub fn geometric_variate(u: f64, q: f64) -> Result<u32> {
    check_unit(u)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("q must lie in (0, 1), got {q}")));
    }
    Ok(geom_from_unit(u, q.ln()))
}

#[inline(always)]
pub(crate) fn geom_from_unit(u: f64, ln_q: f64) -> u32 {
    let x = ((-u).ln_1p() / ln_q).ceil();
    if x < 1.0 {
        1
    } else if x >= u32::MAX as f64 {
        u32::MAX
    } else {
        x as u32
    }
}

/// `sin(pi x)` for `x` in (0, 1), folded so the argument stays below pi/2.
#[inline(always)]
fn sin_pi(x: f64) -> f64 {
    (PI * x.min(1.0 - x)).sin()
}

/// Kanter's construction of the positive stable law, evaluated in log-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableSampler {
    alpha: f64,
    inv_alpha: f64,
    tail_exp: f64,
}

impl StableSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self {
            alpha,
            inv_alpha: 1.0 / alpha,
            tail_exp: (1.0 - alpha) / alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `log X` with `X = sin(a pi u) / sin(pi u)^(1/a) * (sin((1-a) pi u) / w)^((1-a)/a)`.
    #[inline]
    pub fn log_variate(&self, u: f64, w: f64) -> f64 {
        let a = self.alpha;
        sin_pi(a * u).ln() - self.inv_alpha * sin_pi(u).ln()
            + self.tail_exp * (sin_pi((1.0 - a) * u).ln() - w.ln())
    }

    /// `log A(u)`, where `X = (A(u) / W)^((1-a)/a)` for `W ~ Exp(1)`.
    pub(crate) fn log_kanter_a(&self, u: f64) -> f64 {
        let a = self.alpha;
        (a * sin_pi(a * u).ln() + (1.0 - a) * sin_pi((1.0 - a) * u).ln() - sin_pi(u).ln())
            / (1.0 - a)
    }

    /// Log of the `j`-th hashed stable variate of an item.
    #[inline]
    pub fn hashed(&self, h: &ItemHash, j: usize) -> f64 {
        self.log_variate(h.uniform(j), exp_from_unit(h.pair_uniform(j)))
    }
}

/// Log of a positive `alpha`-stable variate built from a uniform `u` and an
/// independent unit-exponential `w`.
pub fn stable_variate(u: f64, w: f64, alpha: f64) -> Result<f64> {
    check_unit(u)?;
    if !(w > 0.0 && w.is_finite()) {
        return Err(domain(format!("w must be a positive finite exponential variate, got {w}")));
    }
    Ok(StableSampler::new(alpha)?.log_variate(u, w))
}

/// A hashed variate in the representation its sketch stores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variate {
    Real(f64),
    Count(u32),
    Bit(bool),
    /// Natural log of a positive stable variate.
    LogStable(f64),
}

/// The `j`-th variate of `item` under the configured marginal.
pub fn hashed_variate(item: &[u8], j: usize, cfg: &HashConfig) -> Result<Variate> {
    cfg.check_index(j)?;
    let h = ItemHash::new(item, cfg.global_salt);
    let u = h.uniform(j);
    Ok(match cfg.distribution {
        HashDistribution::Uniform01 => Variate::Real(u),
        HashDistribution::ExponentialMean1 => Variate::Real(exp_from_unit(u)),
        HashDistribution::Geometric { q } => Variate::Count(geom_from_unit(u, q.ln())),
        HashDistribution::Bernoulli { p } => Variate::Bit(u < p),
        HashDistribution::PositiveStable { alpha } => {
            Variate::LogStable(StableSampler::new(alpha)?.hashed(&h, j))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize) -> HashConfig {
        HashConfig::new(m, 42, HashDistribution::Uniform01).unwrap()
    }

    #[test]
    fn config_rejects_bad_parameters() {
        assert!(HashConfig::new(0, 1, HashDistribution::Uniform01).is_err());
        assert!(HashConfig::new(4, 1, HashDistribution::Geometric { q: 1.0 }).is_err());
        assert!(HashConfig::new(4, 1, HashDistribution::Bernoulli { p: 0.0 }).is_err());
        assert!(HashConfig::new(4, 1, HashDistribution::PositiveStable { alpha: 1.0 }).is_err());
        assert!(HashConfig::new(4, 1, HashDistribution::PositiveStable { alpha: 0.05 }).is_ok());
    }

    #[test]
    fn uniform_is_deterministic_and_stream_separated() {
        let c = cfg(2);
        let a0 = uniform_stream(b"a", 0, &c).unwrap();
        assert_eq!(a0.to_bits(), uniform_stream(b"a", 0, &c).unwrap().to_bits());
        assert_ne!(a0, uniform_stream(b"a", 1, &c).unwrap());
        assert!(matches!(
            uniform_stream(b"a", 2, &c),
            Err(Error::IndexOutOfRange { index: 2, m: 2 })
        ));
    }

    #[test]
    fn salt_changes_the_sequence() {
        let a = HashConfig::new(1, 1, HashDistribution::Uniform01).unwrap();
        let b = HashConfig::new(1, 2, HashDistribution::Uniform01).unwrap();
        assert_ne!(uniform_stream(b"x", 0, &a).unwrap(), uniform_stream(b"x", 0, &b).unwrap());
    }

    #[test]
    fn unit_mapping_stays_open() {
        assert!(key_to_unit(0) > 0.0);
        assert!(key_to_unit((1u64 << KEY_BITS) - 1) < 1.0);
        assert!(key_to_unit(17) < key_to_unit(18));
    }

    #[test]
    fn exponential_inverse_cdf() {
        let u = 1.0 - (-1.0f64).exp();
        assert!((exponential_variate(u).unwrap() - 1.0).abs() < 1e-15);
        let tiny = exponential_variate(1e-300).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-299);
        assert!(exponential_variate(0.0).is_err());
        assert!(exponential_variate(1.0).is_err());
    }

    #[test]
    fn geometric_inverse_cdf() {
        assert_eq!(geometric_variate(0.4, 0.5).unwrap(), 1);
        assert_eq!(geometric_variate(0.5, 0.5).unwrap(), 1);
        assert_eq!(geometric_variate(0.6, 0.5).unwrap(), 2);
        assert_eq!(geometric_variate(0.75, 0.5).unwrap(), 2);
        assert_eq!(geometric_variate(0.76, 0.5).unwrap(), 3);
        assert!(geometric_variate(0.5, 1.5).is_err());
        assert!(geometric_variate(-0.1, 0.5).is_err());
    }

    #[test]
    fn stable_single_pair_is_finite() {
        for &alpha in &[0.02, 0.05, 0.5, 0.9] {
            for &u in &[1e-15, 0.3, 0.5, 1.0 - 1e-15] {
                let lx = stable_variate(u, 0.7, alpha).unwrap();
                assert!(lx.is_finite(), "alpha={alpha} u={u}");
            }
        }
        assert!(stable_variate(0.5, 0.0, 0.5).is_err());
        assert!(stable_variate(0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn kanter_factorisation_matches_variate() {
        let s = StableSampler::new(0.3).unwrap();
        let (u, w) = (0.37f64, 1.3f64);
        let via_a = (s.log_kanter_a(u) - w.ln()) * (1.0 - 0.3) / 0.3;
        assert!((via_a - s.log_variate(u, w)).abs() < 1e-12);
    }

    #[test]
    fn filled_keys_match_single_keys() {
        let h = ItemHash::new(b"fill", 5);
        let mut buf = HashedItem::new();
        buf.fill(b"fill", 5, 300);
        let mut plain = vec![0; 300];
        fill_keys_portable(h.digest(), &mut plain);
        for j in 0..300 {
            assert_eq!(buf.keys()[j], h.key(j));
            assert_eq!(plain[j], h.key(j));
        }
    }

    #[test]
    fn hashed_variates_follow_distribution() {
        let item = b"item-7";
        let geo = HashConfig::new(3, 9, HashDistribution::Geometric { q: 0.5 }).unwrap();
        let uni = HashConfig::new(3, 9, HashDistribution::Uniform01).unwrap();
        for j in 0..3 {
            let u = uniform_stream(item, j, &uni).unwrap();
            assert_eq!(
                hashed_variate(item, j, &geo).unwrap(),
                Variate::Count(geometric_variate(u, 0.5).unwrap())
            );
        }
    }
}
