//! Random-projection sketch `V_j = sum_t d_t X_j(i_t)` with positive stable hashing.
//!
//! Each variate is quantized to `mant * 2^e` and summed exactly, so the
//! variates far outside the double range that small `alpha` produces are
//! representable, and deletions cancel without residue.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, EstimatorId, StreamElement};
use crate::exact::ExactSum;
use crate::hash::{exp_from_unit, fill_keys, key_to_unit, lane_key, HashConfig, HashDistribution,
    ItemHash, StableSampler, KEY_BITS};
use crate::logspace::{log_sum_exp, SignedLog};
use crate::stats::{check_level, gamma_interval};

/// Above this index the pivot is a poor approximation.
pub const ALPHA_WARN: f64 = 0.1;

const CELL_BITS: u32 = 12;
const CELLS: usize = 1 << CELL_BITS;
/// Insert-only sketches skip terms below `e^-SKIP_GAP` of the accumulator.
const SKIP_GAP: f64 = 51.0;

/// Upper bounds of `log A(u)` on the cells `[i, i + 1) / 2^CELL_BITS`.
/// `A` is increasing in `u`, so the right edge bounds the cell.
#[derive(Debug)]
struct CellBounds {
    log_a_upper: Box<[f64; CELLS]>,
}

impl CellBounds {
    fn new(sampler: &StableSampler) -> Self {
        let n = CELLS;
        let log_a_upper: Vec<f64> = (0..n)
            .map(|i| {
                if i + 1 == n {
                    f64::INFINITY
                } else {
                    let v = sampler.log_kanter_a((i + 1) as f64 / n as f64);
                    v + 1e-9 * v.abs().max(1.0)
                }
            })
            .collect();
        Self {
            log_a_upper: log_a_upper.into_boxed_slice().try_into().expect("CELLS entries"),
        }
    }
}

/// `V_j` as exact sums. Insert-only sketches reject deletions and may skip
/// terms too small to move the accumulator's leading 51 nats.
#[derive(Debug, Clone)]
pub struct ProjectionSketch {
    cfg: HashConfig,
    sampler: StableSampler,
    insert_only: bool,
    acc: Vec<ExactSum>,
    bounds: Arc<CellBounds>,
    /// Insert-only: terms whose log bound falls below `skip[j]` are dropped.
    skip: Vec<f64>,
    keys: Vec<u64>,
    pair_keys: Vec<u64>,
    upper: Vec<f64>,
}

/// Upper bounds on `log(d X_j)` from the cell of `u` and a lower bound on `w`.
#[inline(always)]
fn term_bounds_portable(keys: &[u64], pair_keys: &[u64], cells: &[f64; CELLS], ld: f64, tail_exp: f64, out: &mut [f64]) {
    let ln2 = std::f64::consts::LN_2;
    for ((o, &k1), &k2) in out.iter_mut().zip(keys).zip(pair_keys) {
        // w >= u2 >= 2^(floor(log2 key2) - 52).
        let ln_w_lower = (11 - k2.leading_zeros() as i64) as f64 * ln2;
        let cell = (k1 >> (KEY_BITS - CELL_BITS)) as usize & (CELLS - 1);
        *o = ld + tail_exp * (cells[cell] - ln_w_lower);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq,avx512cd")]
unsafe fn term_bounds_avx512(keys: &[u64], pair_keys: &[u64], cells: &[f64; CELLS], ld: f64, tail_exp: f64, out: &mut [f64]) {
    term_bounds_portable(keys, pair_keys, cells, ld, tail_exp, out)
}

fn term_bounds(keys: &[u64], pair_keys: &[u64], cells: &[f64; CELLS], ld: f64, tail_exp: f64, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512dq") && std::arch::is_x86_feature_detected!("avx512cd") {
        // SAFETY: the required features were detected at runtime.
        return unsafe { term_bounds_avx512(keys, pair_keys, cells, ld, tail_exp, out) };
    }
    term_bounds_portable(keys, pair_keys, cells, ld, tail_exp, out)
}

fn skip_threshold(acc: &ExactSum) -> f64 {
    match acc.floor_log2() {
        Some(fl) => fl as f64 * std::f64::consts::LN_2 - SKIP_GAP,
        None => f64::NEG_INFINITY,
    }
}

impl PartialEq for ProjectionSketch {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.insert_only == other.insert_only && self.acc == other.acc
    }
}

fn sampler_of(cfg: &HashConfig) -> Result<StableSampler> {
    match cfg.distribution() {
        HashDistribution::PositiveStable { alpha } => StableSampler::new(alpha),
        _ => Err(domain("projection sketches require positive stable hashing")),
    }
}

impl ProjectionSketch {
    /// A sketch accepting any integer quantities.
    pub fn new(cfg: HashConfig) -> Result<Self> {
        Self::with_mode(cfg, false)
    }

    /// A faster sketch for cash-register streams.
    pub fn insert_only(cfg: HashConfig) -> Result<Self> {
        Self::with_mode(cfg, true)
    }

    pub fn with_mode(cfg: HashConfig, insert_only: bool) -> Result<Self> {
        let sampler = sampler_of(&cfg)?;
        Ok(Self {
            cfg,
            sampler,
            insert_only,
            acc: vec![ExactSum::new(); cfg.m()],
            bounds: Arc::new(CellBounds::new(&sampler)),
            skip: vec![f64::NEG_INFINITY; cfg.m()],
            keys: Vec::new(),
            pair_keys: Vec::new(),
            upper: Vec::new(),
        })
    }

    pub fn from_state(cfg: HashConfig, insert_only: bool, acc: Vec<ExactSum>) -> Result<Self> {
        if acc.len() != cfg.m() {
            return Err(Error::InvalidState(format!(
                "expected {} accumulators, found {}",
                cfg.m(),
                acc.len()
            )));
        }
        if insert_only && acc.iter().any(|a| a.signum() < 0) {
            return Err(Error::InvalidState(
                "insert-only sketch with a negative accumulator".into(),
            ));
        }
        let mut s = Self::with_mode(cfg, insert_only)?;
        s.skip = acc.iter().map(skip_threshold).collect();
        s.acc = acc;
        Ok(s)
    }

    pub fn config(&self) -> &HashConfig {
        &self.cfg
    }

    pub fn m(&self) -> usize {
        self.cfg.m()
    }

    pub fn alpha(&self) -> f64 {
        self.sampler.alpha()
    }

    pub fn is_insert_only(&self) -> bool {
        self.insert_only
    }

    pub fn accumulators(&self) -> &[ExactSum] {
        &self.acc
    }

    /// Accumulators rounded to sign and log-magnitude.
    pub fn log_accumulators(&self) -> Vec<SignedLog> {
        self.acc.iter().map(ExactSum::to_signed_log).collect()
    }

    /// Limbs plus one offset word per accumulator.
    pub fn state_bytes(&self) -> usize {
        self.acc.iter().map(|a| 8 * (a.parts().1.len() + 1)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.acc.iter().all(ExactSum::is_zero)
    }

    /// Adds `d` times the item's stable variates. Negative `d` deletes.
    pub fn update(&mut self, item: &[u8], d: i64) -> Result<()> {
        if d == 0 {
            return Ok(());
        }
        if d < 0 && self.insert_only {
            return Err(Error::UnsupportedDeletion(d));
        }
        let h = ItemHash::new(item, self.cfg.global_salt());
        if self.insert_only {
            self.add_filtered(&h, d);
            return Ok(());
        }
        let pair = h.pair_seed();
        for (j, acc) in self.acc.iter_mut().enumerate() {
            let log_x = self
                .sampler
                .log_variate(key_to_unit(h.key(j)), exp_from_unit(key_to_unit(lane_key(pair, j))));
            acc.add_scaled_exp(d, log_x);
        }
        Ok(())
    }

    /// Adds `d > 0` times the variates, skipping terms that cannot reach the
    /// accumulator's leading bits.
    fn add_filtered(&mut self, h: &ItemHash, d: i64) {
        let m = self.m();
        self.keys.resize(m, 0);
        self.pair_keys.resize(m, 0);
        fill_keys(h.digest(), &mut self.keys);
        fill_keys(h.pair_seed(), &mut self.pair_keys);
        self.upper.resize(m, 0.0);
        let tail_exp = (1.0 - self.alpha()) / self.alpha();
        term_bounds(&self.keys, &self.pair_keys, &self.bounds.log_a_upper, (d as f64).ln(), tail_exp, &mut self.upper);
        for j in 0..m {
            if self.upper[j] < self.skip[j] {
                continue;
            }
            let (k1, k2) = (self.keys[j], self.pair_keys[j]);
            let log_x = self
                .sampler
                .log_variate(key_to_unit(k1), exp_from_unit(key_to_unit(k2)));
            let acc = &mut self.acc[j];
            acc.add_scaled_exp(d, log_x);
            self.skip[j] = skip_threshold(acc);
        }
    }

    pub fn update_element(&mut self, elem: &StreamElement) -> Result<()> {
        self.update(&elem.item, elem.d)
    }

    pub fn merge_from(&mut self, other: &ProjectionSketch) -> Result<()> {
        if self.cfg != other.cfg || self.insert_only != other.insert_only {
            return Err(Error::Incompatible(
                "projection sketches differ in m, alpha, salt or mode".into(),
            ));
        }
        for ((a, b), t) in self.acc.iter_mut().zip(&other.acc).zip(&mut self.skip) {
            a.add(b);
            *t = skip_threshold(a);
        }
        Ok(())
    }

    pub fn merge(&self, other: &ProjectionSketch) -> Result<ProjectionSketch> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    /// `log V_j` for every stream, requiring all accumulators positive.
    pub fn log_values(&self) -> Result<Vec<f64>> {
        if let Some(j) = self.acc.iter().position(|a| a.signum() <= 0) {
            return Err(Error::InvalidState(format!(
                "accumulator {j} is not positive; estimation needs non-negative item totals"
            )));
        }
        Ok(self.acc.iter().map(|a| a.to_signed_log().log_mag()).collect())
    }

    /// `log sum V_j^(-alpha)`.
    fn log_power_sum(&self) -> Result<f64> {
        let a = self.alpha();
        let terms: Vec<f64> = self.log_values()?.iter().map(|lv| -a * lv).collect();
        Ok(log_sum_exp(&terms))
    }

    /// `c sum V_j^(-alpha)`, approximately Gamma(m, 1) for small `alpha`.
    pub fn pivot(&self, c: f64) -> Result<f64> {
        Ok(c * self.log_power_sum()?.exp())
    }

    /// `m / sum V_j^(-alpha)` with the Gamma pivot interval.
    pub fn estimate(&self, level: f64) -> Result<Estimate> {
        check_level(level)?;
        if self.alpha() > ALPHA_WARN {
            log::warn!(
                "alpha = {} exceeds {ALPHA_WARN}; the Gamma pivot is only approximate",
                self.alpha()
            );
        }
        let log_s = self.log_power_sum()?;
        let m = self.m();
        let c_hat = m as f64 * (-log_s).exp();
        let (g_lo, g_hi) = gamma_interval(m as f64, level);
        Ok(Estimate::new(
            EstimatorId::Projection,
            m,
            c_hat,
            c_hat / (m as f64).sqrt(),
            (g_lo * (-log_s).exp(), g_hi * (-log_s).exp()),
            level,
        ))
    }

    /// `(median V / median F_alpha)^alpha`, the sample median taken on `log V`.
    pub fn median_estimate(&self) -> Result<f64> {
        let lv = self.log_values()?;
        let med = crate::stats::median(&lv);
        let a = self.alpha();
        Ok((a * (med - stable_median(a)?)).exp())
    }
}

/// Log of the median of the positive stable law with Laplace transform
/// `exp(-s^alpha)`. Cached per `alpha`.
///
/// Uses `P(X <= x) = int_0^1 exp(-A(u) x^(-alpha/(1-alpha))) du`, solved for
/// one half by bisection on the transformed argument.
pub fn stable_median(alpha: f64) -> Result<f64> {
    let sampler = StableSampler::new(alpha)?;
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().expect("cache lock").get(&alpha.to_bits()) {
        return Ok(v);
    }
    let log_a0 = (alpha * alpha.ln() + (1.0 - alpha) * (1.0 - alpha).ln()) / (1.0 - alpha);
    let log_a = |u: f64| {
        if u <= 0.0 {
            log_a0
        } else if u >= 1.0 {
            f64::INFINITY
        } else {
            sampler.log_kanter_a(u)
        }
    };
    let cdf = |s: f64| adaptive_simpson(&|u| (-(log_a(u) - s).exp()).exp(), 0.0, 1.0, 1e-13);
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let log_median = s * (1.0 - alpha) / alpha;
    cache
        .lock()
        .expect("cache lock")
        .insert(alpha.to_bits(), log_median);
    Ok(log_median)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    // Split once so a flat start cannot fool the first error estimate.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, f1, fm) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            step(f, x0, x1, f0, fm, f1, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Outcome of building both sketch families from the same stable variates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledRun {
    pub alpha: f64,
    /// `V_j^(-alpha) - exp(-1 / M_j)`-style residuals, using `G(y) ~ exp(-1/y)`
    /// with `M_j = max X^alpha`.
    pub residuals: Vec<f64>,
    /// Final `log(V_j^alpha / M_j)` per stream.
    pub log_ratios: Vec<f64>,
    /// `alpha log(sum d)`, the upper end of the sandwich.
    pub log_upper: f64,
    /// Whether `0 <= log(V^alpha / M) <= alpha log(sum d)` held after every element.
    pub sandwich_held: bool,
    pub elements: usize,
}

/// Runs one insertion-only stream through a projection accumulator and a
/// maximal-term sketch of `X^alpha`, checking the sandwich after every element.
pub fn coupled_residuals(stream: &[StreamElement], cfg: &HashConfig) -> Result<CoupledRun> {
    let sampler = sampler_of(cfg)?;
    let alpha = sampler.alpha();
    let m = cfg.m();
    let mut acc = vec![SignedLog::ZERO; m];
    let mut max_log_x = vec![f64::NEG_INFINITY; m];
    let mut total = 0f64;
    let mut held = true;
    for elem in stream {
        if elem.d <= 0 {
            return Err(Error::UnsupportedDeletion(elem.d));
        }
        total += elem.d as f64;
        let h = ItemHash::new(&elem.item, cfg.global_salt());
        let scale = SignedLog::from_count(elem.d);
        let log_upper = alpha * total.ln();
        for j in 0..m {
            let lx = sampler.hashed(&h, j);
            acc[j].add_assign(scale.scale_log(lx));
            if lx > max_log_x[j] {
                max_log_x[j] = lx;
            }
            let r = alpha * (acc[j].log_mag() - max_log_x[j]);
            if !(r >= 0.0 && r <= log_upper * (1.0 + 1e-12) + 1e-12) {
                held = false;
            }
        }
    }
    if stream.is_empty() {
        return Err(Error::EmptySketch);
    }
    let residuals = acc
        .iter()
        .zip(&max_log_x)
        .map(|(v, &mx)| (-alpha * v.log_mag()).exp() - (-alpha * mx).exp())
        .collect();
    let log_ratios = acc
        .iter()
        .zip(&max_log_x)
        .map(|(v, &mx)| alpha * (v.log_mag() - mx))
        .collect();
    Ok(CoupledRun {
        alpha,
        residuals,
        log_ratios,
        log_upper: alpha * total.ln(),
        sandwich_held: held,
        elements: stream.len(),
    })
}
