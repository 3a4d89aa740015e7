//! Maximal-term and `k`-th order-statistic sketches.
//!
//! Every stream `j` keeps the running maximum of `h_j(item)` over the items
//! seen so far (or the `k` largest values). Repeated items never change the
//! state and the state is independent of arrival order, so sketches of
//! disjoint shards merge into the sketch of the union.
//!
//! Each slot also carries a *floor*, a key below which a uniform cannot
//! change the slot. The floor only filters work: the slot itself is always
//! decided by comparing transformed values. Floors are not part of the
//! sketch state and are ignored by equality and serialization.

mod bernoulli;
mod continuous;
mod geometric;
mod kth;

pub use bernoulli::estimate_bernoulli;
pub use continuous::continuous_mle;
pub use geometric::{geometric_initial, geometric_mle, geometric_recursive, geometric_score};
pub use kth::{combine_kth, kth_approx, kth_mle};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, StreamElement};
use crate::hash::{exp_from_unit, geom_from_unit, key_to_unit, HashConfig, HashDistribution,
    HashedItem, ItemHash, KEY_BITS};

/// Per-stream state. The meaning of a continuous slot depends on the hash
/// distribution: `log Y_j` for uniform hashing, the maximum `M_j` itself
/// for exponential hashing. Empty continuous slots hold `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MaxState {
    Continuous(Vec<f64>),
    /// Largest geometric variate per stream, 0 when empty.
    Geometric(Vec<u32>),
    /// Packed bits, stream `j` at bit `j % 64` of word `j / 64`.
    Bernoulli(Vec<u64>),
    /// The `k` largest uniforms per stream, strictly descending.
    TopK { k: usize, lists: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxKind {
    Uniform,
    Exponential,
    Geometric,
    Bernoulli,
    Kth,
}

#[derive(Debug, Clone)]
pub struct MaxSketch {
    cfg: HashConfig,
    state: MaxState,
    floors: Vec<u64>,
}

impl PartialEq for MaxSketch {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.state == other.state
    }
}

const BLOCK: usize = 16;

/// Bit `b` is set when some key of block `b` reaches its floor. At most 64 blocks.
#[inline(always)]
fn reaching_blocks_portable(keys: &[u64], floors: &[u64]) -> u64 {
    let mut hits = 0u64;
    for (b, (kc, fc)) in keys.chunks(BLOCK).zip(floors.chunks(BLOCK)).enumerate() {
        let hit = kc.iter().zip(fc).fold(false, |hit, (k, f)| hit | (k >= f));
        hits |= (hit as u64) << b;
    }
    hits
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq")]
unsafe fn reaching_blocks_avx512(keys: &[u64], floors: &[u64]) -> u64 {
    reaching_blocks_portable(keys, floors)
}

fn reaching_blocks(keys: &[u64], floors: &[u64]) -> u64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512dq") {
        // SAFETY: the required features were detected at runtime.
        return unsafe { reaching_blocks_avx512(keys, floors) };
    }
    reaching_blocks_portable(keys, floors)
}

impl MaxSketch {
    /// Maximal-term sketch for uniform, exponential, geometric or Bernoulli hashing.
    pub fn new(cfg: HashConfig) -> Result<Self> {
        let m = cfg.m();
        let state = match cfg.distribution() {
            HashDistribution::Uniform01 | HashDistribution::ExponentialMean1 => {
                MaxState::Continuous(vec![f64::NEG_INFINITY; m])
            }
            HashDistribution::Geometric { .. } => MaxState::Geometric(vec![0; m]),
            HashDistribution::Bernoulli { .. } => MaxState::Bernoulli(vec![0; m.div_ceil(64)]),
            HashDistribution::PositiveStable { .. } => {
                return Err(domain(
                    "stable hashing is consumed by the projection sketch, not a maximal-term sketch",
                ))
            }
        };
        Ok(Self {
            cfg,
            state,
            floors: vec![0; m],
        })
    }

    /// Sketch of the `k` largest uniform hash values per stream.
    pub fn new_kth(cfg: HashConfig, k: usize) -> Result<Self> {
        if cfg.distribution() != HashDistribution::Uniform01 {
            return Err(domain("k-th order statistic sketches require uniform hashing"));
        }
        if k == 0 {
            return Err(domain("k must be at least 1"));
        }
        Ok(Self {
            cfg,
            state: MaxState::TopK {
                k,
                lists: vec![Vec::with_capacity(k); cfg.m()],
            },
            floors: vec![0; cfg.m()],
        })
    }

    /// Rebuilds a sketch from stored state, checking the slot invariants.
    pub fn from_state(cfg: HashConfig, state: MaxState) -> Result<Self> {
        let m = cfg.m();
        let bad = |msg: String| Err(Error::InvalidState(msg));
        match (&state, cfg.distribution()) {
            (MaxState::Continuous(slots), HashDistribution::Uniform01) => {
                if slots.len() != m {
                    return bad(format!("expected {m} slots, found {}", slots.len()));
                }
                if slots.iter().any(|&s| s.is_nan() || s >= 0.0) {
                    return bad("uniform slots must be logs of values in (0, 1)".into());
                }
            }
            (MaxState::Continuous(slots), HashDistribution::ExponentialMean1) => {
                if slots.len() != m {
                    return bad(format!("expected {m} slots, found {}", slots.len()));
                }
                if slots
                    .iter()
                    .any(|&s| s.is_nan() || (s != f64::NEG_INFINITY && !(s > 0.0 && s.is_finite())))
                {
                    return bad("exponential slots must be positive and finite".into());
                }
            }
            (MaxState::Geometric(slots), HashDistribution::Geometric { .. }) => {
                if slots.len() != m {
                    return bad(format!("expected {m} slots, found {}", slots.len()));
                }
            }
            (MaxState::Bernoulli(words), HashDistribution::Bernoulli { .. }) => {
                if words.len() != m.div_ceil(64) {
                    return bad(format!("expected {} words for {m} bits", m.div_ceil(64)));
                }
                if m % 64 != 0 && words[words.len() - 1] >> (m % 64) != 0 {
                    return bad("bits set beyond stream m".into());
                }
            }
            (MaxState::TopK { k, lists }, HashDistribution::Uniform01) => {
                if *k == 0 || lists.len() != m {
                    return bad(format!("expected {m} lists with k >= 1"));
                }
                for list in lists {
                    if list.len() > *k
                        || list.windows(2).any(|w| !(w[0] > w[1]))
                        || list.iter().any(|&u| !(u > 0.0 && u < 1.0))
                    {
                        return bad("top-k lists must hold at most k strictly descending values in (0, 1)".into());
                    }
                }
            }
            _ => return bad("state does not match the hash distribution".into()),
        }
        let mut sketch = Self {
            cfg,
            state,
            floors: vec![0; m],
        };
        sketch.reset_topk_floors();
        Ok(sketch)
    }

    pub fn config(&self) -> &HashConfig {
        &self.cfg
    }

    pub fn m(&self) -> usize {
        self.cfg.m()
    }

    pub fn state(&self) -> &MaxState {
        &self.state
    }

    pub fn kind(&self) -> MaxKind {
        match (&self.state, self.cfg.distribution()) {
            (MaxState::TopK { .. }, _) => MaxKind::Kth,
            (_, HashDistribution::Uniform01) => MaxKind::Uniform,
            (_, HashDistribution::ExponentialMean1) => MaxKind::Exponential,
            (_, HashDistribution::Geometric { .. }) => MaxKind::Geometric,
            _ => MaxKind::Bernoulli,
        }
    }

    /// `k` for order-statistic sketches, 1 otherwise.
    pub fn k(&self) -> usize {
        match &self.state {
            MaxState::TopK { k, .. } => *k,
            _ => 1,
        }
    }

    /// Bytes of sketch state (excluding configuration).
    pub fn state_bytes(&self) -> usize {
        let m = self.m();
        match &self.state {
            MaxState::Continuous(_) => 8 * m,
            MaxState::Geometric(_) => 4 * m,
            MaxState::Bernoulli(_) => m.div_ceil(8),
            MaxState::TopK { k, .. } => 8 * k * m,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.state {
            MaxState::Continuous(s) => s.iter().all(|&v| v == f64::NEG_INFINITY),
            MaxState::Geometric(s) => s.iter().all(|&v| v == 0),
            MaxState::Bernoulli(w) => w.iter().all(|&v| v == 0),
            MaxState::TopK { lists, .. } => lists.iter().all(|l| l.is_empty()),
        }
    }

    /// Adds one element. Only the item identity matters; `d` must be positive.
    pub fn update(&mut self, item: &[u8], d: i64) -> Result<()> {
        if d <= 0 {
            return Err(Error::UnsupportedDeletion(d));
        }
        let h = ItemHash::new(item, self.cfg.global_salt());
        self.absorb(0..self.cfg.m(), |j| h.key(j));
        Ok(())
    }

    pub fn insert(&mut self, item: &[u8]) {
        let h = ItemHash::new(item, self.cfg.global_salt());
        self.absorb(0..self.cfg.m(), |j| h.key(j));
    }

    pub fn update_element(&mut self, elem: &StreamElement) -> Result<()> {
        self.update(&elem.item, elem.d)
    }

    /// Adds an item whose keys were computed once for several sketches.
    pub fn update_hashed(&mut self, hashed: &HashedItem, d: i64) -> Result<()> {
        if d <= 0 {
            return Err(Error::UnsupportedDeletion(d));
        }
        if hashed.salt() != self.cfg.global_salt() || hashed.keys().len() != self.m() {
            return Err(Error::Incompatible(
                "hashed item was prepared for a different salt or m".into(),
            ));
        }
        let keys = hashed.keys();
        if matches!(self.state, MaxState::Bernoulli(_)) {
            self.absorb(0..keys.len(), |j| keys[j]);
            return Ok(());
        }
        // Blocks where no key reaches its floor leave the state unchanged.
        let span = BLOCK * 64;
        for base in (0..keys.len()).step_by(span) {
            let end = (base + span).min(keys.len());
            let mut hits = reaching_blocks(&keys[base..end], &self.floors[base..end]);
            while hits != 0 {
                let start = base + BLOCK * hits.trailing_zeros() as usize;
                hits &= hits - 1;
                self.absorb(start..(start + BLOCK).min(end), |j| keys[j]);
            }
        }
        Ok(())
    }

    #[inline]
    fn absorb<K: Fn(usize) -> u64>(&mut self, range: std::ops::Range<usize>, key: K) {
        let floors = &mut self.floors;
        match (&mut self.state, self.cfg.distribution()) {
            (MaxState::Continuous(slots), HashDistribution::Uniform01) => {
                for j in range.clone() {
                    let k = key(j);
                    if k >= floors[j] {
                        let v = key_to_unit(k).ln();
                        if v > slots[j] {
                            slots[j] = v;
                        }
                        floors[j] = k + 1;
                    }
                }
            }
            (MaxState::Continuous(slots), _) => {
                for j in range.clone() {
                    let k = key(j);
                    if k >= floors[j] {
                        let v = exp_from_unit(key_to_unit(k));
                        if v > slots[j] {
                            slots[j] = v;
                        }
                        floors[j] = k + 1;
                    }
                }
            }
            (MaxState::Geometric(slots), HashDistribution::Geometric { q }) => {
                let ln_q = q.ln();
                for j in range.clone() {
                    let k = key(j);
                    if k >= floors[j] {
                        let v = geom_from_unit(key_to_unit(k), ln_q);
                        if v > slots[j] {
                            slots[j] = v;
                        }
                        floors[j] = k + 1;
                    }
                }
            }
            (MaxState::Bernoulli(words), HashDistribution::Bernoulli { p }) => {
                for j in range.clone() {
                    if key_to_unit(key(j)) < p {
                        words[j / 64] |= 1u64 << (j % 64);
                    }
                }
            }
            (MaxState::TopK { k, lists }, _) => {
                let k = *k;
                for j in range.clone() {
                    let kj = key(j);
                    if kj >= floors[j] {
                        let list = &mut lists[j];
                        let u = key_to_unit(kj);
                        if let Err(pos) = list.binary_search_by(|x| u.total_cmp(x)) {
                            list.insert(pos, u);
                            list.truncate(k);
                        }
                        if list.len() == k {
                            floors[j] = floor_key(list[k - 1]);
                        }
                    }
                }
            }
            _ => unreachable!("state matches the distribution by construction"),
        }
    }

    fn reset_topk_floors(&mut self) {
        if let MaxState::TopK { k, lists } = &self.state {
            for (f, list) in self.floors.iter_mut().zip(lists) {
                *f = if list.len() == *k { floor_key(list[*k - 1]) } else { 0 };
            }
        }
    }

    pub fn is_compatible(&self, other: &MaxSketch) -> bool {
        self.cfg == other.cfg && self.kind() == other.kind() && self.k() == other.k()
    }

    /// Folds `other` into `self`: slot-wise maximum, bitwise or, or top-k union.
    pub fn merge_from(&mut self, other: &MaxSketch) -> Result<()> {
        if !self.is_compatible(other) {
            return Err(Error::Incompatible(format!(
                "cannot merge {:?} sketch (m = {}, k = {}) with {:?} sketch (m = {}, k = {}) or configurations differ",
                self.kind(),
                self.m(),
                self.k(),
                other.kind(),
                other.m(),
                other.k()
            )));
        }
        match (&mut self.state, &other.state) {
            (MaxState::Continuous(a), MaxState::Continuous(b)) => {
                for (x, &y) in a.iter_mut().zip(b) {
                    if y > *x {
                        *x = y;
                    }
                }
            }
            (MaxState::Geometric(a), MaxState::Geometric(b)) => {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x = (*x).max(y);
                }
            }
            (MaxState::Bernoulli(a), MaxState::Bernoulli(b)) => {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x |= y;
                }
            }
            (MaxState::TopK { k, lists: a }, MaxState::TopK { lists: b, .. }) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = merge_descending(x, y, *k);
                }
            }
            _ => unreachable!("compatibility checked above"),
        }
        for (f, &g) in self.floors.iter_mut().zip(&other.floors) {
            *f = (*f).max(g);
        }
        self.reset_topk_floors();
        Ok(())
    }

    pub fn merge(&self, other: &MaxSketch) -> Result<MaxSketch> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    /// Default estimator for the sketch kind.
    pub fn estimate(&self, level: f64) -> Result<Estimate> {
        match self.kind() {
            MaxKind::Uniform | MaxKind::Exponential => self.estimate_continuous(level),
            MaxKind::Geometric => self.estimate_geometric(level),
            MaxKind::Bernoulli => self.estimate_bernoulli(level),
            MaxKind::Kth => self.estimate_kth(level),
        }
    }
}

/// Smallest key whose uniform exceeds `u`.
fn floor_key(u: f64) -> u64 {
    let x = (u * (1u64 << KEY_BITS) as f64 - 0.5).floor();
    if x < 0.0 {
        0
    } else {
        x as u64 + 1
    }
}

fn merge_descending(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let (mut i, mut j) = (0, 0);
    while out.len() < k && (i < a.len() || j < b.len()) {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x > y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => break,
        };
        out.push(next);
    }
    out
}
