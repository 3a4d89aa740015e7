//! Simulated streams, the exact-count oracle and replicated experiments.

mod analyze;
mod experiment;

pub use analyze::{analyze, run_equivalence, AnalyzeGrid, AnalyzeTable, EquivalenceReport, EquivalenceRow};
pub use experiment::{
    run_experiment, run_experiment_timed, AlgoSummary, ExperimentReport, ExperimentTiming, ReplicateRecord,
    REPORT_SCHEMA,
};

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::StreamElement;
use crate::hash::mix64;

/// Algorithms an experiment can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    MaxUniform,
    MaxExp,
    MaxGeom,
    GeomRecursive,
    Kth,
    Bernoulli,
    Projection,
    ProjectionMedian,
    Loglog,
    Hll,
    Mincount,
}

/// An algorithm with optional parameter overrides. Accepts either a bare
/// name (`"hll"`) or an object (`{"algo": "max-geom", "q": 0.5}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgoSpec {
    Plain(Algo),
    Tuned {
        algo: Algo,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
}

impl AlgoSpec {
    pub fn algo(&self) -> Algo {
        match *self {
            AlgoSpec::Plain(a) | AlgoSpec::Tuned { algo: a, .. } => a,
        }
    }

    pub fn q(&self, cfg: &ExperimentConfig) -> f64 {
        match *self {
            AlgoSpec::Tuned { q: Some(q), .. } => q,
            _ => cfg.q,
        }
    }

    pub fn alpha(&self, cfg: &ExperimentConfig) -> f64 {
        match *self {
            AlgoSpec::Tuned { alpha: Some(a), .. } => a,
            _ => cfg.alpha,
        }
    }

    pub fn k(&self, cfg: &ExperimentConfig) -> usize {
        match *self {
            AlgoSpec::Tuned { k: Some(k), .. } => k,
            _ => cfg.k,
        }
    }

    /// Explicit `p`, else the configured one, else the optimal rate for `c`.
    pub fn p(&self, cfg: &ExperimentConfig) -> f64 {
        match *self {
            AlgoSpec::Tuned { p: Some(p), .. } => p,
            _ => cfg.p.unwrap_or_else(|| {
                crate::inference::optimal_bernoulli_p(cfg.c as f64).expect("c >= 1")
            }),
        }
    }
}

impl From<Algo> for AlgoSpec {
    fn from(a: Algo) -> Self {
        AlgoSpec::Plain(a)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit variant");
        f.write_str(v.as_str().expect("string tag"))
    }
}

impl fmt::Display for AlgoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AlgoSpec::Plain(a) => write!(f, "{a}"),
            AlgoSpec::Tuned { algo, q, p, alpha, k } => {
                write!(f, "{algo}")?;
                let parts: Vec<String> = [("q", q), ("p", p), ("alpha", alpha)]
                    .iter()
                    .filter_map(|(n, v)| v.map(|x| format!("{n}={x}")))
                    .chain(k.map(|k| format!("k={k}")))
                    .collect();
                if !parts.is_empty() {
                    write!(f, "({})", parts.join(","))?;
                }
                Ok(())
            }
        }
    }
}

/// How often each distinct item occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RepeatModel {
    /// Every item appears `r` times.
    Fixed { r: u32 },
    /// Pareto(1.5) repeat counts, capped at `max`.
    HeavyTailed { max: u32 },
    #[default]
    Once,
}

/// Quantities attached to each occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuantityModel {
    #[default]
    Unit,
    /// Uniform on `1..=max`.
    RandomPositive { max: i64 },
    /// Unit insertions plus `ghosts` extra items that are inserted and later
    /// fully deleted, so the live set still has `c` items.
    InsertDelete { ghosts: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub c: u64,
    pub m: usize,
    pub algos: Vec<AlgoSpec>,
    #[serde(default)]
    pub repeats: RepeatModel,
    #[serde(default)]
    pub quantities: QuantityModel,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    /// Bernoulli rate; defaults to the optimal rate for `c`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_q() -> f64 {
    10.0 / 11.0
}

fn default_k() -> usize {
    3
}

fn default_level() -> f64 {
    0.95
}

impl ExperimentConfig {
    pub fn new(c: u64, m: usize, algos: &[Algo], replicates: usize, seed: u64) -> Self {
        Self {
            c,
            m,
            algos: algos.iter().map(|&a| a.into()).collect(),
            repeats: RepeatModel::Once,
            quantities: QuantityModel::Unit,
            replicates,
            seed,
            alpha: default_alpha(),
            q: default_q(),
            p: None,
            k: default_k(),
            level: default_level(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return Err(domain("c must be at least 1"));
        }
        if self.m == 0 {
            return Err(domain("m must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(domain("replicates must be at least 1"));
        }
        if self.algos.is_empty() {
            return Err(domain("at least one algorithm is required"));
        }
        match self.repeats {
            RepeatModel::Fixed { r: 0 } => return Err(domain("repeat count must be at least 1")),
            RepeatModel::HeavyTailed { max: 0 } => return Err(domain("repeat cap must be at least 1")),
            _ => {}
        }
        if let QuantityModel::RandomPositive { max } = self.quantities {
            if max < 1 {
                return Err(domain("maximum quantity must be at least 1"));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(domain("level must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Seed of everything random in replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        mix64(self.seed ^ mix64(r as u64 ^ 0x5EED_0F_5EED))
    }

    /// Hash salt used by the sketches in replicate `r`.
    pub fn replicate_salt(&self, r: usize) -> u64 {
        mix64(self.replicate_seed(r) ^ 0x0005_A17E_D0C5)
    }
}

/// Identifier of the `i`-th distinct item of a replicate. `mix64` is a
/// bijection, so distinct indices give distinct items.
pub fn item_id(replicate_seed: u64, i: u64) -> [u8; 8] {
    mix64(replicate_seed.wrapping_add(i)).to_le_bytes()
}

/// The shuffled stream of replicate `r`.
pub fn generate_stream(cfg: &ExperimentConfig, r: usize) -> Result<Vec<StreamElement>> {
    cfg.validate()?;
    let seed = cfg.replicate_seed(r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.c as usize);
    let draw_d = |rng: &mut ChaCha8Rng| match cfg.quantities {
        QuantityModel::RandomPositive { max } => rng.random_range(1..=max),
        _ => 1,
    };
    for i in 0..cfg.c {
        let reps = match cfg.repeats {
            RepeatModel::Once => 1,
            RepeatModel::Fixed { r } => r,
            RepeatModel::HeavyTailed { max } => {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (u.powf(-1.0 / 1.5).floor() as u32).clamp(1, max)
            }
        };
        let id = item_id(seed, i);
        for _ in 0..reps {
            let d = draw_d(&mut rng);
            out.push(StreamElement::new(id.to_vec(), d));
        }
    }
    if let QuantityModel::InsertDelete { ghosts } = cfg.quantities {
        for g in 0..ghosts {
            let id = item_id(seed, cfg.c + g);
            out.push(StreamElement::new(id.to_vec(), 1));
            out.push(StreamElement::new(id.to_vec(), -1));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Number of items whose total quantity is positive.
pub fn exact_count(stream: &[StreamElement]) -> Result<u64> {
    let mut totals: HashMap<&[u8], i128> = HashMap::new();
    for e in stream {
        *totals.entry(&e.item).or_insert(0) += e.d as i128;
    }
    if let Some((item, t)) = totals.iter().find(|(_, &t)| t < 0) {
        return Err(Error::Integrity(format!(
            "item {item:?} has negative total {t}"
        )));
    }
    Ok(totals.values().filter(|&&t| t > 0).count() as u64)
}
