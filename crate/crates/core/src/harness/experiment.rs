use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exact_count, generate_stream, Algo, AlgoSpec, ExperimentConfig, QuantityModel};
use crate::baselines::{BaselineAlgo, RegisterSketch};
use crate::error::{Error, Result};
use crate::hash::{HashConfig, HashDistribution, HashedItem};
use crate::inference::{are_bernoulli, psi_infinity};
use crate::order::MaxSketch;
use crate::projection::ProjectionSketch;
use crate::stats::{gamma_cdf, ks_critical_1pct, ks_statistic, mean, variance};

pub const REPORT_SCHEMA: &str = "cardsketch.experiment/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub algo: String,
    pub c: u64,
    pub c_hat: Option<f64>,
    pub percent_error: Option<f64>,
    pub covered: Option<bool>,
    /// Gamma(m, 1) pivot at the true cardinality, where the estimator has one.
    pub pivot: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub algo: String,
    pub ok: usize,
    pub errors: usize,
    pub mean_c_hat: f64,
    pub mean_percent_error: f64,
    pub sd_percent_error: f64,
    /// Mean and unbiased variance of `c_hat / c`.
    pub mean_relative: f64,
    pub var_relative: f64,
    /// `(1/m) / var_relative`.
    pub empirical_are: f64,
    pub nominal_are: f64,
    pub coverage: Option<f64>,
    pub pivot_ks: Option<f64>,
    pub pivot_ks_critical: Option<f64>,
    pub state_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatio {
    pub numerator: String,
    pub denominator: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub summaries: Vec<AlgoSummary>,
    /// `var_relative(numerator) / var_relative(denominator)` for every pair.
    pub variance_ratios: Vec<VarianceRatio>,
    pub records: Vec<ReplicateRecord>,
}

/// Wall-clock figures, kept apart from the report so reports stay reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTiming {
    pub elapsed_seconds: f64,
    pub elements: u64,
    pub elements_per_second: f64,
}

impl ExperimentReport {
    pub fn summary(&self, label: &str) -> Option<&AlgoSummary> {
        self.summaries.iter().find(|s| s.algo == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// `c_hat / c` values of one algorithm, in replicate order.
    pub fn relative_estimates(&self, label: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.algo == label)
            .filter_map(|r| r.c_hat.map(|x| x / r.c as f64))
            .collect()
    }

    pub fn pivots(&self, label: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.algo == label)
            .filter_map(|r| r.pivot)
            .collect()
    }
}

/// Sketch identity within a replicate, so estimators sharing a sketch build it once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum SketchKey {
    Max { kind: u8, param_bits: u64 },
    Projection { alpha_bits: u64 },
    Register(BaselineAlgo),
}

enum Built {
    Max(MaxSketch),
    Projection(ProjectionSketch),
    Register(RegisterSketch),
}

impl Built {
    fn state_bytes(&self) -> usize {
        match self {
            Built::Max(s) => s.state_bytes(),
            Built::Projection(s) => s.state_bytes(),
            Built::Register(s) => s.state_bytes(),
        }
    }
}

fn sketch_key(spec: &AlgoSpec, cfg: &ExperimentConfig) -> SketchKey {
    match spec.algo() {
        Algo::MaxUniform => SketchKey::Max { kind: 0, param_bits: 0 },
        Algo::MaxExp => SketchKey::Max { kind: 1, param_bits: 0 },
        Algo::MaxGeom | Algo::GeomRecursive => SketchKey::Max {
            kind: 2,
            param_bits: spec.q(cfg).to_bits(),
        },
        Algo::Kth => SketchKey::Max {
            kind: 3,
            param_bits: spec.k(cfg) as u64,
        },
        Algo::Bernoulli => SketchKey::Max {
            kind: 4,
            param_bits: spec.p(cfg).to_bits(),
        },
        Algo::Projection | Algo::ProjectionMedian => SketchKey::Projection {
            alpha_bits: spec.alpha(cfg).to_bits(),
        },
        Algo::Loglog => SketchKey::Register(BaselineAlgo::LogLog),
        Algo::Hll => SketchKey::Register(BaselineAlgo::HyperLogLog),
        Algo::Mincount => SketchKey::Register(BaselineAlgo::MinCount),
    }
}

fn build(spec: &AlgoSpec, cfg: &ExperimentConfig, salt: u64) -> Result<Built> {
    let hc = |d| HashConfig::new(cfg.m, salt, d);
    Ok(match spec.algo() {
        Algo::MaxUniform => Built::Max(MaxSketch::new(hc(HashDistribution::Uniform01)?)?),
        Algo::MaxExp => Built::Max(MaxSketch::new(hc(HashDistribution::ExponentialMean1)?)?),
        Algo::MaxGeom | Algo::GeomRecursive => Built::Max(MaxSketch::new(hc(HashDistribution::Geometric {
            q: spec.q(cfg),
        })?)?),
        Algo::Kth => Built::Max(MaxSketch::new_kth(hc(HashDistribution::Uniform01)?, spec.k(cfg))?),
        Algo::Bernoulli => Built::Max(MaxSketch::new(hc(HashDistribution::Bernoulli { p: spec.p(cfg) })?)?),
        Algo::Projection | Algo::ProjectionMedian => Built::Projection(ProjectionSketch::with_mode(
            hc(HashDistribution::PositiveStable {
                alpha: spec.alpha(cfg),
            })?,
            !matches!(cfg.quantities, QuantityModel::InsertDelete { .. }),
        )?),
        Algo::Loglog => Built::Register(RegisterSketch::new(BaselineAlgo::LogLog, cfg.m, salt)?),
        Algo::Hll => Built::Register(RegisterSketch::new(BaselineAlgo::HyperLogLog, cfg.m, salt)?),
        Algo::Mincount => Built::Register(RegisterSketch::new(BaselineAlgo::MinCount, cfg.m, salt)?),
    })
}

fn nominal_are(spec: &AlgoSpec, cfg: &ExperimentConfig) -> f64 {
    match spec.algo() {
        Algo::MaxUniform | Algo::MaxExp | Algo::Projection | Algo::Mincount => 1.0,
        Algo::MaxGeom | Algo::GeomRecursive => psi_infinity(spec.q(cfg)).unwrap_or(f64::NAN),
        Algo::Kth => spec.k(cfg) as f64,
        Algo::Bernoulli => {
            let lambda = -(cfg.c as f64) * (-spec.p(cfg)).ln_1p();
            are_bernoulli(lambda).unwrap_or(f64::NAN)
        }
        Algo::ProjectionMedian => std::f64::consts::LN_2.powi(2),
        Algo::Loglog => 1.0 / (1.30f64 * 1.30),
        Algo::Hll => 1.0 / (1.04f64 * 1.04),
    }
}

struct ReplicateOutcome {
    records: Vec<ReplicateRecord>,
    state_bytes: Vec<usize>,
    elements: u64,
}

fn run_replicate(cfg: &ExperimentConfig, r: usize) -> Result<ReplicateOutcome> {
    let stream = generate_stream(cfg, r)?;
    let c = exact_count(&stream)?;
    let salt = cfg.replicate_salt(r);

    let mut slot_of = Vec::with_capacity(cfg.algos.len());
    let mut sketches: Vec<Built> = Vec::new();
    let mut index: HashMap<SketchKey, usize> = HashMap::new();
    for spec in &cfg.algos {
        let key = sketch_key(spec, cfg);
        let slot = match index.get(&key) {
            Some(&i) => i,
            None => {
                sketches.push(build(spec, cfg, salt)?);
                index.insert(key, sketches.len() - 1);
                sketches.len() - 1
            }
        };
        slot_of.push(slot);
    }

    let mut failures: Vec<Option<String>> = vec![None; sketches.len()];
    let any_max = sketches.iter().any(|s| matches!(s, Built::Max(_)));
    let mut hashed = HashedItem::new();
    for e in &stream {
        if any_max {
            hashed.fill(&e.item, salt, cfg.m);
        }
        for (s, fail) in sketches.iter_mut().zip(failures.iter_mut()) {
            if fail.is_some() {
                continue;
            }
            let res = match s {
                Built::Max(x) => x.update_hashed(&hashed, e.d),
                Built::Projection(x) => x.update(&e.item, e.d),
                Built::Register(x) => x.update(&e.item, e.d),
            };
            if let Err(err) = res {
                *fail = Some(err.to_string());
            }
        }
    }

    let cf = c as f64;
    let records = cfg
        .algos
        .iter()
        .zip(&slot_of)
        .map(|(spec, &slot)| {
            let mut rec = ReplicateRecord {
                replicate: r,
                algo: spec.to_string(),
                c,
                c_hat: None,
                percent_error: None,
                covered: None,
                pivot: None,
                error: failures[slot].clone(),
            };
            if rec.error.is_some() {
                return rec;
            }
            let outcome: Result<(f64, Option<bool>, Option<f64>)> = (|| {
                Ok(match (&sketches[slot], spec.algo()) {
                    (Built::Max(s), Algo::GeomRecursive) => (s.estimate_geometric_recursive()?, None, None),
                    (Built::Max(s), algo) => {
                        let e = s.estimate(cfg.level)?;
                        let pivot = match algo {
                            Algo::MaxUniform | Algo::MaxExp => Some(s.pivot(cf)?),
                            _ => None,
                        };
                        (e.c_hat, Some(e.covers(cf)), pivot)
                    }
                    (Built::Projection(s), Algo::ProjectionMedian) => (s.median_estimate()?, None, None),
                    (Built::Projection(s), _) => {
                        let e = s.estimate(cfg.level)?;
                        (e.c_hat, Some(e.covers(cf)), Some(s.pivot(cf)?))
                    }
                    (Built::Register(s), _) => {
                        let e = s.estimate(cfg.level)?;
                        (e.c_hat, Some(e.covers(cf)), None)
                    }
                })
            })();
            match outcome {
                Ok((c_hat, covered, pivot)) => {
                    rec.c_hat = Some(c_hat);
                    rec.percent_error = Some(100.0 * (c_hat - cf).abs() / cf);
                    rec.covered = covered;
                    rec.pivot = pivot;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect();
    Ok(ReplicateOutcome {
        records,
        state_bytes: slot_of.iter().map(|&s| sketches[s].state_bytes()).collect(),
        elements: stream.len() as u64,
    })
}

fn summarize(cfg: &ExperimentConfig, spec: &AlgoSpec, records: &[&ReplicateRecord], state_bytes: usize) -> AlgoSummary {
    let ok: Vec<&&ReplicateRecord> = records.iter().filter(|r| r.c_hat.is_some()).collect();
    let rel: Vec<f64> = ok.iter().map(|r| r.c_hat.unwrap() / r.c as f64).collect();
    let pe: Vec<f64> = ok.iter().map(|r| r.percent_error.unwrap()).collect();
    let covered: Vec<bool> = ok.iter().filter_map(|r| r.covered).collect();
    let pivots: Vec<f64> = ok.iter().filter_map(|r| r.pivot).collect();
    let var_rel = variance(&rel);
    let m = cfg.m as f64;
    let (pivot_ks, pivot_ks_critical) = if pivots.len() >= 2 {
        (
            Some(ks_statistic(&pivots, |x| gamma_cdf(m, x))),
            Some(ks_critical_1pct(pivots.len())),
        )
    } else {
        (None, None)
    };
    AlgoSummary {
        algo: spec.to_string(),
        ok: ok.len(),
        errors: records.len() - ok.len(),
        mean_c_hat: if ok.is_empty() { f64::NAN } else { mean(&ok.iter().map(|r| r.c_hat.unwrap()).collect::<Vec<_>>()) },
        mean_percent_error: if pe.is_empty() { f64::NAN } else { mean(&pe) },
        sd_percent_error: variance(&pe).sqrt(),
        mean_relative: if rel.is_empty() { f64::NAN } else { mean(&rel) },
        var_relative: var_rel,
        empirical_are: (1.0 / m) / var_rel,
        nominal_are: nominal_are(spec, cfg),
        coverage: (!covered.is_empty())
            .then(|| covered.iter().filter(|&&b| b).count() as f64 / covered.len() as f64),
        pivot_ks,
        pivot_ks_critical,
        state_bytes,
    }
}

/// Runs every replicate (in parallel, collected in order) and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(run_experiment_timed(cfg)?.0)
}

pub fn run_experiment_timed(cfg: &ExperimentConfig) -> Result<(ExperimentReport, ExperimentTiming)> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let elements: u64 = outcomes.iter().map(|o| o.elements).sum();
    let state_bytes = outcomes[0].state_bytes.clone();
    let records: Vec<ReplicateRecord> = outcomes.into_iter().flat_map(|o| o.records).collect();
    let summaries: Vec<AlgoSummary> = cfg
        .algos
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let label = spec.to_string();
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.algo == label).collect();
            summarize(cfg, spec, &mine, state_bytes[i])
        })
        .collect();
    let mut variance_ratios = Vec::new();
    for (i, a) in summaries.iter().enumerate() {
        for b in &summaries[i + 1..] {
            variance_ratios.push(VarianceRatio {
                numerator: a.algo.clone(),
                denominator: b.algo.clone(),
                ratio: a.var_relative / b.var_relative,
            });
        }
    }
    let report = ExperimentReport {
        schema: REPORT_SCHEMA.to_string(),
        config: cfg.clone(),
        summaries,
        variance_ratios,
        records,
    };
    let timing = ExperimentTiming {
        elapsed_seconds: elapsed,
        elements,
        elements_per_second: elements as f64 / elapsed.max(1e-9),
    };
    Ok((report, timing))
}
