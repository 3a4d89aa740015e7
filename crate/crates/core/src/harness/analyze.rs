use serde::{Deserialize, Serialize};

use super::{generate_stream, Algo, ExperimentConfig};
use crate::error::{domain, Result};
use crate::hash::{HashConfig, HashDistribution};
use crate::inference::{
    are_bernoulli, chernoff_bounds, optimal_lambda, psi_infinity, register_storage_bits, required_m,
    StorageEstimate, TailBound,
};
use crate::projection::coupled_residuals;
use crate::stats::median;

/// Parameter grids for the `analyze` table. Missing lists are empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeGrid {
    pub lambdas: Vec<f64>,
    pub qs: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub ms: Vec<usize>,
    pub deltas: Vec<f64>,
    /// `(m, c, q)` triples for register storage figures.
    pub storage: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreRow {
    pub lambda: f64,
    pub are: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiRow {
    pub q: f64,
    pub psi_infinity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingRow {
    pub epsilon: f64,
    pub delta: f64,
    pub required_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeTable {
    pub lambda0: f64,
    pub are_at_lambda0: f64,
    pub are_bernoulli: Vec<AreRow>,
    pub psi_infinity: Vec<PsiRow>,
    pub chernoff: Vec<TailBound>,
    pub required_m: Vec<SizingRow>,
    pub storage: Vec<StorageEstimate>,
}

pub fn analyze(grid: &AnalyzeGrid) -> Result<AnalyzeTable> {
    let lambda0 = optimal_lambda();
    let mut chernoff = Vec::new();
    let mut sizing = Vec::new();
    for &eps in &grid.epsilons {
        for &m in &grid.ms {
            chernoff.push(chernoff_bounds(eps, m)?);
        }
        for &delta in &grid.deltas {
            sizing.push(SizingRow {
                epsilon: eps,
                delta,
                required_m: required_m(eps, delta)?,
            });
        }
    }
    Ok(AnalyzeTable {
        lambda0,
        are_at_lambda0: are_bernoulli(lambda0)?,
        are_bernoulli: grid
            .lambdas
            .iter()
            .map(|&l| Ok(AreRow { lambda: l, are: are_bernoulli(l)? }))
            .collect::<Result<_>>()?,
        psi_infinity: grid
            .qs
            .iter()
            .map(|&q| Ok(PsiRow { q, psi_infinity: psi_infinity(q)? }))
            .collect::<Result<_>>()?,
        chernoff,
        required_m: sizing,
        storage: grid
            .storage
            .iter()
            .map(|&(m, c, q)| register_storage_bits(m, c, q))
            .collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub alpha: f64,
    /// Median and maximum of `|V^(-alpha) - exp(-1/M)|` over all streams and runs.
    pub median_abs_residual: f64,
    pub max_abs_residual: f64,
    /// Extremes of `log(V^alpha / M)` over all streams and runs.
    pub min_log_ratio: f64,
    pub max_log_ratio: f64,
    /// `alpha log c`, the sandwich ceiling for unit quantities.
    pub log_upper: f64,
    pub sandwich_held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub c: u64,
    pub m: usize,
    pub runs: usize,
    pub seed: u64,
    pub rows: Vec<EquivalenceRow>,
}

/// Couples projection and maximal-term sketches on the same stable variates
/// for each `alpha`, over `runs` independent streams of `c` distinct items.
pub fn run_equivalence(c: u64, m: usize, alphas: &[f64], runs: usize, seed: u64) -> Result<EquivalenceReport> {
    if alphas.is_empty() || runs == 0 {
        return Err(domain("need at least one alpha and one run"));
    }
    let cfg = ExperimentConfig::new(c, m, &[Algo::Projection], runs, seed);
    let streams = (0..runs)
        .map(|r| generate_stream(&cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut abs = Vec::with_capacity(m * runs);
        let mut row = EquivalenceRow {
            alpha,
            median_abs_residual: 0.0,
            max_abs_residual: 0.0,
            min_log_ratio: f64::INFINITY,
            max_log_ratio: f64::NEG_INFINITY,
            log_upper: 0.0,
            sandwich_held: true,
        };
        for (r, stream) in streams.iter().enumerate() {
            let hc = HashConfig::new(m, cfg.replicate_salt(r), HashDistribution::PositiveStable { alpha })?;
            let run = coupled_residuals(stream, &hc)?;
            abs.extend(run.residuals.iter().map(|x| x.abs()));
            for &lr in &run.log_ratios {
                row.min_log_ratio = row.min_log_ratio.min(lr);
                row.max_log_ratio = row.max_log_ratio.max(lr);
            }
            row.log_upper = run.log_upper;
            row.sandwich_held &= run.sandwich_held;
        }
        row.median_abs_residual = median(&abs);
        row.max_abs_residual = abs.iter().copied().fold(0.0, f64::max);
        rows.push(row);
    }
    Ok(EquivalenceReport { c, m, runs, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_table_shapes() {
        let grid = AnalyzeGrid {
            lambdas: vec![0.5, 1.594],
            qs: vec![0.5],
            epsilons: vec![0.1],
            ms: vec![64, 256],
            deltas: vec![0.05],
            storage: vec![(1024, 1e6, 0.5)],
        };
        let t = analyze(&grid).unwrap();
        assert_eq!(t.are_bernoulli.len(), 2);
        assert_eq!(t.chernoff.len(), 2);
        assert_eq!(t.required_m.len(), 1);
        assert!((t.lambda0 - 1.594).abs() < 1e-3);
        assert!(analyze(&AnalyzeGrid { qs: vec![1.5], ..Default::default() }).is_err());
    }

    #[test]
    fn equivalence_small_run() {
        let rep = run_equivalence(200, 16, &[0.2, 0.05], 2, 1).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.sandwich_held && r.min_log_ratio >= 0.0));
        assert!(rep.rows[1].median_abs_residual < rep.rows[0].median_abs_residual);
    }
}
