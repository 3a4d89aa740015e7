use std::fmt;

use serde::{Deserialize, Serialize};

/// One stream observation: an item identifier and a signed integer quantity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamElement {
    pub item: Vec<u8>,
    pub d: i64,
}

impl StreamElement {
    pub fn new(item: impl Into<Vec<u8>>, d: i64) -> Self {
        Self {
            item: item.into(),
            d,
        }
    }

    pub fn insert(item: impl Into<Vec<u8>>) -> Self {
        Self::new(item, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    MaxContinuous,
    MaxKth,
    Bernoulli,
    Geometric,
    GeometricRecursive,
    Projection,
    ProjectionMedian,
    LogLog,
    HyperLogLog,
    MinCount,
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EstimatorId::MaxContinuous => "max-continuous",
            EstimatorId::MaxKth => "max-kth",
            EstimatorId::Bernoulli => "bernoulli",
            EstimatorId::Geometric => "geometric",
            EstimatorId::GeometricRecursive => "geometric-recursive",
            EstimatorId::Projection => "projection",
            EstimatorId::ProjectionMedian => "projection-median",
            EstimatorId::LogLog => "loglog",
            EstimatorId::HyperLogLog => "hyperloglog",
            EstimatorId::MinCount => "mincount",
        };
        f.write_str(s)
    }
}

/// Point estimate of the cardinality with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub c_hat: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub estimator: EstimatorId,
    pub m: usize,
}

impl Estimate {
    /// The interval is widened to contain the point estimate, which matters
    /// only for very small levels where a central pivot interval can miss
    /// the mean-matching estimate.
    pub(crate) fn new(
        estimator: EstimatorId,
        m: usize,
        c_hat: f64,
        std_error: f64,
        ci: (f64, f64),
        level: f64,
    ) -> Self {
        Self {
            c_hat,
            std_error,
            ci: (ci.0.min(c_hat), ci.1.max(c_hat)),
            level,
            estimator,
            m,
        }
    }

    /// Wald interval `c_hat +- z * se`, floored at `floor`.
    pub(crate) fn wald(
        estimator: EstimatorId,
        m: usize,
        c_hat: f64,
        std_error: f64,
        level: f64,
        floor: f64,
    ) -> Self {
        let z = crate::stats::normal_critical(level);
        let lo = (c_hat - z * std_error).max(floor);
        Self::new(estimator, m, c_hat, std_error, (lo, c_hat + z * std_error), level)
    }

    pub fn covers(&self, c: f64) -> bool {
        self.ci.0 <= c && c <= self.ci.1
    }

    /// `100 |c_hat - c| / c`.
    pub fn percent_error(&self, c: f64) -> f64 {
        100.0 * (self.c_hat - c).abs() / c
    }
}
