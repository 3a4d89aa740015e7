//! One-pass cardinality estimation from maximal-term order-statistic sketches
//! and positive stable random projections.
//!
//! Every distinct item is hashed, through a salted digest and a counter-based
//! generator, to `m` independent variates. [`order::MaxSketch`] keeps their
//! running maxima (or the `k` largest values), [`projection::ProjectionSketch`]
//! keeps signed linear combinations. Both support exact or approximate Gamma
//! pivots, and [`baselines`] provides LogLog, HyperLogLog and MinCount for
//! comparison.

pub mod baselines;
pub mod codec;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod harness;
pub mod hash;
pub mod inference;
pub mod logspace;
pub mod order;
pub mod projection;
mod roots;
pub mod stats;

pub use codec::{Sketch, SketchParams, SketchType};
pub use error::{Error, Result};
pub use estimate::{Estimate, EstimatorId, StreamElement};
pub use hash::{HashConfig, HashDistribution};
