//! Quenched path probabilities of two-dimensional random walks in random
//! environment near the axis, the last-passage values they are compared
//! with, and the random-matrix reference laws their fluctuations are tested
//! against.
//!
//! * [`environment`]: environment families and the site-addressable [`WeightOracle`].
//! * [`lattice`]: exact directed DP for `S = log P`, `G` and `L`, plus oracles and inequalities.
//! * [`scaling`]: centering, normalization and the fluctuation statistics.
//! * [`gue`]: GUE largest-eigenvalue and Tracy–Widom reference samples.
//! * [`stats`]: ECDFs, Kolmogorov–Smirnov distances, moments, bootstrap.
//! * [`harness`]: experiment configs, parallel replica runs, records and analysis.

pub mod environment;
pub mod gue;
pub mod harness;
pub mod lattice;
pub mod rng;
pub mod scaling;
mod special;
pub mod stats;

pub use environment::{env_stats, EnvStats, EnvironmentSpec, WeightOracle};
pub use lattice::{PathFunctionals, Site};

/// Identifies the build that produced a record or reference file.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));
