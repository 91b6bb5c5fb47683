//! Experiment orchestration: configs, parallel replica runs, persisted
//! records, verification suites, coupling runs and analysis.

mod analyze;
mod config;
mod couple;
mod records;
mod simulate;
mod verify;

pub use analyze::{
    analyze_records, run_analyze, AnalyzeParams, AnalyzeSummary, GroupSummary, PairComparison,
    StatisticKind, QUANTILE_CSV_HEADER,
};
pub use config::{default_workers, CouplingParams, ExperimentConfig, TargetSet, DEFAULT_WORKERS_VAR};
pub use couple::{run_couple, CouplingRow, CouplingSummary};
pub use records::{
    read_records, DerivedStats, RecordHeader, ReplicaRecord, RunManifest, SeedRange, RECORD_FORMAT,
};
pub use simulate::{
    replica_seed, run_landscape, run_simulate, simulate_replica, RunControl, RunOutcome,
};
pub use verify::{default_families, run_verify, verify_records, CheckSummary, VerifyParams, VerifyReport};

use crate::environment::EnvError;
use crate::gue::GueError;
use crate::lattice::DpError;
use crate::scaling::ScalingError;
use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("n = {n}: {source}")]
    Dp { n: u64, source: DpError },
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Gue(#[from] GueError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("record invariant violated: {0}")]
    Invariant(String),
    #[error("incompatible metadata: {0}")]
    Metadata(String),
    #[error("no records in {0}")]
    Empty(String),
    #[error("compute budget exceeded: {0}")]
    ComputeCap(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn format(path: &std::path::Path, reason: impl Into<String>) -> Self {
        HarnessError::Format { path: path.display().to_string(), reason: reason.into() }
    }
}

/// A rayon pool with `workers` threads (at least one).
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}
