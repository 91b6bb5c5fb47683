use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::environment::{env_stats, EnvStats, EnvironmentSpec};
use crate::lattice::{FunctionalSet, DEFAULT_MEMORY_CAP};
use crate::scaling::{axis_height, PlanePoint};

/// Environment variable holding the default worker count.
pub const DEFAULT_WORKERS_VAR: &str = "RWRE_WORKERS";

/// Which targets each replica evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSet {
    /// The single target `(n, ⌊n^a⌋)`.
    Axis,
    /// Targets `(n, k)` for each listed `k`.
    FixedK { ks: Vec<u64> },
    /// Plane-point pairs mapped onto the lattice at each `n`.
    Landscape { pairs: Vec<(PlanePoint, PlanePoint)> },
}

/// Parameters of the coupling region `Λ_t(n, k)` and its origin sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub t: f64,
    /// Sampled origins besides the corner `(0, 0)`.
    pub origins: usize,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self { t: 1.0, origins: 32 }
    }
}

/// A full experiment description.
///
/// `workers`, `out` and `memory_cap` are execution details: they are not
/// serialized and do not enter the config hash, so they cannot change results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: String,
    pub n_values: Vec<u64>,
    pub a: f64,
    pub replicas: u64,
    pub seed: u64,
    pub targets: TargetSet,
    pub functionals: FunctionalSet,
    #[serde(default)]
    pub coupling: CouplingParams,
    #[serde(skip, default = "default_workers")]
    pub workers: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip, default = "default_memory_cap")]
    pub memory_cap: usize,
}

fn default_memory_cap() -> usize {
    DEFAULT_MEMORY_CAP
}

/// Worker count from the environment variable, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(DEFAULT_WORKERS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// The fields that determine results. Replica count is left out so that a
/// run can later be extended with more replicas under the same hash.
#[derive(Serialize)]
struct Identity<'a> {
    env: &'a str,
    n_values: &'a [u64],
    a: f64,
    seed: u64,
    targets: &'a TargetSet,
    functionals: FunctionalSet,
    coupling: CouplingParams,
}

impl ExperimentConfig {
    /// A config with axis targets, all functionals and default execution settings.
    pub fn new(env: &str, n_values: Vec<u64>, a: f64, replicas: u64, seed: u64) -> Self {
        Self {
            env: env.to_string(),
            n_values,
            a,
            replicas,
            seed,
            targets: TargetSet::Axis,
            functionals: FunctionalSet::ALL,
            coupling: CouplingParams::default(),
            workers: default_workers(),
            out: None,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }

    pub fn with_targets(mut self, targets: TargetSet) -> Self {
        self.targets = targets;
        self
    }

    pub fn with_functionals(mut self, functionals: FunctionalSet) -> Self {
        self.functionals = functionals;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_out(mut self, out: impl Into<PathBuf>) -> Self {
        self.out = Some(out.into());
        self
    }

    pub fn spec(&self) -> Result<EnvironmentSpec, HarnessError> {
        Ok(self.env.parse::<EnvironmentSpec>()?)
    }

    pub fn env_stats(&self) -> Result<EnvStats, HarnessError> {
        Ok(env_stats(&self.spec()?)?)
    }

    /// Checks the invariants and rewrites the environment string canonically.
    pub fn validate(&mut self) -> Result<(), HarnessError> {
        let spec = self.spec()?;
        self.env = spec.to_string();
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replicas < 1 {
            return bad("replica count must be at least 1".into());
        }
        if self.n_values.is_empty() {
            return bad("at least one n is required".into());
        }
        if let Some(n) = self.n_values.iter().find(|&&n| n < 2) {
            return bad(format!("n must be at least 2, got {n}"));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return bad(format!("exponent a must lie in (0, 1), got {}", self.a));
        }
        if !self.functionals.s {
            return bad("S must be among the requested functionals".into());
        }
        if !(self.coupling.t > 0.0 && self.coupling.t.is_finite()) {
            return bad(format!("coupling t must be positive, got {}", self.coupling.t));
        }
        if self.coupling.origins < 1 {
            return bad("coupling needs at least one sampled origin".into());
        }
        match &self.targets {
            TargetSet::Axis => {
                for &n in &self.n_values {
                    if axis_height(n, self.a) < 1 {
                        return bad(format!("⌊n^a⌋ = 0 for n = {n}, a = {}", self.a));
                    }
                }
            }
            TargetSet::FixedK { ks } => {
                if ks.is_empty() || ks.contains(&0) {
                    return bad("fixed-k targets need k ≥ 1".into());
                }
            }
            TargetSet::Landscape { pairs } => {
                if pairs.is_empty() {
                    return bad("landscape targets need at least one pair".into());
                }
                for (x, y) in pairs {
                    if !(x.z2 < y.z2) {
                        return bad(format!("pair requires x₂ < y₂, got {} and {}", x.z2, y.z2));
                    }
                    if ![x.z1, x.z2, y.z1, y.z2].iter().all(|v| v.is_finite()) {
                        return bad("plane points must be finite".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of the result-determining fields.
    pub fn hash(&self) -> String {
        let canonical = self
            .env
            .parse::<EnvironmentSpec>()
            .map(|s| s.to_string())
            .unwrap_or_else(|_| self.env.clone());
        let id = Identity {
            env: &canonical,
            n_values: &self.n_values,
            a: self.a,
            seed: self.seed,
            targets: &self.targets,
            functionals: self.functionals,
            coupling: self.coupling,
        };
        let json = serde_json::to_string(&id).expect("identity serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
