use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::couple::{sample_origins, scan_region};
use super::simulate::{check_record, Context};
use super::{read_records, thread_pool, HarnessError};
use crate::environment::{EnvironmentSpec, WeightOracle};
use crate::lattice::{
    brute_force, compute_all, log_path_count, sandwich_check, sweep_with, DirectedWeights,
    FunctionalSet, PathFunctionals, Site, BRUTE_FORCE_MAX_STEPS, DEFAULT_MEMORY_CAP,
};
use crate::rng::split_seed;

/// Sizes of the verification suites.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyParams {
    pub families: Vec<EnvironmentSpec>,
    /// Oracle mode covers every displacement with `dx + dy ≤ max_steps`.
    pub max_steps: u64,
    /// Environments per family in oracle mode.
    pub environments: usize,
    pub sandwich_instances: usize,
    pub max_dx: u64,
    pub max_dy: u64,
    pub superadditivity_instances: usize,
    pub coupling_instances: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            families: default_families(),
            max_steps: 12,
            environments: 100,
            sandwich_instances: 10_000,
            max_dx: 500,
            max_dy: 50,
            superadditivity_instances: 1000,
            coupling_instances: 200,
            seed: 0,
            workers: super::config::default_workers(),
        }
    }
}

/// One representative of each environment family.
pub fn default_families() -> Vec<EnvironmentSpec> {
    ["beta:1,1", "dirichlet:1,1,1,1", "twopoint:0.4,0.3,0.2,0.1|0.1,0.2,0.3,0.4|0.5", "logpareto:3,1"]
        .iter()
        .map(|s| s.parse().expect("built-in family specs parse"))
        .collect()
}

/// Checked and violated counts for one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub checked: u64,
    pub violated: u64,
    /// Largest discrepancy seen, in the suite's own units.
    pub worst: f64,
}

impl CheckSummary {
    fn new(name: &str) -> Self {
        Self { name: name.into(), checked: 0, violated: 0, worst: 0.0 }
    }

    fn record(&mut self, ok: bool, discrepancy: f64) {
        self.checked += 1;
        if !ok {
            self.violated += 1;
        }
        if discrepancy.is_nan() || discrepancy > self.worst {
            self.worst = discrepancy;
        }
    }

    fn merge(mut self, other: CheckSummary) -> Self {
        self.checked += other.checked;
        self.violated += other.violated;
        if other.worst.is_nan() || other.worst > self.worst {
            self.worst = other.worst;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckSummary>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.violated == 0)
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn oracle_for(params: &VerifyParams, family: usize, index: u64) -> WeightOracle {
    let seed = split_seed(split_seed(params.seed, family as u64), index);
    WeightOracle::new(params.families[family].clone(), seed)
}

fn instance_rng(params: &VerifyParams, suite: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(split_seed(params.seed ^ 0x7665_7269_6679, suite), index))
}

/// DP values against exhaustive enumeration for every small displacement.
fn oracle_suite(params: &VerifyParams) -> Result<CheckSummary, HarnessError> {
    let m = params.max_steps;
    let jobs: Vec<(usize, u64)> = (0..params.families.len())
        .flat_map(|f| (0..params.environments as u64).map(move |e| (f, e)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(f, e)| {
            let env = oracle_for(params, f, e);
            let mut rng = instance_rng(params, 1, (f as u64) << 32 | e);
            let x = Site::new(rng.random_range(-50..=50), rng.random_range(-50..=50));
            let side = m as usize + 1;
            let mut table = vec![None; side * side];
            sweep_with(&env, x, m, m, FunctionalSet::ALL, DEFAULT_MEMORY_CAP, |c| {
                let (i, j) = ((c.site.x1 - x.x1) as usize, (c.site.x2 - x.x2) as usize);
                table[i * side + j] = Some(c.functionals());
            })
            .map_err(|source| HarnessError::Dp { n: m, source })?;
            let mut part = CheckSummary::new("dp_vs_brute_force");
            for dx in 0..=m {
                for dy in 0..=m - dx {
                    let dp: PathFunctionals = table[dx as usize * side + dy as usize].expect("swept");
                    let bf = brute_force(&env, x, x.offset(dx as i64, dy as i64))
                        .map_err(|source| HarnessError::Dp { n: m, source })?
                        .functionals;
                    let gap = relative_gap(dp.s, bf.s).max(relative_gap(dp.g, bf.g)).max(relative_gap(dp.l, bf.l));
                    part.record(gap <= 1e-10, gap);
                }
            }
            Ok(part)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(parts.into_iter().fold(CheckSummary::new("dp_vs_brute_force"), CheckSummary::merge))
}

/// `G ≤ S ≤ G + log C` on random displacements, with the flat-row identity `S = G`.
fn sandwich_suite(params: &VerifyParams) -> Result<(CheckSummary, CheckSummary), HarnessError> {
    let parts = (0..params.sandwich_instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(params, 2, i);
            let f = rng.random_range(0..params.families.len());
            let env = oracle_for(params, f, 1_000_000 + i);
            let x = Site::new(rng.random_range(-1000..=1000), rng.random_range(-1000..=1000));
            let dx = rng.random_range(0..=params.max_dx);
            let dy = rng.random_range(0..=params.max_dy);
            let d = crate::lattice::Displacement::new(dx, dy);
            let v = compute_all(&env, x, x.offset(dx as i64, dy as i64), FunctionalSet::ALL)
                .map_err(|source| HarnessError::Dp { n: dx, source })?;
            let mut sandwich = CheckSummary::new("sandwich");
            let excess = (v.g - v.s).max(v.s - v.g - log_path_count(d)).max(0.0);
            sandwich.record(sandwich_check(&v, d, 1e-9), excess);
            // Single path along a row: S and G are the same sum.
            let mut flat = CheckSummary::new("sandwich_flat_row");
            let w = compute_all(&env, x, x.offset(dx as i64, 0), FunctionalSet::ALL)
                .map_err(|source| HarnessError::Dp { n: dx, source })?;
            flat.record(w.s == w.g, (w.s - w.g).abs());
            Ok((sandwich, flat))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut sandwich = CheckSummary::new("sandwich");
    let mut flat = CheckSummary::new("sandwich_flat_row");
    for (s, f) in parts {
        sandwich = sandwich.merge(s);
        flat = flat.merge(f);
    }
    Ok((sandwich, flat))
}

/// Identical weights at every site.
struct Homogeneous(f64, f64);

impl DirectedWeights for Homogeneous {
    fn directed_log_weights(&self, _x: Site) -> (f64, f64) {
        (self.0, self.1)
    }
}

/// In a homogeneous environment every path has the same value, so `S = G + log C`.
fn homogeneous_suite(params: &VerifyParams) -> Result<CheckSummary, HarnessError> {
    let mut out = CheckSummary::new("sandwich_homogeneous");
    let mut rng = instance_rng(params, 3, 0);
    for _ in 0..200 {
        let p1: f64 = rng.random_range(0.05..0.6);
        let p2: f64 = rng.random_range(0.05..(1.0 - p1));
        let env = Homogeneous(p1.ln(), p2.ln());
        let dx = rng.random_range(0..=params.max_dx);
        let dy = rng.random_range(0..=params.max_dy);
        let d = crate::lattice::Displacement::new(dx, dy);
        let v = compute_all(&env, Site::ORIGIN, Site::new(dx as i64, dy as i64), FunctionalSet::ALL)
            .map_err(|source| HarnessError::Dp { n: dx, source })?;
        let want = v.g + log_path_count(d);
        let gap = relative_gap(v.s, want);
        out.record(gap <= 1e-12, gap);
    }
    Ok(out)
}

/// `S(x,z) ≥ S(x,y) + S(y,z)`, the same for `G`, and
/// `L(x,z) ≥ L(x,y) + L(y,z) − τ_y` (the vertex `y` is counted twice).
fn superadditivity_suite(params: &VerifyParams) -> Result<CheckSummary, HarnessError> {
    let parts = (0..params.superadditivity_instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(params, 4, i);
            let f = rng.random_range(0..params.families.len());
            let env = oracle_for(params, f, 2_000_000 + i);
            let x = Site::new(rng.random_range(-100..=100), rng.random_range(-100..=100));
            let y = x.offset(rng.random_range(0..=60), rng.random_range(0..=15));
            let z = y.offset(rng.random_range(0..=60), rng.random_range(0..=15));
            let dp = |a: Site, b: Site| {
                compute_all(&env, a, b, FunctionalSet::ALL).map_err(|source| HarnessError::Dp { n: 0, source })
            };
            let (xz, xy, yz) = (dp(x, z)?, dp(x, y)?, dp(y, z)?);
            let slack = 1e-9 * xz.s.abs().max(1.0);
            let deficit = (xy.s + yz.s - xz.s)
                .max(xy.g + yz.g - xz.g)
                .max(xy.l + yz.l - env.tau(y) - xz.l);
            let mut part = CheckSummary::new("superadditivity");
            part.record(deficit <= slack, deficit.max(0.0));
            Ok(part)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(parts.into_iter().fold(CheckSummary::new("superadditivity"), CheckSummary::merge))
}

/// `|G − L| ≤ coupling_bound` at every pair visited from sampled origins.
fn coupling_suite(params: &VerifyParams) -> Result<CheckSummary, HarnessError> {
    let parts = (0..params.coupling_instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(params, 5, i);
            let f = rng.random_range(0..params.families.len());
            let env = oracle_for(params, f, 3_000_000 + i);
            let width = rng.random_range(10..=300u64);
            let height = rng.random_range(1..=12u64);
            let origins = sample_origins(rng.random(), width, height, 4);
            let scan = scan_region(&env, width, height, &origins, DEFAULT_MEMORY_CAP)
                .map_err(|source| HarnessError::Dp { n: width, source })?;
            Ok(CheckSummary {
                name: "coupling_domination".into(),
                checked: scan.visited,
                violated: scan.violations,
                worst: 0.0,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(parts.into_iter().fold(CheckSummary::new("coupling_domination"), CheckSummary::merge))
}

/// Runs every exact-inequality suite.
pub fn run_verify(params: &VerifyParams) -> Result<VerifyReport, HarnessError> {
    if params.max_steps > BRUTE_FORCE_MAX_STEPS {
        return Err(HarnessError::Config(format!(
            "oracle mode is capped at {BRUTE_FORCE_MAX_STEPS} steps, got {}",
            params.max_steps
        )));
    }
    if params.families.is_empty() {
        return Err(HarnessError::Config("no environment families to verify".into()));
    }
    let pool = thread_pool(params.workers)?;
    pool.install(|| {
        let oracle = oracle_suite(params)?;
        let (sandwich, flat) = sandwich_suite(params)?;
        let homogeneous = homogeneous_suite(params)?;
        let superadditivity = superadditivity_suite(params)?;
        let coupling = coupling_suite(params)?;
        Ok(VerifyReport { checks: vec![oracle, sandwich, flat, homogeneous, superadditivity, coupling] })
    })
}

/// Recomputes every record in a finalized file from its `(config, seed)` and
/// reports records that differ in any bit or fail the write-time checks.
pub fn verify_records(path: &Path, workers: usize) -> Result<VerifyReport, HarnessError> {
    let (header, records) = read_records(path)?;
    if records.is_empty() {
        return Err(HarnessError::Empty(path.display().to_string()));
    }
    let ctx = Context::new(&header.config)?;
    if ctx.hash != header.config_hash {
        return Err(HarnessError::Metadata(format!(
            "header hash {} does not match its config ({})",
            header.config_hash, ctx.hash
        )));
    }
    let mut items: Vec<(u64, u64)> = records.iter().map(|r| (r.n, r.replica)).collect();
    items.sort_unstable();
    items.dedup();
    let pool = thread_pool(workers)?;
    let fresh = pool.install(|| {
        items
            .par_iter()
            .map(|&(n, r)| ctx.item(n, r))
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    let fresh: Vec<_> = fresh.into_iter().flatten().collect();
    let mut reproduce = CheckSummary::new("record_reproduction");
    let mut invariants = CheckSummary::new("record_invariants");
    for rec in &records {
        let same = fresh
            .iter()
            .find(|f| f.n == rec.n && f.replica == rec.replica && f.target == rec.target)
            .map(|f| {
                let mut stored = rec.clone();
                stored.wall_time_us = None;
                (*f == stored, (f.s - rec.s).abs())
            });
        match same {
            Some((ok, gap)) => reproduce.record(ok, gap),
            None => reproduce.record(false, f64::INFINITY),
        }
        invariants.record(check_record(rec, &ctx.stats).is_ok(), 0.0);
    }
    Ok(VerifyReport { checks: vec![reproduce, invariants] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_simulate, ExperimentConfig, RunControl};

    fn small() -> VerifyParams {
        VerifyParams {
            max_steps: 8,
            environments: 5,
            sandwich_instances: 100,
            max_dx: 60,
            max_dy: 10,
            superadditivity_instances: 50,
            coupling_instances: 10,
            workers: 2,
            ..Default::default()
        }
    }

    #[test]
    fn small_suites_pass_and_count() {
        let report = run_verify(&small()).unwrap();
        assert!(report.passed(), "{report:?}");
        // 45 displacements with dx + dy ≤ 8, 5 environments, 4 families.
        assert_eq!(report.check("dp_vs_brute_force").unwrap().checked, 45 * 5 * 4);
        assert_eq!(report.check("sandwich").unwrap().checked, 100);
        assert!(report.check("coupling_domination").unwrap().checked > 0);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let p = VerifyParams { max_steps: 23, ..small() };
        assert!(matches!(run_verify(&p), Err(HarnessError::Config(_))));
    }

    #[test]
    fn corrupted_record_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let c = ExperimentConfig::new("beta:1,1", vec![20], 0.3, 3, 1).with_out(&out).with_workers(1);
        run_simulate(&c, RunControl::default()).unwrap();
        assert!(verify_records(&out, 1).unwrap().passed());

        let text = std::fs::read_to_string(&out).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: crate::harness::ReplicaRecord = serde_json::from_str(&lines[2]).unwrap();
        rec.s -= 1.0;
        lines[2] = serde_json::to_string(&rec).unwrap();
        std::fs::write(&out, lines.join("\n") + "\n").unwrap();
        let report = verify_records(&out, 1).unwrap();
        assert!(!report.passed());
        assert_eq!(report.check("record_reproduction").unwrap().violated, 1);
    }
}
