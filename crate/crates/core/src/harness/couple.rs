use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{environment_seed, replica_seed};
use super::{thread_pool, ExperimentConfig, HarnessError};
use crate::environment::WeightOracle;
use crate::lattice::{row_maxima_range, sweep_with, DirectedWeights, FunctionalSet, Site};
use crate::rng::split_seed;
use crate::scaling::axis_height;
use crate::stats::moments;

/// Largest number of DP cells a coupling run may visit.
const CELL_BUDGET: f64 = 1e12;

/// Salt separating origin sampling from environment seeds.
const ORIGIN_SALT: u64 = 0x6f72_6967_696e_73;

/// Per-`n` coupling results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub n: u64,
    pub k: u64,
    pub t: f64,
    pub replicas: u64,
    /// Origins swept per replica, the corner included.
    pub origins: usize,
    pub pairs_visited: u64,
    /// Largest sampled `max |S − L|` over all replicas.
    pub sample_max: f64,
    /// Monte Carlo mean of the per-replica sampled maximum.
    pub mean_max: f64,
    pub se_mean_max: f64,
    /// `mean_max / (t² k (n + k)^{1/p})`.
    pub ratio: f64,
    /// Pairs where `|G − L|` exceeded the coupling bound.
    pub domination_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub config_hash: String,
    pub env: String,
    pub moment_order: Option<f64>,
    pub rows: Vec<CouplingRow>,
}

impl CouplingSummary {
    pub fn violations(&self) -> u64 {
        self.rows.iter().map(|r| r.domination_violations).sum()
    }

    /// Largest ratio between consecutive normalized ratios.
    pub fn max_growth(&self) -> f64 {
        self.rows.windows(2).map(|w| w[1].ratio / w[0].ratio).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outcome of the sweeps from one set of origins in one environment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct RegionScan {
    pub max_s_minus_l: f64,
    pub visited: u64,
    pub violations: u64,
}

impl RegionScan {
    fn merge(&mut self, other: RegionScan) {
        self.max_s_minus_l = self.max_s_minus_l.max(other.max_s_minus_l);
        self.visited += other.visited;
        self.violations += other.violations;
    }
}

/// Scans `[0, width] × [0, height]` from each origin, tracking `max |S − L|`
/// and checking `|G − L|` against the coupling bound at every visited pair.
pub(crate) fn scan_region<W: DirectedWeights + ?Sized>(
    env: &W,
    width: u64,
    height: u64,
    origins: &[Site],
    memory_cap: usize,
) -> Result<RegionScan, crate::lattice::DpError> {
    // prefix[j] = M_0 + … + M_{j−1}, row maxima over first coordinates 0..=width.
    let mut prefix = vec![0.0f64; height as usize + 2];
    for j in 0..=height as usize {
        prefix[j + 1] = prefix[j] + row_maxima_range(env, 0, width as i64, j as i64);
    }
    let mut total = RegionScan::default();
    for &x in origins {
        let mut scan = RegionScan::default();
        let mut column = i64::MIN;
        let mut column_tau_max = 0.0f64;
        let w = width - x.x1 as u64;
        let h = height - x.x2 as u64;
        sweep_with(env, x, w, h, FunctionalSet::ALL, memory_cap, |cell| {
            if cell.site.x1 != column {
                column = cell.site.x1;
                column_tau_max = 0.0;
            }
            column_tau_max = column_tau_max.max(cell.tau.abs());
            let y2 = cell.site.x2 as usize;
            let bound = prefix[y2 + 1] - prefix[x.x2 as usize] + column_tau_max;
            let gap = (cell.g - cell.l).abs();
            if gap > bound + 1e-9 * cell.g.abs().max(1.0) {
                scan.violations += 1;
            }
            scan.max_s_minus_l = scan.max_s_minus_l.max((cell.s - cell.l).abs());
            scan.visited += 1;
        })?;
        total.merge(scan);
    }
    Ok(total)
}

/// The corner plus `count` origins drawn uniformly from the region.
pub(crate) fn sample_origins(seed: u64, width: u64, height: u64, count: usize) -> Vec<Site> {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, ORIGIN_SALT));
    let mut out = vec![Site::ORIGIN];
    out.extend((0..count).map(|_| {
        Site::new(rng.random_range(0..=width) as i64, rng.random_range(0..=height) as i64)
    }));
    out
}

/// Samples pairs from `Λ_t(n, ⌊n^a⌋)` for each `n` and each replica.
pub fn run_coupling_scan(
    config: &ExperimentConfig,
) -> Result<Vec<(u64, u64, RegionScan)>, HarnessError> {
    let mut config = config.clone();
    config.validate()?;
    let spec = config.spec()?;
    let t = config.coupling.t;
    let mut cells = 0.0;
    for &n in &config.n_values {
        let k = axis_height(n, config.a);
        let area = ((t * n as f64).floor() + 1.0) * ((t * k as f64).floor() + 1.0);
        cells += area * (config.coupling.origins as f64 + 1.0) * config.replicas as f64;
    }
    if cells > CELL_BUDGET {
        return Err(HarnessError::ComputeCap(format!(
            "coupling run would visit about {cells:.3e} cells (cap {CELL_BUDGET:.0e})"
        )));
    }
    let items: Vec<(u64, u64)> = config
        .n_values
        .iter()
        .flat_map(|&n| (0..config.replicas).map(move |r| (n, r)))
        .collect();
    let pool = thread_pool(config.workers)?;
    pool.install(|| {
        items
            .par_iter()
            .map(|&(n, r)| {
                let k = axis_height(n, config.a);
                let width = (t * n as f64).floor() as u64;
                let height = (t * k as f64).floor() as u64;
                let seed = replica_seed(config.seed, r);
                let oracle = WeightOracle::new(spec.clone(), environment_seed(seed, n));
                let origins = sample_origins(environment_seed(seed, n), width, height, config.coupling.origins);
                let scan = scan_region(&oracle, width, height, &origins, config.memory_cap)
                    .map_err(|source| HarnessError::Dp { n, source })?;
                Ok((n, r, scan))
            })
            .collect()
    })
}

/// Coupling summary: sampled `max |S − L|` per replica, its mean, the
/// normalized ratio and the count of coupling-bound violations, per `n`.
pub fn run_couple(config: &ExperimentConfig) -> Result<CouplingSummary, HarnessError> {
    let scans = run_coupling_scan(config)?;
    let mut config = config.clone();
    config.validate()?;
    let stats = config.env_stats()?;
    let p = stats.moment_order;
    let t = config.coupling.t;
    let mut rows = Vec::new();
    for &n in &config.n_values {
        let k = axis_height(n, config.a);
        let per: Vec<&RegionScan> = scans.iter().filter(|(m, _, _)| *m == n).map(|(_, _, s)| s).collect();
        let maxima: Vec<f64> = per.iter().map(|s| s.max_s_minus_l).collect();
        let mean_max = crate::stats::mean(&maxima);
        let se_mean_max = if maxima.len() > 1 { moments(&maxima)?.se_mean } else { f64::NAN };
        let growth = if p.is_finite() { ((n + k) as f64).powf(1.0 / p) } else { 1.0 };
        rows.push(CouplingRow {
            n,
            k,
            t,
            replicas: config.replicas,
            origins: config.coupling.origins + 1,
            pairs_visited: per.iter().map(|s| s.visited).sum(),
            sample_max: maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_max,
            se_mean_max,
            ratio: mean_max / (t * t * k as f64 * growth),
            domination_violations: per.iter().map(|s| s.violations).sum(),
        });
    }
    Ok(CouplingSummary {
        config_hash: config.hash(),
        env: config.env.clone(),
        moment_order: p.is_finite().then_some(p),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{compute_all, coupling_bound, log_path_count, Displacement};

    #[test]
    fn in_sweep_bound_equals_the_pointwise_bound() {
        let spec = "logpareto:3,1".parse().unwrap();
        let env = WeightOracle::new(spec, 5);
        let (width, height) = (40u64, 6u64);
        let mut prefix = vec![0.0f64; height as usize + 2];
        for j in 0..=height as usize {
            prefix[j + 1] = prefix[j] + row_maxima_range(&env, 0, width as i64, j as i64);
        }
        for &(x, y) in &[((0, 0), (40, 6)), ((3, 2), (17, 2)), ((10, 1), (39, 5)), ((0, 6), (0, 6))] {
            let x = Site::new(x.0, x.1);
            let y = Site::new(y.0, y.1);
            let d = x.displacement_to(y).unwrap();
            let pointwise = coupling_bound(&env, x, d, width);
            let col = (x.x2..=y.x2).map(|j| env.tau(Site::new(y.x1, j)).abs()).fold(0.0, f64::max);
            let swept = prefix[y.x2 as usize + 1] - prefix[x.x2 as usize] + col;
            assert!((pointwise - swept).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_has_no_violations_and_counts_pairs() {
        let env = WeightOracle::new("logpareto:3,1".parse().unwrap(), 11);
        let origins = sample_origins(1, 60, 5, 4);
        let scan = scan_region(&env, 60, 5, &origins, usize::MAX).unwrap();
        assert_eq!(scan.violations, 0);
        let expected: u64 = origins.iter().map(|x| (61 - x.x1 as u64) * (6 - x.x2 as u64)).sum();
        assert_eq!(scan.visited, expected);
    }

    #[test]
    fn flat_rows_reduce_to_the_endpoint_term() {
        // With dy = 0 there is one path: S = G and |S − L| = |τ_y|.
        let env = WeightOracle::new("beta:2,3".parse().unwrap(), 4);
        let x = Site::new(0, 0);
        for dx in 0..30 {
            let y = x.offset(dx, 0);
            let f = compute_all(&env, x, y, FunctionalSet::ALL).unwrap();
            assert_eq!(log_path_count(Displacement::new(dx as u64, 0)), 0.0);
            assert_eq!(f.s, f.g);
            assert!(((f.s - f.l).abs() - env.tau(y).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn couple_reports_each_n() {
        let mut c = ExperimentConfig::new("logpareto:3,1", vec![100, 400], 0.25, 3, 2).with_workers(2);
        c.coupling.origins = 4;
        let s = run_couple(&c).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.violations(), 0);
        assert_eq!(s.moment_order, Some(3.0));
        for r in &s.rows {
            assert!(r.sample_max >= r.mean_max && r.ratio > 0.0);
        }
        assert_eq!(s, run_couple(&c.with_workers(1)).unwrap());
    }

    #[test]
    fn oversized_runs_hit_the_budget() {
        let mut c = ExperimentConfig::new("beta:1,1", vec![1_000_000_000], 0.5, 1000, 2);
        c.coupling.origins = 1000;
        assert!(matches!(run_couple(&c), Err(HarnessError::ComputeCap(_))));
    }
}
