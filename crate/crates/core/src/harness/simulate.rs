use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::{render_records, sibling, to_line, write_atomic};
use super::{
    thread_pool, DerivedStats, ExperimentConfig, HarnessError, RecordHeader, ReplicaRecord,
    RunManifest, TargetSet, RECORD_FORMAT,
};
use crate::environment::{EnvStats, EnvironmentSpec, WeightOracle};
use crate::lattice::{log_path_count, sweep_with, FunctionalSet, PathFunctionals, Site};
use crate::rng::split_seed;
use crate::scaling::{
    axis_height, grid_site, landscape_rescale, normalize, tw_statistic, fixed_k_statistic,
    diffusive_statistic, PlanePoint, ScalingParams,
};

/// How much of a run to execute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunControl {
    /// Reuse completed work items from an existing journal.
    pub resume: bool,
    /// Stop after this many new work items, leaving the run unfinished.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Records sorted by `(n, replica, target)`; all of them when `complete`.
    pub records: Vec<ReplicaRecord>,
    pub manifest: RunManifest,
    /// Work items computed by this call.
    pub computed: usize,
    /// Work items taken from the journal.
    pub reused: usize,
    pub complete: bool,
}

/// Seed of replica `index` under the master seed.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    split_seed(master, index)
}

/// Seed of the environment a replica uses at a given `n`.
pub(crate) fn environment_seed(replica_seed: u64, n: u64) -> u64 {
    split_seed(replica_seed, n)
}

#[derive(Debug, Clone, Copy)]
struct Target {
    index: usize,
    x: Site,
    y: Site,
    plane: Option<(PlanePoint, PlanePoint)>,
    k: u64,
}

/// Validated config plus everything precomputed from it.
pub(crate) struct Context {
    pub(crate) config: ExperimentConfig,
    pub(crate) hash: String,
    spec: EnvironmentSpec,
    pub(crate) stats: EnvStats,
    targets: BTreeMap<u64, Vec<Target>>,
}

impl Context {
    pub(crate) fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let mut config = config.clone();
        config.validate()?;
        let spec = config.spec()?;
        let stats = config.env_stats()?;
        let mut targets = BTreeMap::new();
        for &n in &config.n_values {
            let list = match &config.targets {
                TargetSet::Axis => {
                    // Surfaces the admissibility warning for this (n, a).
                    ScalingParams::new(n, config.a, stats)?;
                    let k = axis_height(n, config.a);
                    vec![Target { index: 0, x: Site::ORIGIN, y: Site::new(n as i64, k as i64), plane: None, k }]
                }
                TargetSet::FixedK { ks } => ks
                    .iter()
                    .enumerate()
                    .map(|(index, &k)| Target {
                        index,
                        x: Site::ORIGIN,
                        y: Site::new(n as i64, k as i64),
                        plane: None,
                        k,
                    })
                    .collect(),
                TargetSet::Landscape { pairs } => pairs
                    .iter()
                    .enumerate()
                    .map(|(index, &(px, py))| {
                        let x = grid_site(px, n, config.a);
                        let y = grid_site(py, n, config.a);
                        if x.x1 < 0 || x.x2 < 0 || y.x1 < 0 || y.x2 < 0 {
                            return Err(HarnessError::Config(format!(
                                "pair {index} maps to {x} → {y} at n = {n}, outside the nonnegative quadrant"
                            )));
                        }
                        if y.x1 < x.x1 || y.x2 < x.x2 || x == y {
                            return Err(HarnessError::Config(format!(
                                "pair {index} maps to {x} → {y} at n = {n}, which no up-right path joins"
                            )));
                        }
                        Ok(Target { index, x, y, plane: Some((px, py)), k: (y.x2 - x.x2) as u64 })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            targets.insert(n, list);
        }
        let hash = config.hash();
        Ok(Self { config, hash, spec, stats, targets })
    }

    /// All records of replica `replica` at `n`.
    pub(crate) fn item(&self, n: u64, replica: u64) -> Result<Vec<ReplicaRecord>, HarnessError> {
        let targets = self
            .targets
            .get(&n)
            .ok_or_else(|| HarnessError::Config(format!("n = {n} is not part of the config")))?;
        let seed = replica_seed(self.config.seed, replica);
        let oracle = WeightOracle::new(self.spec.clone(), environment_seed(seed, n));
        let values = evaluate(&oracle, targets, self.config.functionals, self.config.memory_cap)
            .map_err(|source| HarnessError::Dp { n, source })?;
        targets
            .iter()
            .zip(values)
            .map(|(t, f)| self.record(n, replica, seed, t, f))
            .collect()
    }

    fn record(
        &self,
        n: u64,
        replica: u64,
        seed: u64,
        t: &Target,
        f: PathFunctionals,
    ) -> Result<ReplicaRecord, HarnessError> {
        let a = self.config.a;
        let d = t.x.displacement_to(t.y).map_err(|source| HarnessError::Dp { n, source })?;
        let mut stats = DerivedStats { s_hat: Some(normalize(f.s, d.steps(), &self.stats)?), ..Default::default() };
        match &self.config.targets {
            TargetSet::Axis => {
                stats.t1i = Some(tw_statistic(f.s, n, a, &self.stats));
                stats.t1iii = Some(diffusive_statistic(f.s, n, a, &self.stats));
            }
            TargetSet::FixedK { .. } => {
                stats.t1ii = Some(fixed_k_statistic(f.s, n, t.k, &self.stats)?);
            }
            TargetSet::Landscape { .. } => {
                let (px, py) = t.plane.expect("landscape targets carry plane points");
                stats.s_na = Some(landscape_rescale(px, py, stats.s_hat.unwrap_or(f64::NAN), n, a)?);
            }
        }
        let want = self.config.functionals;
        let rec = ReplicaRecord {
            config_hash: self.hash.clone(),
            replica,
            seed,
            n,
            a,
            target: t.index,
            x: t.x,
            y: t.y,
            plane: t.plane,
            s: f.s,
            g: want.g.then_some(f.g),
            l: want.l.then_some(f.l),
            stats,
            wall_time_us: None,
        };
        check_record(&rec, &self.stats)?;
        Ok(rec)
    }
}

/// Write-time checks: the sandwich `G ≤ S ≤ G + log C` when `G` is present,
/// and `stat_iii = stat_i · σ · n^{−a/6}` when both statistics are present.
pub(crate) fn check_record(rec: &ReplicaRecord, stats: &EnvStats) -> Result<(), HarnessError> {
    let fail = |what: String| {
        Err(HarnessError::Invariant(format!("n = {}, replica {}, target {}: {what}", rec.n, rec.replica, rec.target)))
    };
    if !rec.s.is_finite() {
        return fail(format!("S = {} is not finite", rec.s));
    }
    if let Some(g) = rec.g {
        let d = rec.x.displacement_to(rec.y).map_err(|source| HarnessError::Dp { n: rec.n, source })?;
        let slack = 1e-9 * rec.s.abs().max(1.0);
        let log_c = log_path_count(d);
        if !(g <= rec.s + slack && rec.s <= g + log_c + slack) {
            return fail(format!("sandwich fails: G = {g}, S = {}, log C = {log_c}", rec.s));
        }
    }
    if let (Some(i), Some(iii)) = (rec.stats.t1i, rec.stats.t1iii) {
        let implied = i * stats.sigma * (rec.n as f64).powf(-rec.a / 6.0);
        if (iii - implied).abs() > 1e-9 * iii.abs().max(1.0) {
            return fail(format!("stat_iii = {iii} but stat_i·σ·n^(−a/6) = {implied}"));
        }
    }
    Ok(())
}

/// Functionals at each target, one sweep per distinct origin.
fn evaluate(
    oracle: &WeightOracle,
    targets: &[Target],
    want: FunctionalSet,
    memory_cap: usize,
) -> Result<Vec<PathFunctionals>, crate::lattice::DpError> {
    let mut by_origin: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
    for (i, t) in targets.iter().enumerate() {
        by_origin.entry(t.x).or_default().push(i);
    }
    let mut out: Vec<Option<PathFunctionals>> = vec![None; targets.len()];
    for (origin, idx) in by_origin {
        let mut width = 0;
        let mut height = 0;
        for &i in &idx {
            let d = origin.displacement_to(targets[i].y)?;
            width = width.max(d.dx);
            height = height.max(d.dy);
        }
        sweep_with(oracle, origin, width, height, want, memory_cap, |cell| {
            for &i in &idx {
                if targets[i].y == cell.site {
                    out[i] = Some(cell.functionals());
                }
            }
        })?;
    }
    Ok(out.into_iter().map(|f| f.expect("every target lies in its sweep")).collect())
}

/// Recomputes the records of one `(n, replica)` work item.
pub fn simulate_replica(
    config: &ExperimentConfig,
    n: u64,
    replica: u64,
) -> Result<Vec<ReplicaRecord>, HarnessError> {
    Context::new(config)?.item(n, replica)
}

/// Runs axis or fixed-k replicas. See [`RunControl`] for resume and budgets.
pub fn run_simulate(config: &ExperimentConfig, control: RunControl) -> Result<RunOutcome, HarnessError> {
    if matches!(config.targets, TargetSet::Landscape { .. }) {
        return Err(HarnessError::Config("landscape targets are run by run_landscape".into()));
    }
    run(config, control)
}

/// Runs landscape replicas: one record per (replica, pair) at each `n`.
pub fn run_landscape(config: &ExperimentConfig, control: RunControl) -> Result<RunOutcome, HarnessError> {
    if !matches!(config.targets, TargetSet::Landscape { .. }) {
        return Err(HarnessError::Config("run_landscape needs landscape targets".into()));
    }
    run(config, control)
}

#[derive(Serialize, Deserialize)]
struct JournalHeader {
    journal: String,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    n: u64,
    replica: u64,
    records: Vec<ReplicaRecord>,
}

type Done = BTreeMap<(u64, u64), Vec<ReplicaRecord>>;

fn journal_path(out: &Path) -> PathBuf {
    sibling(out, "journal.jsonl")
}

/// Completed items from a journal. A torn final line is skipped.
fn load_journal(path: &Path, hash: &str) -> Result<Done, HarnessError> {
    let mut done = Done::new();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next() else { return Ok(done) };
    let first = first.map_err(|e| HarnessError::io(path, e))?;
    let header: JournalHeader = match serde_json::from_str(&first) {
        Ok(h) => h,
        // A crash before the header was flushed leaves nothing to reuse.
        Err(_) => return Ok(done),
    };
    if header.config_hash != hash {
        return Err(HarnessError::Metadata(format!(
            "journal {} belongs to config {}, not {hash}",
            path.display(),
            header.config_hash
        )));
    }
    for line in lines {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        match serde_json::from_str::<JournalEntry>(&line) {
            Ok(e) => {
                done.insert((e.n, e.replica), e.records);
            }
            Err(err) => log::warn!("skipping unreadable journal line in {}: {err}", path.display()),
        }
    }
    Ok(done)
}

fn journal_line(n: u64, replica: u64, records: Vec<ReplicaRecord>) -> String {
    let mut line = to_line(&JournalEntry { n, replica, records });
    line.push('\n');
    line
}

fn run(config: &ExperimentConfig, control: RunControl) -> Result<RunOutcome, HarnessError> {
    let ctx = Context::new(config)?;
    let config = &ctx.config;
    let hash = ctx.hash.clone();
    let journal = config.out.as_deref().map(journal_path);

    let wanted: BTreeSet<(u64, u64)> = config
        .n_values
        .iter()
        .flat_map(|&n| (0..config.replicas).map(move |r| (n, r)))
        .collect();
    let mut done = match &journal {
        Some(p) if control.resume && p.exists() => load_journal(p, &hash)?,
        _ => Done::new(),
    };
    done.retain(|key, _| wanted.contains(key));
    let reused = done.len();

    // Rewrite the journal so that it holds exactly the reusable items.
    let mut writer = match &journal {
        Some(p) => {
            let mut text = to_line(&JournalHeader { journal: RECORD_FORMAT.into(), config_hash: hash.clone() });
            text.push('\n');
            for ((n, r), recs) in &done {
                text.push_str(&journal_line(*n, *r, recs.clone()));
            }
            write_atomic(p, text.as_bytes())?;
            Some((p.clone(), OpenOptions::new().append(true).open(p).map_err(|e| HarnessError::io(p, e))?))
        }
        None => None,
    };

    let todo: Vec<(u64, u64)> = wanted.iter().filter(|k| !done.contains_key(k)).copied().collect();
    let budget = control.budget.unwrap_or(usize::MAX);
    let started = AtomicUsize::new(0);
    let pool = thread_pool(config.workers)?;
    let (tx, rx) = mpsc::channel::<(u64, u64, Vec<ReplicaRecord>)>();
    let mut computed = 0usize;
    let mut io_error: Option<HarnessError> = None;

    let pool_result = std::thread::scope(|scope| {
        let worker = scope.spawn(|| {
            pool.install(|| {
                todo.par_iter().try_for_each_with(tx, |tx, &(n, r)| {
                    if started.fetch_add(1, Ordering::SeqCst) >= budget {
                        return Ok(());
                    }
                    let t0 = Instant::now();
                    let mut recs = ctx.item(n, r)?;
                    let us = t0.elapsed().as_micros() as u64;
                    for rec in &mut recs {
                        rec.wall_time_us = Some(us);
                    }
                    tx.send((n, r, recs)).map_err(|_| HarnessError::Pool("collector stopped".into()))
                })
            })
        });
        // Order-insensitive collector: append to the journal as items arrive.
        for (n, r, recs) in rx {
            if let (Some((path, file)), None) = (writer.as_mut(), io_error.as_ref()) {
                let line = journal_line(n, r, recs.clone());
                if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
                    io_error = Some(HarnessError::io(path, e));
                }
            }
            done.insert((n, r), recs);
            computed += 1;
        }
        worker.join().expect("worker pool panicked")
    });
    pool_result?;
    if let Some(e) = io_error {
        return Err(e);
    }

    let complete = done.len() == wanted.len();
    let items: Vec<(u64, u64)> = done.keys().copied().collect();
    let mut records: Vec<ReplicaRecord> = done.into_values().flatten().collect();
    records.sort_by_key(|r| r.sort_key());
    for r in &mut records {
        r.wall_time_us = None;
    }
    let manifest = RunManifest::from_items(&hash, items, &records);

    if let Some(out) = &config.out {
        let mut m = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        m.push('\n');
        write_atomic(&RunManifest::path_for(out), m.as_bytes())?;
        if complete {
            let header = RecordHeader {
                format: RECORD_FORMAT.into(),
                config_hash: hash.clone(),
                build: crate::BUILD_ID.into(),
                config: config.clone(),
            };
            write_atomic(out, render_records(&header, &records).as_bytes())?;
        }
    }
    Ok(RunOutcome { records, manifest, computed, reused, complete })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::compute_all;

    fn config() -> ExperimentConfig {
        ExperimentConfig::new("beta:1,1", vec![10, 40], 0.3, 6, 7).with_workers(2)
    }

    #[test]
    fn single_replica_matches_pointwise_dp() {
        let mut c = ExperimentConfig::new("beta:1,1", vec![10], 0.3, 1, 7);
        c.workers = 1;
        let out = run_simulate(&c, RunControl::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        let rec = &out.records[0];
        let oracle = WeightOracle::new(c.spec().unwrap(), environment_seed(replica_seed(7, 0), 10));
        let f = compute_all(&oracle, Site::ORIGIN, Site::new(10, 1), FunctionalSet::ALL).unwrap();
        assert_eq!(rec.y, Site::new(10, 1));
        assert_eq!(rec.s.to_bits(), f.s.to_bits());
        assert_eq!(rec.g.unwrap().to_bits(), f.g.to_bits());
        assert_eq!(rec.l.unwrap().to_bits(), f.l.to_bits());
    }

    #[test]
    fn budgeted_runs_resume_to_the_same_records() {
        let dir = tempfile::tempdir().unwrap();
        let full = run_simulate(&config().with_out(dir.path().join("a.jsonl")), RunControl::default()).unwrap();
        assert!(full.complete);
        let c = config().with_out(dir.path().join("b.jsonl"));
        let part = run_simulate(&c, RunControl { resume: false, budget: Some(5) }).unwrap();
        assert!(!part.complete);
        assert_eq!(part.computed, 5);
        assert!(!dir.path().join("b.jsonl").exists());
        let rest = run_simulate(&c, RunControl { resume: true, budget: None }).unwrap();
        assert_eq!(rest.reused, 5);
        assert_eq!(rest.computed, 7);
        assert_eq!(rest.records, full.records);
        let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
        let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn torn_journal_tail_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let c = config().with_out(dir.path().join("r.jsonl"));
        let full = run_simulate(&c, RunControl::default()).unwrap();
        let jp = journal_path(c.out.as_ref().unwrap());
        let text = std::fs::read_to_string(&jp).unwrap();
        let cut = text.len() - 40;
        std::fs::write(&jp, &text[..cut]).unwrap();
        let again = run_simulate(&c, RunControl { resume: true, budget: None }).unwrap();
        assert_eq!(again.computed, 1);
        assert_eq!(again.records, full.records);
    }

    #[test]
    fn resume_rejects_a_foreign_journal() {
        let dir = tempfile::tempdir().unwrap();
        let c = config().with_out(dir.path().join("r.jsonl"));
        run_simulate(&c, RunControl { resume: false, budget: Some(2) }).unwrap();
        let mut other = c.clone();
        other.seed = 99;
        let err = run_simulate(&other, RunControl { resume: true, budget: None }).unwrap_err();
        assert!(matches!(err, HarnessError::Metadata(_)));
    }

    #[test]
    fn extending_replicas_reuses_the_earlier_ones() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config().with_out(dir.path().join("r.jsonl"));
        c.replicas = 3;
        run_simulate(&c, RunControl::default()).unwrap();
        c.replicas = 6;
        let out = run_simulate(&c, RunControl { resume: true, budget: None }).unwrap();
        assert_eq!((out.reused, out.computed), (6, 6));
        assert_eq!(out.records, run_simulate(&config(), RunControl::default()).unwrap().records);
    }

    #[test]
    fn axis_records_carry_consistent_statistics() {
        let out = run_simulate(&config(), RunControl::default()).unwrap();
        assert_eq!(out.records.len(), 12);
        let stats = config().env_stats().unwrap();
        for r in &out.records {
            check_record(r, &stats).unwrap();
            assert!(r.stats.t1i.is_some() && r.stats.t1iii.is_some() && r.stats.t1ii.is_none());
        }
        assert_eq!(out.manifest.completed.len(), 2);
    }

    #[test]
    fn corrupted_values_fail_the_write_time_checks() {
        let out = run_simulate(&config(), RunControl::default()).unwrap();
        let stats = config().env_stats().unwrap();
        let mut r = out.records[0].clone();
        r.s = r.g.unwrap() - 1.0;
        assert!(check_record(&r, &stats).is_err());
        let mut r = out.records[0].clone();
        r.stats.t1iii = Some(r.stats.t1iii.unwrap() + 1e-3);
        assert!(check_record(&r, &stats).is_err());
    }

    #[test]
    fn memory_cap_breach_names_n() {
        let mut c = config();
        c.memory_cap = 16;
        match run_simulate(&c, RunControl::default()) {
            Err(HarnessError::Dp { n, .. }) => assert!(n == 10 || n == 40),
            other => panic!("expected a memory-cap error, got {other:?}"),
        }
    }

    #[test]
    fn landscape_pairs_share_a_sweep_and_shift_as_specified() {
        let pairs = vec![
            (PlanePoint::new(0.0, 0.0), PlanePoint::new(0.0, 1.0)),
            (PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 1.0)),
        ];
        let c = ExperimentConfig::new("beta:1,1", vec![1000], 0.25, 2, 3)
            .with_targets(TargetSet::Landscape { pairs })
            .with_functionals(FunctionalSet::S_ONLY);
        let out = run_landscape(&c, RunControl::default()).unwrap();
        assert_eq!(out.records.len(), 4);
        let r = &out.records[1];
        let n = 1000f64;
        let dx = (n + 2.0 * n.powf(1.0 - 0.25 / 3.0)).floor();
        assert_eq!(r.y, Site::new(dx as i64, 5));
        let s_hat = r.stats.s_hat.unwrap();
        let want = n.powf((0.25 - 3.0) / 6.0) * s_hat - 2.0 * n.powf(0.5 / 3.0) - 2.0 * n.powf(0.25 / 3.0);
        assert!((r.stats.s_na.unwrap() - want).abs() < 1e-12);
        assert!(r.g.is_none());
    }

    #[test]
    fn landscape_rejects_points_left_of_the_quadrant() {
        let pairs = vec![(PlanePoint::new(-1.0, 0.0), PlanePoint::new(0.0, 1.0))];
        let c = ExperimentConfig::new("beta:1,1", vec![100], 0.25, 1, 3).with_targets(TargetSet::Landscape { pairs });
        assert!(matches!(run_landscape(&c, RunControl::default()), Err(HarnessError::Config(_))));
        assert!(run_simulate(&c, RunControl::default()).is_err());
    }
}
