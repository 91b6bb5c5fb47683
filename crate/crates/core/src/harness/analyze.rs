use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_records, HarnessError, RecordHeader, ReplicaRecord, TargetSet};
use crate::gue::{ReferenceEcdf, ReferenceKind, ReferenceMeta};
use crate::stats::{
    bootstrap_ci, ks_one_sample, ks_two_sample, median_abs, moments, normal_cdf, Ecdf, Interval,
    MomentSummary,
};

/// Header of the quantile CSV.
pub const QUANTILE_CSV_HEADER: &str = "n,target,p,statistic_quantile,reference_quantile";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    T1i,
    T1ii,
    T1iii,
    Landscape,
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatisticKind::T1i => "t1i",
            StatisticKind::T1ii => "t1ii",
            StatisticKind::T1iii => "t1iii",
            StatisticKind::Landscape => "landscape",
        })
    }
}

impl FromStr for StatisticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t1i" => Ok(StatisticKind::T1i),
            "t1ii" => Ok(StatisticKind::T1ii),
            "t1iii" => Ok(StatisticKind::T1iii),
            "landscape" => Ok(StatisticKind::Landscape),
            other => Err(format!("unknown statistic `{other}` (expected t1i, t1ii, t1iii or landscape)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeParams {
    pub statistic: StatisticKind,
    /// Pass/fail threshold for the decisive value (see [`AnalyzeSummary::decisive`]).
    pub threshold: Option<f64>,
    /// When set, records must have been produced with this exponent.
    pub expected_a: Option<f64>,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl AnalyzeParams {
    pub fn new(statistic: StatisticKind) -> Self {
        Self { statistic, threshold: None, expected_a: None, bootstrap_resamples: 1000, level: 0.95, seed: 0 }
    }
}

/// Summary of one `(n, target)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: u64,
    pub target: usize,
    pub count: usize,
    /// KS distance to the reference, when one applies to this group.
    pub ks: Option<f64>,
    pub moments: MomentSummary,
    pub mean_ci: Interval,
    pub variance_ci: Interval,
    pub median_abs: f64,
}

/// Two-sample KS between a landscape pair and the first pair, after the
/// parabolic correction `(v + (Δz₁)²/Δz₂) / Δz₂^{1/3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub n: u64,
    pub target: usize,
    pub shift: f64,
    pub ks_vs_first: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub statistic: StatisticKind,
    pub config_hash: String,
    pub a: f64,
    pub reference: Option<ReferenceMeta>,
    pub groups: Vec<GroupSummary>,
    pub stationarity: Vec<PairComparison>,
    /// The value compared with the threshold at the largest `n`: the worst
    /// KS distance (t1i, t1ii), the median `|stat|` (t1iii) or the worst
    /// pair-vs-first KS distance (landscape).
    pub decisive: Option<f64>,
    pub threshold: Option<f64>,
    pub pass: Option<bool>,
}

impl AnalyzeSummary {
    /// `(n, ks)` for each group with a reference distance, in record order.
    pub fn ks_trend(&self) -> Vec<(u64, f64)> {
        self.groups.iter().filter_map(|g| g.ks.map(|k| (g.n, k))).collect()
    }
}

fn statistic_of(rec: &ReplicaRecord, kind: StatisticKind) -> Option<f64> {
    match kind {
        StatisticKind::T1i => rec.stats.t1i,
        StatisticKind::T1ii => rec.stats.t1ii,
        StatisticKind::T1iii => rec.stats.t1iii,
        StatisticKind::Landscape => {
            let (x, y) = rec.plane?;
            let dt = y.z2 - x.z2;
            let dz = y.z1 - x.z1;
            rec.stats.s_na.map(|v| (v + dz * dz / dt) / dt.cbrt())
        }
    }
}

/// Whether the reference describes the statistic of a group with height `k`.
fn reference_applies(kind: StatisticKind, reference: &ReferenceKind, k: u64) -> bool {
    match (kind, reference) {
        (StatisticKind::T1i | StatisticKind::Landscape, ReferenceKind::TwGue { .. }) => true,
        (StatisticKind::T1ii, ReferenceKind::Normal) => k == 1,
        (StatisticKind::T1ii, ReferenceKind::LambdaK { k: rk }) => k == *rk,
        _ => false,
    }
}

fn check_metadata(
    header: &RecordHeader,
    reference: Option<&ReferenceEcdf>,
    params: &AnalyzeParams,
) -> Result<(), HarnessError> {
    let mismatch = |m: String| Err(HarnessError::Metadata(m));
    if let Some(a) = params.expected_a {
        if a != header.config.a {
            return mismatch(format!("records were computed with a = {}, expected a = {a}", header.config.a));
        }
    }
    let targets_ok = matches!(
        (params.statistic, &header.config.targets),
        (StatisticKind::T1i | StatisticKind::T1iii, TargetSet::Axis)
            | (StatisticKind::T1ii, TargetSet::FixedK { .. })
            | (StatisticKind::Landscape, TargetSet::Landscape { .. })
    );
    if !targets_ok {
        return mismatch(format!(
            "statistic {} does not apply to records with {:?} targets",
            params.statistic, header.config.targets
        ));
    }
    if let Some(r) = reference {
        let ks: Vec<u64> = match &header.config.targets {
            TargetSet::FixedK { ks } => ks.clone(),
            _ => vec![0],
        };
        if !ks.iter().any(|&k| reference_applies(params.statistic, &r.meta.kind, k)) {
            return mismatch(format!("reference {:?} does not describe statistic {}", r.meta.kind, params.statistic));
        }
    }
    Ok(())
}

/// Analysis of records already in memory. Returns the summary and the quantile CSV.
pub fn analyze_records(
    header: &RecordHeader,
    records: &[ReplicaRecord],
    reference: Option<&ReferenceEcdf>,
    params: &AnalyzeParams,
) -> Result<(AnalyzeSummary, String), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty("record set".into()));
    }
    check_metadata(header, reference, params)?;
    let kind = params.statistic;

    // (n, target) → (height, values)
    let mut groups: BTreeMap<(u64, usize), (u64, Vec<f64>)> = BTreeMap::new();
    for rec in records {
        if rec.config_hash != header.config_hash {
            return Err(HarnessError::Metadata(format!("record with foreign config hash {}", rec.config_hash)));
        }
        if rec.a != header.config.a {
            return Err(HarnessError::Metadata(format!("record computed with a = {}", rec.a)));
        }
        let v = statistic_of(rec, kind).ok_or_else(|| {
            HarnessError::Metadata(format!("record (n = {}, replica {}) lacks statistic {kind}", rec.n, rec.replica))
        })?;
        let k = (rec.y.x2 - rec.x.x2) as u64;
        groups.entry((rec.n, rec.target)).or_insert_with(|| (k, Vec::new())).1.push(v);
    }

    let reference_ecdf = match reference {
        Some(r) => Some(Ecdf::from_sorted(r.samples.clone())?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut summaries = Vec::new();
    let mut csv = String::from(QUANTILE_CSV_HEADER);
    csv.push('\n');
    let mut ecdfs: BTreeMap<(u64, usize), Ecdf> = BTreeMap::new();
    for (&(n, target), (k, values)) in &groups {
        let e = Ecdf::new(values.clone())?;
        let applies = reference.filter(|r| reference_applies(kind, &r.meta.kind, *k));
        let ks = applies.map(|r| match r.meta.kind {
            // The normal law has an exact CDF; no need for its sampled stand-in.
            ReferenceKind::Normal => ks_one_sample(&e, normal_cdf).statistic,
            _ => ks_two_sample(&e, reference_ecdf.as_ref().expect("reference present")).statistic,
        });
        let m = moments(values)?;
        let mean_ci = bootstrap_ci(values, crate::stats::mean, params.bootstrap_resamples, params.level, &mut rng)?;
        let variance_ci = bootstrap_ci(
            values,
            |s| moments(s).map(|m| m.variance).unwrap_or(f64::NAN),
            params.bootstrap_resamples,
            params.level,
            &mut rng,
        )?;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let r = match (applies, &reference_ecdf) {
                (Some(_), Some(re)) => format!("{}", re.quantile(p)),
                _ => String::new(),
            };
            csv.push_str(&format!("{n},{target},{p},{},{r}\n", e.quantile(p)));
        }
        summaries.push(GroupSummary {
            n,
            target,
            count: values.len(),
            ks,
            moments: m,
            mean_ci,
            variance_ci,
            median_abs: median_abs(values)?,
        });
        ecdfs.insert((n, target), e);
    }

    let mut stationarity = Vec::new();
    if let TargetSet::Landscape { pairs } = &header.config.targets {
        for &n in &header.config.n_values {
            let Some(first) = ecdfs.get(&(n, 0)) else { continue };
            for (target, (x, y)) in pairs.iter().enumerate().skip(1) {
                if let Some(e) = ecdfs.get(&(n, target)) {
                    let dz = y.z1 - x.z1;
                    stationarity.push(PairComparison {
                        n,
                        target,
                        shift: dz * dz / (y.z2 - x.z2),
                        ks_vs_first: ks_two_sample(e, first).statistic,
                    });
                }
            }
        }
    }

    let n_max = groups.keys().map(|(n, _)| *n).max().expect("non-empty");
    let worst = |vals: Vec<f64>| vals.into_iter().fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let decisive = match kind {
        StatisticKind::T1i | StatisticKind::T1ii => {
            worst(summaries.iter().filter(|g| g.n == n_max).filter_map(|g| g.ks).collect())
        }
        StatisticKind::T1iii => worst(summaries.iter().filter(|g| g.n == n_max).map(|g| g.median_abs).collect()),
        StatisticKind::Landscape => {
            worst(stationarity.iter().filter(|c| c.n == n_max).map(|c| c.ks_vs_first).collect())
        }
    };
    let pass = match (params.threshold, decisive) {
        (Some(t), Some(d)) => Some(d <= t),
        (Some(_), None) => Some(false),
        _ => None,
    };
    Ok((
        AnalyzeSummary {
            statistic: kind,
            config_hash: header.config_hash.clone(),
            a: header.config.a,
            reference: reference.map(|r| r.meta.clone()),
            groups: summaries,
            stationarity,
            decisive,
            threshold: params.threshold,
            pass,
        },
        csv,
    ))
}

/// Reads records (and the reference, if any) from disk and analyzes them.
pub fn run_analyze(
    records_path: &Path,
    reference_path: Option<&Path>,
    params: &AnalyzeParams,
) -> Result<(AnalyzeSummary, String), HarnessError> {
    let (header, records) = read_records(records_path)?;
    if records.is_empty() {
        return Err(HarnessError::Empty(records_path.display().to_string()));
    }
    let reference = reference_path.map(ReferenceEcdf::read_jsonl).transpose()?;
    analyze_records(&header, &records, reference.as_ref(), params)
}
