use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::lattice::Site;
use crate::scaling::PlanePoint;

/// Format tag of finalized record files.
pub const RECORD_FORMAT: &str = "rwre-records/1";

/// Statistics derived from `S` for one target; absent ones are omitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedStats {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1ii: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1iii: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_na: Option<f64>,
}

/// One replica's values at one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub config_hash: String,
    pub replica: u64,
    pub seed: u64,
    pub n: u64,
    pub a: f64,
    /// Position of the target within the config's target set.
    pub target: usize,
    pub x: Site,
    pub y: Site,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<(PlanePoint, PlanePoint)>,
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    pub stats: DerivedStats,
    /// Wall time of the work item in microseconds. Kept in the journal only;
    /// finalized files drop it so that they are reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_us: Option<u64>,
}

impl ReplicaRecord {
    pub(crate) fn sort_key(&self) -> (u64, u64, usize) {
        (self.n, self.replica, self.target)
    }
}

/// First line of a finalized record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub format: String,
    pub config_hash: String,
    pub build: String,
    pub config: ExperimentConfig,
}

/// Half-open range of completed replica indices at one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub n: u64,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub build: String,
    pub completed: Vec<SeedRange>,
    pub record_count: usize,
    pub records_per_n: Vec<(u64, usize)>,
}

impl RunManifest {
    /// Builds the manifest from the completed `(n, replica)` items.
    pub fn from_items(config_hash: &str, mut items: Vec<(u64, u64)>, records: &[ReplicaRecord]) -> Self {
        items.sort_unstable();
        items.dedup();
        let mut completed: Vec<SeedRange> = Vec::new();
        for (n, r) in items {
            match completed.last_mut() {
                Some(last) if last.n == n && last.end == r => last.end += 1,
                _ => completed.push(SeedRange { n, start: r, end: r + 1 }),
            }
        }
        let mut records_per_n: Vec<(u64, usize)> = Vec::new();
        for rec in records {
            match records_per_n.last_mut() {
                Some((n, c)) if *n == rec.n => *c += 1,
                _ => records_per_n.push((rec.n, 1)),
            }
        }
        Self {
            config_hash: config_hash.to_string(),
            build: crate::BUILD_ID.to_string(),
            completed,
            record_count: records.len(),
            records_per_n,
        }
    }

    pub fn path_for(out: &Path) -> PathBuf {
        sibling(out, "manifest.json")
    }
}

/// `<out>.<suffix>` next to the output file.
pub(crate) fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

pub(crate) fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record types serialize")
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let tmp = sibling(path, "tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?);
        w.write_all(contents).map_err(|e| HarnessError::io(&tmp, e))?;
        w.flush().map_err(|e| HarnessError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Serializes a finalized record file: header line then one record per line.
pub(crate) fn render_records(header: &RecordHeader, records: &[ReplicaRecord]) -> String {
    let mut out = to_line(header);
    out.push('\n');
    for r in records {
        let mut r = r.clone();
        r.wall_time_us = None;
        out.push_str(&to_line(&r));
        out.push('\n');
    }
    out
}

/// Reads a finalized record file and checks each record's config hash.
pub fn read_records(path: &Path) -> Result<(RecordHeader, Vec<ReplicaRecord>), HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        None => return Err(HarnessError::Empty(path.display().to_string())),
        Some(l) => l.map_err(|e| HarnessError::io(path, e))?,
    };
    let header: RecordHeader =
        serde_json::from_str(&first).map_err(|e| HarnessError::format(path, format!("header: {e}")))?;
    if header.format != RECORD_FORMAT {
        return Err(HarnessError::format(path, format!("unknown format `{}`", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReplicaRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::format(path, format!("line {}: {e}", i + 2)))?;
        if rec.config_hash != header.config_hash {
            return Err(HarnessError::Metadata(format!(
                "record on line {} has config hash {} but the header says {}",
                i + 2,
                rec.config_hash,
                header.config_hash
            )));
        }
        records.push(rec);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: u64, replica: u64) -> ReplicaRecord {
        ReplicaRecord {
            config_hash: "h".into(),
            replica,
            seed: replica * 10,
            n,
            a: 0.3,
            target: 0,
            x: Site::ORIGIN,
            y: Site::new(n as i64, 1),
            plane: None,
            s: -1.25,
            g: Some(-2.5),
            l: None,
            stats: DerivedStats { t1i: Some(0.1), ..Default::default() },
            wall_time_us: Some(5),
        }
    }

    #[test]
    fn manifest_merges_contiguous_items() {
        let items = vec![(10, 2), (10, 0), (10, 1), (10, 4), (20, 0)];
        let recs = vec![record(10, 0), record(10, 1), record(20, 0)];
        let m = RunManifest::from_items("h", items, &recs);
        assert_eq!(
            m.completed,
            vec![
                SeedRange { n: 10, start: 0, end: 3 },
                SeedRange { n: 10, start: 4, end: 5 },
                SeedRange { n: 20, start: 0, end: 1 }
            ]
        );
        assert_eq!(m.records_per_n, vec![(10, 2), (20, 1)]);
    }

    #[test]
    fn finalized_lines_drop_wall_time_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut config = ExperimentConfig::new("beta:1,1", vec![10], 0.3, 1, 0);
        config.validate().unwrap();
        let header = RecordHeader {
            format: RECORD_FORMAT.into(),
            config_hash: "h".into(),
            build: "b".into(),
            config,
        };
        let text = render_records(&header, &[record(10, 0)]);
        assert!(!text.contains("wall_time"));
        assert!(!text.lines().nth(1).unwrap().contains("\"l\""));
        write_atomic(&path, text.as_bytes()).unwrap();
        let (h, recs) = read_records(&path).unwrap();
        assert_eq!(h, header);
        let mut want = record(10, 0);
        want.wall_time_us = None;
        assert_eq!(recs, vec![want]);
    }

    #[test]
    fn hash_mismatch_and_empty_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(read_records(&empty), Err(HarnessError::Empty(_))));

        let path = dir.path().join("r.jsonl");
        let header = RecordHeader {
            format: RECORD_FORMAT.into(),
            config_hash: "other".into(),
            build: "b".into(),
            config: ExperimentConfig::new("beta:1,1", vec![10], 0.3, 1, 0),
        };
        std::fs::write(&path, render_records(&header, &[record(10, 0)])).unwrap();
        assert!(matches!(read_records(&path), Err(HarnessError::Metadata(_))));
    }
}
