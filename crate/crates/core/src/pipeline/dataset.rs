//! Manifest ingestion and train/val/test splitting.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::Label;

pub const MANIFEST_HEADER: [&str; 8] = [
    "pair_id",
    "left_image",
    "right_image",
    "label",
    "respondent_id",
    "has_gaze",
    "left_gaze_file",
    "right_gaze_file",
];

/// One pairwise trial. Paths are as written in the manifest, relative to
/// its directory unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub pair_id: String,
    pub left_image: String,
    pub right_image: String,
    pub label: Label,
    pub respondent_id: String,
    pub has_gaze: bool,
    pub left_gaze_file: Option<String>,
    pub right_gaze_file: Option<String>,
}

/// Manifest row as written to CSV.
#[derive(Serialize)]
struct ManifestRow<'a> {
    pair_id: &'a str,
    left_image: &'a str,
    right_image: &'a str,
    label: i64,
    respondent_id: &'a str,
    has_gaze: bool,
    left_gaze_file: &'a str,
    right_gaze_file: &'a str,
}

/// Writes records in manifest format.
pub fn write_manifest(w: impl std::io::Write, records: &[ComparisonRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(MANIFEST_HEADER)?;
    for r in records {
        wtr.serialize(ManifestRow {
            pair_id: &r.pair_id,
            left_image: &r.left_image,
            right_image: &r.right_image,
            label: r.label.into(),
            respondent_id: &r.respondent_id,
            has_gaze: r.has_gaze,
            left_gaze_file: r.left_gaze_file.as_deref().unwrap_or(""),
            right_gaze_file: r.right_gaze_file.as_deref().unwrap_or(""),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    /// 1-based line number in the CSV, header included.
    pub line: usize,
    pub pair_id: String,
    pub reason: String,
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {} ({}): {}", self.line, self.pair_id, self.reason)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LoadReport {
    pub rows: usize,
    pub ties: Vec<RowIssue>,
    pub malformed: Vec<RowIssue>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: Vec<ComparisonRecord>,
    pub report: LoadReport,
}

impl Dataset {
    pub fn resolve(&self, path: &str) -> PathBuf {
        resolve(&self.root, path)
    }
}

fn resolve(root: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

enum RowOutcome {
    Record(ComparisonRecord),
    Tie,
}

fn parse_row(row: &csv::StringRecord, root: &Path) -> std::result::Result<RowOutcome, String> {
    if row.len() != MANIFEST_HEADER.len() {
        return Err(format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len()));
    }
    let field = |i: usize| row.get(i).unwrap_or("").trim();
    let pair_id = field(0);
    if pair_id.is_empty() {
        return Err("empty pair_id".into());
    }
    let label: i64 = field(3).parse().map_err(|_| format!("label {:?} is not an integer", field(3)))?;
    if label == 0 {
        return Ok(RowOutcome::Tie);
    }
    let label = Label::try_from(label).map_err(|e| e.to_string())?;
    let has_gaze = parse_flag(field(5)).ok_or_else(|| format!("has_gaze {:?} is not a boolean", field(5)))?;
    let mut missing = Vec::new();
    for (name, idx) in [("left_image", 1), ("right_image", 2)] {
        if field(idx).is_empty() {
            return Err(format!("empty {name}"));
        }
        if !resolve(root, field(idx)).is_file() {
            missing.push(format!("{name} {} not found", field(idx)));
        }
    }
    let optional = |i: usize| (!field(i).is_empty()).then(|| field(i).to_string());
    let (lg, rg) = (optional(6), optional(7));
    if has_gaze {
        for (name, f) in [("left_gaze_file", &lg), ("right_gaze_file", &rg)] {
            match f {
                None => missing.push(format!("has_gaze set but {name} is empty")),
                Some(p) if !resolve(root, p).is_file() => missing.push(format!("{name} {p} not found")),
                _ => {}
            }
        }
    }
    if !missing.is_empty() {
        return Err(missing.join("; "));
    }
    Ok(RowOutcome::Record(ComparisonRecord {
        pair_id: pair_id.to_string(),
        left_image: field(1).to_string(),
        right_image: field(2).to_string(),
        label,
        respondent_id: field(4).to_string(),
        has_gaze,
        left_gaze_file: lg,
        right_gaze_file: rg,
    }))
}

/// Loads and validates a manifest. Tie rows are rejected and counted;
/// malformed rows are itemized and dropped, and the whole load aborts when
/// more than 1% of rows are malformed.
pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(manifest)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::Format {
            path: manifest.to_path_buf(),
            reason: format!("expected header {}, got {}", MANIFEST_HEADER.join(","), header.join(",")),
        });
    }
    let mut report = LoadReport::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        report.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.malformed.push(RowIssue { line, pair_id: String::new(), reason: e.to_string() });
                continue;
            }
        };
        let pair_id = row.get(0).unwrap_or("").trim().to_string();
        match parse_row(&row, &root) {
            Ok(RowOutcome::Tie) => report.ties.push(RowIssue { line, pair_id, reason: "tie (label 0)".into() }),
            Ok(RowOutcome::Record(r)) => {
                if seen.insert(r.pair_id.clone()) {
                    records.push(r);
                } else {
                    report.malformed.push(RowIssue { line, pair_id, reason: "duplicate pair_id".into() });
                }
            }
            Err(reason) => report.malformed.push(RowIssue { line, pair_id, reason }),
        }
    }
    if report.rows == 0 {
        report.warnings.push("manifest has no rows".into());
    }
    if report.malformed.len() * 100 > report.rows {
        return Err(Error::LoadAborted {
            malformed: report.malformed.len(),
            total: report.rows,
            issues: report.malformed.iter().map(ToString::to_string).collect(),
        });
    }
    for issue in &report.malformed {
        report.warnings.push(format!("skipped {issue}"));
    }
    for w in &report.warnings {
        log::warn!("{}: {w}", manifest.display());
    }
    if !report.ties.is_empty() {
        log::info!("{}: rejected {} tie rows", manifest.display(), report.ties.len());
    }
    Ok(Dataset { root, records, report })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Bucket sizes for `n` records: train `⌊0.7n⌋`, val `⌊0.1n⌋`, test takes
/// the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let val = n / 10;
    (train, val, n - train - val)
}

/// Seeded shuffle of pair ids, then a 70/10/20 cut.
pub fn split_dataset(records: &[ComparisonRecord], seed: u64) -> Result<DatasetSplit> {
    if records.len() < 10 {
        return Err(invalid(format!("splitting needs at least 10 records, got {}", records.len())));
    }
    let mut ids: Vec<String> = records.iter().map(|r| r.pair_id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_sizes(ids.len());
    let test = ids.split_off(train + val);
    let val_ids = ids.split_off(train);
    Ok(DatasetSplit {
        seed,
        train: ids,
        val: val_ids,
        test,
    })
}
