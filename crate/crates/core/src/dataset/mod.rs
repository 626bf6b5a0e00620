//! Dataset manifests, stratified patient-level folds, curriculum order and
//! affine augmentation.
//!
//! All text formats are UTF-8, tab-separated, one record per line, with a
//! header line naming the columns. Reals are written in shortest round-trip
//! decimal form, so parsing reproduces the written value exactly.

mod augment;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::enhance::Mode;
use crate::ingest::BinaryLabel;
use crate::projector::View;

pub use augment::{
    apply_augment, parse_augment_table, render_augment_table, sample_augment, AugmentParams, ROTATION_DEG, SCALE,
    SHEAR_DEG, TRANSLATION,
};
pub use split::{
    curriculum_order, parse_curriculum, render_curriculum, stratified_kfold, CurriculumEntry, FoldAssignment, Phase,
    Role, SplitPlan, DEFAULT_FOLDS, DEFAULT_SEEDS,
};

pub const MANIFEST_HEADER: &str = "patient_id\tagatston\tlabel\tmode\tdrr_pa\tdrr_la";
const NO_PATH: &str = "-";

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),
    #[error("patient `{patient}`: DRR file `{path}` does not exist")]
    MissingFile { patient: String, path: String },
    #[error("patient `{patient}`: label {label:?} disagrees with score {agatston}")]
    InconsistentLabel { patient: String, agatston: f64, label: BinaryLabel },
    #[error("class {class:?} has {count} patients, fewer than {k} folds")]
    ClassTooSmall { class: BinaryLabel, count: usize, k: usize },
    #[error("invalid split request: {0}")]
    InvalidSplit(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Lines of a table after its leading `#` comment block, zero-based.
pub(crate) fn table_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().skip_while(|(_, l)| l.starts_with('#'))
}

/// `key=value` pairs from a table's leading `# key=value` lines.
pub fn table_comments(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map_while(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Prefixes a rendered table with `# key=value` lines.
pub fn with_comments(comments: &BTreeMap<String, String>, table: &str) -> String {
    let mut out = String::new();
    for (k, v) in comments {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(table);
    out
}

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse { line, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub agatston: f64,
    pub binary: BinaryLabel,
    /// Paths relative to the manifest's directory.
    pub drr_paths: BTreeMap<View, String>,
    pub mode: Mode,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, agatston: f64, mode: Mode) -> Self {
        Self {
            patient_id: patient_id.into(),
            agatston,
            binary: BinaryLabel::from_score(agatston),
            drr_paths: BTreeMap::new(),
            mode,
        }
    }
}

/// Records sorted by patient id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<PatientRecord>,
}

fn check_field(line: usize, what: &str, s: &str) -> Result<(), DatasetError> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(parse_err(line, format!("invalid {what} `{s}`")));
    }
    Ok(())
}

impl Manifest {
    /// `(negative, positive)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.records.iter().filter(|r| r.binary == BinaryLabel::Positive).count();
        (self.records.len() - pos, pos)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.patient_id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.records.binary_search_by(|r| r.patient_id.as_str().cmp(id)).ok().map(|i| &self.records[i])
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_HEADER}");
        for r in &self.records {
            let path = |v| r.drr_paths.get(&v).map(String::as_str).unwrap_or(NO_PATH);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.patient_id,
                r.agatston,
                r.binary.as_u8(),
                r.mode,
                path(View::Pa),
                path(View::La)
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut lines = table_lines(text);
        match lines.next() {
            Some((_, h)) if h == MANIFEST_HEADER => {}
            _ => return Err(parse_err(1, "missing manifest header")),
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            let n = idx + 1;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(parse_err(n, format!("expected 6 fields, found {}", f.len())));
            }
            check_field(n, "patient id", f[0])?;
            let agatston: f64 = f[1].parse().map_err(|_| parse_err(n, format!("bad score `{}`", f[1])))?;
            if !(agatston >= 0.0 && agatston.is_finite()) {
                return Err(parse_err(n, "score must be finite and non-negative"));
            }
            let binary = f[2]
                .parse::<u8>()
                .ok()
                .and_then(BinaryLabel::from_u8)
                .ok_or_else(|| parse_err(n, format!("bad label `{}`", f[2])))?;
            let mode = f[3].parse::<Mode>().map_err(|e| parse_err(n, e.to_string()))?;
            let mut drr_paths = BTreeMap::new();
            for (view, p) in [(View::Pa, f[4]), (View::La, f[5])] {
                if p != NO_PATH {
                    check_field(n, "path", p)?;
                    drr_paths.insert(view, p.to_string());
                }
            }
            records.push(PatientRecord { patient_id: f[0].to_string(), agatston, binary, drr_paths, mode });
        }
        build_manifest(records, None)
    }
}

/// Validates and sorts records. With `base`, every DRR path must exist
/// relative to it.
pub fn build_manifest(mut records: Vec<PatientRecord>, base: Option<&Path>) -> Result<Manifest, DatasetError> {
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.patient_id.as_str()) {
            return Err(DatasetError::DuplicateId(r.patient_id.clone()));
        }
        if r.binary != BinaryLabel::from_score(r.agatston) {
            return Err(DatasetError::InconsistentLabel {
                patient: r.patient_id.clone(),
                agatston: r.agatston,
                label: r.binary,
            });
        }
        if let Some(base) = base {
            for p in r.drr_paths.values() {
                if !base.join(p).exists() {
                    return Err(DatasetError::MissingFile { patient: r.patient_id.clone(), path: p.clone() });
                }
            }
        }
    }
    records.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(Manifest { records })
}
