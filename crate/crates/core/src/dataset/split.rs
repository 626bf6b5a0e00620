//! Stratified k-fold splitting and curriculum ordering.
//!
//! Splitting, per seed: each class (negatives, then positives) is taken in
//! patient-id order, shuffled with `CounterRng::new(seed, 1 + class)` and
//! dealt to folds round-robin. The dealing pointer carries over from the
//! negatives to the positives, which keeps fold sizes within one of each
//! other as well as per-class counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ingest::BinaryLabel;
use crate::rng::CounterRng;

use super::{parse_err, table_lines, DatasetError, Manifest};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const SPLIT_HEADER: &str = "seed\tfold\tpatient_id\trole";
pub const CURRICULUM_HEADER: &str = "rank\tpatient_id\tagatston\tdifficulty\tphase";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Train,
    Val,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FoldAssignment {
    /// Sorted patient ids.
    pub train: Vec<String>,
    /// Sorted patient ids.
    pub val: Vec<String>,
}

/// Fold assignments for one seed, indexed by fold.
pub fn stratified_kfold(m: &Manifest, k: usize, seed: u64) -> Result<Vec<FoldAssignment>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidSplit(format!("need at least 2 folds, got {k}")));
    }
    let mut val: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut next = 0usize;
    for (class_index, class) in [BinaryLabel::Negative, BinaryLabel::Positive].into_iter().enumerate() {
        let mut members: Vec<&str> =
            m.records.iter().filter(|r| r.binary == class).map(|r| r.patient_id.as_str()).collect();
        if members.len() < k {
            return Err(DatasetError::ClassTooSmall { class, count: members.len(), k });
        }
        CounterRng::new(seed, 1 + class_index as u64).shuffle(&mut members);
        for id in members {
            val[next].push(id.to_string());
            next = (next + 1) % k;
        }
    }
    Ok(val
        .into_iter()
        .map(|mut v| {
            v.sort();
            let train = m
                .records
                .iter()
                .filter(|r| v.binary_search(&r.patient_id).is_err())
                .map(|r| r.patient_id.clone())
                .collect();
            FoldAssignment { train, val: v }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub n_folds: usize,
    pub seeds: Vec<u64>,
    pub assignments: BTreeMap<(u64, usize), FoldAssignment>,
}

impl SplitPlan {
    pub fn build(m: &Manifest, k: usize, seeds: &[u64]) -> Result<Self, DatasetError> {
        let mut assignments = BTreeMap::new();
        for &seed in seeds {
            for (fold, a) in stratified_kfold(m, k, seed)?.into_iter().enumerate() {
                if assignments.insert((seed, fold), a).is_some() {
                    return Err(DatasetError::InvalidSplit(format!("seed {seed} listed twice")));
                }
            }
        }
        Ok(Self { n_folds: k, seeds: seeds.to_vec(), assignments })
    }

    pub fn get(&self, seed: u64, fold: usize) -> Option<&FoldAssignment> {
        self.assignments.get(&(seed, fold))
    }

    /// Rows `seed fold patient_id role` for one `(seed, fold)`: train rows
    /// then val rows, each by patient id.
    pub fn render_fold(&self, seed: u64, fold: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SPLIT_HEADER}");
        self.push_rows(&mut out, seed, fold);
        out
    }

    /// Every `(seed, fold)` in order, under one header.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SPLIT_HEADER}");
        for &(seed, fold) in self.assignments.keys() {
            self.push_rows(&mut out, seed, fold);
        }
        out
    }

    fn push_rows(&self, out: &mut String, seed: u64, fold: usize) {
        if let Some(a) = self.get(seed, fold) {
            for (role, ids) in [(Role::Train, &a.train), (Role::Val, &a.val)] {
                for id in ids {
                    let _ = writeln!(out, "{seed}\t{fold}\t{id}\t{}", role.as_str());
                }
            }
        }
    }

    /// Parses one or more split tables (each with its header) into a plan.
    /// Seeds keep their first-seen order; `n_folds` is the largest fold index + 1.
    pub fn parse(texts: &[&str]) -> Result<Self, DatasetError> {
        let mut assignments: BTreeMap<(u64, usize), FoldAssignment> = BTreeMap::new();
        let mut seeds = Vec::new();
        for text in texts {
            let mut lines = table_lines(text);
            match lines.next() {
                Some((_, h)) if h == SPLIT_HEADER => {}
                _ => return Err(parse_err(1, "missing split header")),
            }
            for (idx, line) in lines {
                let n = idx + 1;
                if line.is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split('\t').collect();
                if f.len() != 4 || f[2].is_empty() {
                    return Err(parse_err(n, "expected `seed fold patient_id role`"));
                }
                let seed: u64 = f[0].parse().map_err(|_| parse_err(n, format!("bad seed `{}`", f[0])))?;
                let fold: usize = f[1].parse().map_err(|_| parse_err(n, format!("bad fold `{}`", f[1])))?;
                if !seeds.contains(&seed) {
                    seeds.push(seed);
                }
                let a = assignments.entry((seed, fold)).or_default();
                match f[3] {
                    "train" => a.train.push(f[2].to_string()),
                    "val" => a.val.push(f[2].to_string()),
                    r => return Err(parse_err(n, format!("bad role `{r}`"))),
                }
            }
        }
        for a in assignments.values_mut() {
            a.train.sort();
            a.val.sort();
        }
        let n_folds = assignments.keys().map(|&(_, f)| f + 1).max().unwrap_or(0);
        Ok(Self { n_folds, seeds, assignments })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Extremes,
    Borderline,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Extremes => 1,
            Phase::Borderline => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumEntry {
    pub rank: usize,
    pub patient_id: String,
    pub agatston: f64,
    pub difficulty: f64,
    pub phase: Phase,
}

/// Patients by `|agatston − 100|` descending, ties by id. The first
/// `ceil(phase1_fraction · n)` entries form phase 1.
pub fn curriculum_order(m: &Manifest, phase1_fraction: f64) -> Vec<CurriculumEntry> {
    let mut entries: Vec<(f64, &str, f64)> =
        m.records.iter().map(|r| ((r.agatston - 100.0).abs(), r.patient_id.as_str(), r.agatston)).collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let cut = (phase1_fraction.clamp(0.0, 1.0) * entries.len() as f64).ceil() as usize;
    entries
        .into_iter()
        .enumerate()
        .map(|(rank, (difficulty, id, agatston))| CurriculumEntry {
            rank,
            patient_id: id.to_string(),
            agatston,
            difficulty,
            phase: if rank < cut { Phase::Extremes } else { Phase::Borderline },
        })
        .collect()
}

pub fn render_curriculum(entries: &[CurriculumEntry]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CURRICULUM_HEADER}");
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", e.rank, e.patient_id, e.agatston, e.difficulty, e.phase.number());
    }
    out
}

pub fn parse_curriculum(text: &str) -> Result<Vec<CurriculumEntry>, DatasetError> {
    let mut lines = table_lines(text);
    match lines.next() {
        Some((_, h)) if h == CURRICULUM_HEADER => {}
        _ => return Err(parse_err(1, "missing curriculum header")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(parse_err(n, "expected 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(n, format!("bad number `{s}`")));
        out.push(CurriculumEntry {
            rank: f[0].parse().map_err(|_| parse_err(n, "bad rank"))?,
            patient_id: f[1].to_string(),
            agatston: num(f[2])?,
            difficulty: num(f[3])?,
            phase: match f[4] {
                "1" => Phase::Extremes,
                "2" => Phase::Borderline,
                p => return Err(parse_err(n, format!("bad phase `{p}`"))),
            },
        });
    }
    Ok(out)
}
