//! Prediction logs, run sets, paired comparisons and the report table.
//!
//! A run set is a directory holding one log per run, named
//! `seed<S>_fold<F>.tsv`. A log has the header
//! `epoch patient_id score label` (tab-separated) and one row per
//! (epoch, validation patient). A comparison spec is a TSV with header
//! `name run_set_a run_set_b`; run-set paths are relative to the spec file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{epoch_select, mean, roc_auc, wilcoxon_with_cutoff, StatsError, WilcoxonResult};

pub const RUN_LOG_HEADER: &str = "epoch\tpatient_id\tscore\tlabel";
pub const SPEC_HEADER: &str = "name\trun_set_a\trun_set_b";
pub const REPORT_COLUMNS: [&str; 5] = ["Comparison", "Stat", "p-value", "Mean AUC A", "Mean AUC B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunId {
    pub seed: u64,
    pub fold: usize,
}

impl RunId {
    pub fn file_name(&self) -> String {
        format!("seed{}_fold{}.tsv", self.seed, self.fold)
    }

    pub fn from_file_name(name: &str) -> Option<Self> {
        let stem = name.strip_suffix(".tsv")?;
        let (s, f) = stem.strip_prefix("seed")?.split_once("_fold")?;
        Some(Self { seed: s.parse().ok()?, fold: f.parse().ok()? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `(patient_id, score, label)` sorted by patient id.
    pub samples: Vec<(String, f64, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: String,
    pub id: RunId,
    pub epochs: Vec<EpochRecord>,
}

impl RunLog {
    pub fn parse(text: &str, config: &str, id: RunId, path: &str) -> Result<Self, StatsError> {
        let err = |line: usize, message: String| StatsError::Parse { path: path.to_string(), line, message };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == RUN_LOG_HEADER => {}
            _ => return Err(err(1, format!("expected header `{RUN_LOG_HEADER}`"))),
        }
        let mut by_epoch: BTreeMap<usize, Vec<(String, f64, bool)>> = BTreeMap::new();
        for (idx, line) in lines {
            let n = idx + 1;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err(n, format!("expected 4 fields, found {}", f.len())));
            }
            let epoch: usize = f[0].parse().map_err(|_| err(n, format!("bad epoch `{}`", f[0])))?;
            let score: f64 = f[2].parse().map_err(|_| err(n, format!("bad score `{}`", f[2])))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(err(n, format!("score {score} outside [0, 1]")));
            }
            let label = match f[3] {
                "0" => false,
                "1" => true,
                l => return Err(err(n, format!("bad label `{l}`"))),
            };
            by_epoch.entry(epoch).or_default().push((f[1].to_string(), score, label));
        }
        let mut epochs = Vec::with_capacity(by_epoch.len());
        let mut reference: Option<Vec<String>> = None;
        for (epoch, mut samples) in by_epoch {
            samples.sort_by(|a, b| a.0.cmp(&b.0));
            if samples.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(err(0, format!("epoch {epoch} lists a patient twice")));
            }
            let ids: Vec<String> = samples.iter().map(|s| s.0.clone()).collect();
            match &reference {
                None => reference = Some(ids),
                Some(r) if *r != ids => {
                    return Err(err(0, format!("epoch {epoch} covers a different patient set than epoch 1")))
                }
                _ => {}
            }
            epochs.push(EpochRecord { epoch, samples });
        }
        if epochs.first().map(|e| e.epoch) != Some(1) {
            return Err(err(0, "epochs must start at 1".into()));
        }
        Ok(Self { config: config.to_string(), id, epochs })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{RUN_LOG_HEADER}");
        for e in &self.epochs {
            for (id, score, label) in &e.samples {
                let _ = writeln!(out, "{}\t{id}\t{score}\t{}", e.epoch, u8::from(*label));
            }
        }
        out
    }

    pub fn per_epoch_auc(&self) -> Result<Vec<f64>, StatsError> {
        self.epochs
            .iter()
            .map(|e| {
                let scores: Vec<f64> = e.samples.iter().map(|s| s.1).collect();
                let labels: Vec<bool> = e.samples.iter().map(|s| s.2).collect();
                roc_auc(&scores, &labels)
            })
            .collect()
    }

    /// The run's AUC under the epoch-selection rule.
    pub fn selected_auc(&self) -> Result<f64, StatsError> {
        epoch_select(&self.per_epoch_auc()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub config: String,
    pub runs: BTreeMap<RunId, RunLog>,
}

impl RunSet {
    /// Selected AUC per run, in run-id order.
    pub fn selected_aucs(&self) -> Result<BTreeMap<RunId, f64>, StatsError> {
        self.runs.iter().map(|(id, r)| Ok((*id, r.selected_auc()?))).collect()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StatsError {
    StatsError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Loads every `seed<S>_fold<F>.tsv` in `dir`; the directory name is the config name.
pub fn load_run_set(dir: &Path) -> Result<RunSet, StatsError> {
    let config = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut runs = BTreeMap::new();
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).map_err(|e| io_err(dir, e))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for path in entries {
        let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(RunId::from_file_name) else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        runs.insert(id, RunLog::parse(&text, &config, id, &path.display().to_string())?);
    }
    if runs.is_empty() {
        return Err(io_err(dir, "no seed<S>_fold<F>.tsv run logs found"));
    }
    Ok(RunSet { config, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSpec {
    pub name: String,
    pub run_set_a: PathBuf,
    pub run_set_b: PathBuf,
}

pub fn parse_comparison_spec(text: &str, base: &Path) -> Result<Vec<ComparisonSpec>, StatsError> {
    let path = base.display().to_string();
    let err = |line: usize, message: &str| StatsError::Parse { path: path.clone(), line, message: message.into() };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SPEC_HEADER => {}
        _ => return Err(err(1, "expected header `name\trun_set_a\trun_set_b`")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || f.iter().any(|s| s.is_empty()) {
            return Err(err(idx + 1, "expected three non-empty fields"));
        }
        out.push(ComparisonSpec { name: f[0].into(), run_set_a: base.join(f[1]), run_set_b: base.join(f[2]) });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub name: String,
    pub keys: Vec<RunId>,
    pub auc_a: Vec<f64>,
    pub auc_b: Vec<f64>,
    pub test: WilcoxonResult,
}

impl PairedComparison {
    /// Pairs per-run AUCs by `(seed, fold)`; any key present on one side only is an error.
    pub fn new(
        name: &str,
        a: &BTreeMap<RunId, f64>,
        b: &BTreeMap<RunId, f64>,
        cutoff: usize,
    ) -> Result<Self, StatsError> {
        let ka: BTreeSet<_> = a.keys().collect();
        let kb: BTreeSet<_> = b.keys().collect();
        if ka != kb {
            let only_a: Vec<_> = ka.difference(&kb).map(|k| format!("seed{}_fold{}", k.seed, k.fold)).collect();
            let only_b: Vec<_> = kb.difference(&ka).map(|k| format!("seed{}_fold{}", k.seed, k.fold)).collect();
            return Err(StatsError::Alignment(format!(
                "{name}: run keys differ (only in A: {only_a:?}, only in B: {only_b:?})"
            )));
        }
        let keys: Vec<RunId> = a.keys().copied().collect();
        let auc_a: Vec<f64> = keys.iter().map(|k| a[k]).collect();
        let auc_b: Vec<f64> = keys.iter().map(|k| b[k]).collect();
        let test = wilcoxon_with_cutoff(&auc_a, &auc_b, cutoff);
        Ok(Self { name: name.to_string(), keys, auc_a, auc_b, test })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub comparison: String,
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub significant: bool,
    pub degenerate: bool,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
}

pub fn compare_report(comparisons: &[PairedComparison], alpha: f64) -> Report {
    let rows = comparisons
        .par_iter()
        .map(|c| ReportRow {
            comparison: c.name.clone(),
            statistic: c.test.statistic,
            p_value: c.test.p_value,
            mean_a: mean(&c.auc_a),
            mean_b: mean(&c.auc_b),
            significant: c.test.p_value < alpha,
            degenerate: c.test.is_degenerate(),
            n: c.test.n,
        })
        .collect();
    Report { alpha, rows }
}

impl Report {
    /// Aligned text table; significant p-values carry a trailing `*`.
    pub fn render_text(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.comparison.clone(),
                    r.statistic.map(|s| format!("{s:.1}")).unwrap_or_else(|| "-".into()),
                    format!("{:.3}{}", r.p_value, if r.significant { "*" } else { "" }),
                    format!("{:.3}", r.mean_a),
                    format!("{:.3}", r.mean_b),
                ]
            })
            .collect();
        let mut widths = REPORT_COLUMNS.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            let mut parts = Vec::new();
            for (i, c) in row.iter().enumerate() {
                let pad = widths[i] - c.chars().count();
                parts.push(if i == 0 { format!("{c}{}", " ".repeat(pad)) } else { format!("{}{c}", " ".repeat(pad)) });
            }
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &REPORT_COLUMNS.map(String::from));
        line(&mut out, &widths.map(|w| "-".repeat(w)));
        for row in &cells {
            line(&mut out, row);
        }
        let _ = writeln!(out, "* p < {}", self.alpha);
        out
    }

    /// Machine-readable rows at full precision.
    pub fn render_tsv(&self) -> String {
        let mut out =
            String::from("comparison\tstatistic\tp_value\tmean_auc_a\tmean_auc_b\tsignificant\tdegenerate\tn\n");
        for r in &self.rows {
            let stat = r.statistic.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{}\t{stat}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.comparison,
                r.p_value,
                r.mean_a,
                r.mean_b,
                u8::from(r.significant),
                u8::from(r.degenerate),
                r.n
            );
        }
        out
    }
}
