//! Subcommands. Per-patient failures are collected into the [`Summary`]
//! instead of aborting; anything that makes the whole stage impossible is an
//! error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cacforge::dataset::{
    build_manifest, curriculum_order, render_augment_table, render_curriculum, sample_augment, table_comments,
    with_comments, PatientRecord, SplitPlan,
};
use cacforge::enhance::{apply_mode, upsample_sagittal, Mode};
use cacforge::ingest::{
    agatston_score, gate_slice_coverage, load_mask, load_volume, resample_isotropic, BinaryLabel, CalciumMask, Gate,
    Volume,
};
use cacforge::projector::{
    read_drr, render_drr, write_drr, write_png_preview, View, ViewPose, PREVIEW_FILE, PROVENANCE_FILE,
};
use cacforge::raster::bundle_files;
use cacforge::stats::{compare_report, load_run_set, parse_comparison_spec, PairedComparison};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const SCORES_FILE: &str = "scores.tsv";
pub const SCORES_HEADER: &str = "patient_id\tagatston\tlabel\tslices\tgate";
pub const CT_DIR: &str = "ct";
pub const MASK_DIR: &str = "mask";
pub const DRR_DIR: &str = "drr";
pub const ENHANCED_DIR: &str = "enhanced";
pub const DATASET_DIR: &str = "dataset";
pub const STATS_DIR: &str = "stats";

#[derive(Debug, Default)]
pub struct Summary {
    pub lines: Vec<String>,
    pub failures: Vec<String>,
}

impl Summary {
    fn absorb(&mut self, other: Summary) {
        self.lines.extend(other.lines);
        self.failures.extend(other.failures);
    }
}

/// Everything a stage writes is tagged with these.
fn stamp(cfg: &PipelineConfig) -> BTreeMap<String, String> {
    BTreeMap::from([("config_hash".to_string(), cfg.hash())])
}

fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Patient ids become directory names, so they must be plain path components.
fn check_id(id: &str) -> Result<(), String> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\', '\t', '\n']) {
        return Err(format!("patient id `{id}` is not usable as a directory name"));
    }
    Ok(())
}

/// Per-patient input directories (`<input>/<name>/ct`, optional `<name>/mask`), sorted by name.
pub fn discover(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        bail!("input directory {} does not exist", input.display());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub patient_id: String,
    pub agatston: f64,
    pub label: BinaryLabel,
    pub slices: usize,
    pub gate: Gate,
}

fn gate_str(g: Gate) -> &'static str {
    match g {
        Gate::Accepted => "accepted",
        Gate::Rejected => "rejected",
    }
}

fn score_one(dir: &Path, cfg: &PipelineConfig) -> Result<ScoreRow, String> {
    let v = load_volume(&dir.join(CT_DIR)).map_err(|e| e.to_string())?;
    check_id(v.patient_id())?;
    let mask_dir = dir.join(MASK_DIR);
    let m =
        if mask_dir.exists() { load_mask(&mask_dir).map_err(|e| e.to_string())? } else { CalciumMask::empty_like(&v) };
    let label = agatston_score(&v, &m).map_err(|e| format!("{}: {e}", mask_dir.display()))?;
    Ok(ScoreRow {
        patient_id: v.patient_id().to_string(),
        agatston: label.agatston,
        label: label.binary,
        slices: v.shape()[2],
        gate: gate_slice_coverage(&v, cfg.ingest.min_slices),
    })
}

pub fn render_scores(rows: &[ScoreRow], cfg: &PipelineConfig) -> String {
    let mut t = format!("{SCORES_HEADER}\n");
    for r in rows {
        let _ =
            writeln!(t, "{}\t{}\t{}\t{}\t{}", r.patient_id, r.agatston, r.label.as_u8(), r.slices, gate_str(r.gate));
    }
    with_comments(&stamp(cfg), &t)
}

pub fn parse_scores(text: &str, path: &Path) -> Result<Vec<ScoreRow>> {
    let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == SCORES_HEADER => {}
        _ => bail!("{}: missing score table header", path.display()),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let bad = || anyhow!("{}: line {}: malformed score row", path.display(), idx + 1);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        rows.push(ScoreRow {
            patient_id: f[0].to_string(),
            agatston: f[1].parse().map_err(|_| bad())?,
            label: f[2].parse().ok().and_then(BinaryLabel::from_u8).ok_or_else(bad)?,
            slices: f[3].parse().map_err(|_| bad())?,
            gate: match f[4] {
                "accepted" => Gate::Accepted,
                "rejected" => Gate::Rejected,
                _ => return Err(bad()),
            },
        });
    }
    Ok(rows)
}

/// Scores every patient and writes `<output>/scores.tsv`.
pub fn cmd_score(cfg: &PipelineConfig) -> Result<(Vec<ScoreRow>, Summary)> {
    let dirs = discover(&cfg.paths.input)?;
    let results: Vec<Result<ScoreRow, String>> = dirs.par_iter().map(|d| score_one(d, cfg)).collect();
    let mut summary = Summary::default();
    let mut rows: BTreeMap<String, ScoreRow> = BTreeMap::new();
    for (dir, r) in dirs.iter().zip(results) {
        match r {
            Ok(row) if rows.contains_key(&row.patient_id) => {
                summary.failures.push(format!("{}: duplicate patient id {}", dir.display(), row.patient_id))
            }
            Ok(row) => {
                rows.insert(row.patient_id.clone(), row);
            }
            Err(e) => summary.failures.push(e),
        }
    }
    let rows: Vec<ScoreRow> = rows.into_values().collect();
    write(&cfg.paths.output.join(SCORES_FILE), &render_scores(&rows, cfg))?;
    summary.lines.push(format!("score: {} patients scored, {} failed", rows.len(), summary.failures.len()));
    Ok((rows, summary))
}

/// Cache key stored in an artifact's provenance; a matching key means the artifact is current.
fn cached(dir: &Path, key: &str) -> bool {
    fs::read_to_string(dir.join(PROVENANCE_FILE))
        .ok()
        .and_then(|t| cacforge::projector::Provenance::parse(&t).ok())
        .is_some_and(|p| p.extra.get("cache_key").map(String::as_str) == Some(key))
        && read_drr(dir).is_ok()
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    rendered: usize,
    cached: usize,
    gated: usize,
}

fn prepare(v: &Volume, cfg: &PipelineConfig) -> Result<Volume, String> {
    let target = if cfg.ingest.resample_target > 0.0 { cfg.ingest.resample_target } else { v.spacing()[0] };
    let iso = resample_isotropic(v, target).map_err(|e| format!("{}: {e}", v.patient_id()))?;
    match cfg.upsample_config() {
        None => Ok(iso),
        Some(u) => {
            let up = upsample_sagittal(&iso, &u).map_err(|e| format!("{}: {e}", v.patient_id()))?;
            resample_isotropic(&up, target / u.factor as f64).map_err(|e| format!("{}: {e}", v.patient_id()))
        }
    }
}

fn project_one(dir: &Path, cfg: &PipelineConfig, views: &[View], preview: bool) -> Result<Counts, String> {
    let ct = dir.join(CT_DIR);
    let (header, payload) = bundle_files(&ct);
    let input_hash = hash_parts(&[&read(&header)?, &read(&payload)?]);
    let v = load_volume(&ct).map_err(|e| e.to_string())?;
    check_id(v.patient_id())?;
    let mut counts = Counts::default();
    if gate_slice_coverage(&v, cfg.ingest.min_slices) == Gate::Rejected {
        counts.gated = 1;
        return Ok(counts);
    }
    let config_hash = cfg.hash();
    let mut prepared: Option<Volume> = None;
    for &view in views {
        let out = cfg.paths.output.join(DRR_DIR).join(v.patient_id()).join(view.as_str());
        let key = hash_parts(&[b"project", config_hash.as_bytes(), view.as_str().as_bytes(), input_hash.as_bytes()]);
        if cached(&out, &key) {
            counts.cached += 1;
            continue;
        }
        if prepared.is_none() {
            prepared = Some(prepare(&v, cfg)?);
        }
        let vol = prepared.as_ref().expect("prepared above");
        let mut img =
            render_drr(vol, &cfg.geometry(), ViewPose::new(view)).map_err(|e| format!("{}: {e}", v.patient_id()))?;
        img.provenance.extra.insert("config_hash".into(), config_hash.clone());
        img.provenance.extra.insert("cache_key".into(), key);
        write_drr(&img, &out).map_err(|e| e.to_string())?;
        if preview {
            write_png_preview(&img, &out.join(PREVIEW_FILE)).map_err(|e| e.to_string())?;
        }
        counts.rendered += 1;
    }
    Ok(counts)
}

/// Renders the configured views for every patient passing the slice gate.
pub fn cmd_project(cfg: &PipelineConfig, preview: bool) -> Result<Summary> {
    let views = cfg.views()?;
    let dirs = discover(&cfg.paths.input)?;
    let results: Vec<Result<Counts, String>> = dirs.par_iter().map(|d| project_one(d, cfg, &views, preview)).collect();
    let mut summary = Summary::default();
    let mut total = Counts::default();
    for r in results {
        match r {
            Ok(c) => {
                total.rendered += c.rendered;
                total.cached += c.cached;
                total.gated += c.gated;
            }
            Err(e) => summary.failures.push(e),
        }
    }
    summary.lines.push(format!(
        "project: rendered {}, cached {}, gated {}, failed {}",
        total.rendered,
        total.cached,
        total.gated,
        summary.failures.len()
    ));
    Ok(summary)
}

/// `(patient dir name, view)` pairs under `<output>/drr`, sorted.
fn projected(output: &Path) -> Result<Vec<(String, View)>> {
    let root = output.join(DRR_DIR);
    if !root.is_dir() {
        return Ok(vec![]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&root).with_context(|| format!("listing {}", root.display()))? {
        let path = entry?.path();
        let Some(id) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        for view in View::ALL {
            if path.join(view.as_str()).is_dir() {
                out.push((id.to_string(), view));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn enhance_one(cfg: &PipelineConfig, id: &str, view: View, mode: Mode) -> Result<bool, String> {
    let src = cfg.paths.output.join(DRR_DIR).join(id).join(view.as_str());
    let (header, payload) = bundle_files(&src);
    let provenance = fs::read(src.join(PROVENANCE_FILE)).unwrap_or_default();
    let config_hash = cfg.hash();
    let key = hash_parts(&[
        b"enhance",
        config_hash.as_bytes(),
        mode.as_str().as_bytes(),
        &read(&header)?,
        &read(&payload)?,
        &provenance,
    ]);
    let out = cfg.paths.output.join(ENHANCED_DIR).join(mode.as_str()).join(id).join(view.as_str());
    if cached(&out, &key) {
        return Ok(false);
    }
    let img = read_drr(&src).map_err(|e| e.to_string())?;
    let mut img = apply_mode(&img, &cfg.enhance_config(mode)).map_err(|e| format!("{}: {e}", src.display()))?;
    img.provenance.extra.insert("config_hash".into(), config_hash);
    img.provenance.extra.insert("cache_key".into(), key);
    write_drr(&img, &out).map_err(|e| e.to_string())?;
    Ok(true)
}

/// Applies every configured mode to every projected DRR.
pub fn cmd_enhance(cfg: &PipelineConfig) -> Result<Summary> {
    let modes = cfg.modes()?;
    let jobs: Vec<(String, View, Mode)> = projected(&cfg.paths.output)?
        .into_iter()
        .flat_map(|(id, view)| modes.iter().map(move |&m| (id.clone(), view, m)))
        .collect();
    let results: Vec<Result<bool, String>> = jobs.par_iter().map(|(id, v, m)| enhance_one(cfg, id, *v, *m)).collect();
    let mut summary = Summary::default();
    let mut done = 0;
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(true) => done += 1,
            Ok(false) => skipped += 1,
            Err(e) => summary.failures.push(e),
        }
    }
    summary.lines.push(format!("enhance: wrote {done}, cached {skipped}, failed {}", summary.failures.len()));
    Ok(summary)
}

fn dataset_for_mode(cfg: &PipelineConfig, scores: &[ScoreRow], mode: Mode, views: &[View]) -> Result<Summary> {
    let out_root = &cfg.paths.output;
    let mut summary = Summary::default();
    let mut records = Vec::new();
    for row in scores.iter().filter(|r| r.gate == Gate::Accepted) {
        let mut rec = PatientRecord::new(row.patient_id.clone(), row.agatston, mode);
        let mut missing = None;
        for &view in views {
            let rel = format!("{ENHANCED_DIR}/{}/{}/{}", mode.as_str(), row.patient_id, view.as_str());
            if !out_root.join(&rel).join(cacforge::raster::HEADER_FILE).is_file() {
                missing = Some(rel);
                break;
            }
            rec.drr_paths.insert(view, rel);
        }
        match missing {
            Some(rel) => {
                summary.failures.push(format!("{}: missing DRR {}", row.patient_id, out_root.join(rel).display()))
            }
            None => records.push(rec),
        }
    }
    let manifest = build_manifest(records, Some(out_root))?;
    let plan = SplitPlan::build(&manifest, cfg.dataset.folds, &cfg.dataset.seeds)?;
    let dir = out_root.join(DATASET_DIR).join(mode.as_str());
    let tags = stamp(cfg);
    write(&dir.join("manifest.tsv"), &with_comments(&tags, &manifest.render()))?;
    for &(seed, fold) in plan.assignments.keys() {
        let name = format!("seed{seed}_fold{fold}.tsv");
        write(&dir.join("splits").join(name), &with_comments(&tags, &plan.render_fold(seed, fold)))?;
    }
    let curriculum = curriculum_order(&manifest, cfg.dataset.curriculum_phase1_fraction);
    write(&dir.join("curriculum.tsv"), &with_comments(&tags, &render_curriculum(&curriculum)))?;
    let draws = cfg.dataset.augment_draws;
    let mut augment = Vec::new();
    for &seed in &cfg.dataset.seeds {
        for (i, rec) in manifest.records.iter().enumerate() {
            for d in 0..draws {
                augment.push((sample_augment(seed, i as u64 * draws + d), rec.patient_id.clone()));
            }
        }
    }
    write(&dir.join("augment.tsv"), &with_comments(&tags, &render_augment_table(&augment)))?;
    let (neg, pos) = manifest.class_counts();
    summary.lines.push(format!(
        "dataset {}: {} patients ({} negative, {} positive), {} split files",
        mode,
        manifest.len(),
        neg,
        pos,
        plan.assignments.len()
    ));
    Ok(summary)
}

/// Builds manifest, split files, curriculum and augmentation tables per mode.
pub fn cmd_dataset(cfg: &PipelineConfig) -> Result<Summary> {
    let path = cfg.paths.output.join(SCORES_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {} (run `score` first)", path.display()))?;
    let found = table_comments(&text).get("config_hash").cloned().unwrap_or_default();
    let scores = parse_scores(&text, &path)?;
    let views = cfg.views()?;
    let mut summary = Summary::default();
    if found != cfg.hash() {
        summary.lines.push(format!("dataset: note: {} was written under config {found}", path.display()));
    }
    for mode in cfg.modes()? {
        summary.absorb(dataset_for_mode(cfg, &scores, mode, &views)?);
    }
    Ok(summary)
}

/// Paired comparisons from a spec file; writes `report.txt` and `report.tsv`.
pub fn cmd_stats(cfg: &PipelineConfig, spec: &Path, seeds: Option<&[u64]>) -> Result<(String, Summary)> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let base = spec.parent().unwrap_or_else(|| Path::new("."));
    let specs = parse_comparison_spec(&text, base)?;
    let mut summary = Summary::default();
    let mut comparisons = Vec::new();
    for s in &specs {
        let aucs = |dir: &Path| -> Result<BTreeMap<_, _>, String> {
            let mut set = load_run_set(dir).map_err(|e| e.to_string())?;
            if let Some(seeds) = seeds {
                set.runs.retain(|id, _| seeds.contains(&id.seed));
            }
            set.selected_aucs().map_err(|e| format!("{}: {e}", dir.display()))
        };
        let pair = aucs(&s.run_set_a).and_then(|a| {
            let b = aucs(&s.run_set_b)?;
            PairedComparison::new(&s.name, &a, &b, cfg.stats.exact_cutoff).map_err(|e| e.to_string())
        });
        match pair {
            Ok(c) => comparisons.push(c),
            Err(e) => summary.failures.push(format!("{}: {e}", s.name)),
        }
    }
    let report = compare_report(&comparisons, cfg.stats.alpha);
    let tags = stamp(cfg);
    let dir = cfg.paths.output.join(STATS_DIR);
    let table = report.render_text();
    write(&dir.join("report.txt"), &with_comments(&tags, &table))?;
    write(&dir.join("report.tsv"), &with_comments(&tags, &report.render_tsv()))?;
    summary.lines.push(format!("stats: {} comparisons, {} failed", comparisons.len(), summary.failures.len()));
    Ok((table, summary))
}
