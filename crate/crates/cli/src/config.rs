//! Declarative pipeline configuration (TOML).

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use cacforge::dataset::{DEFAULT_FOLDS, DEFAULT_SEEDS};
use cacforge::enhance::{EnhanceConfig, ExternalModel, Mode, UpsampleConfig, UpsampleMethod};
use cacforge::ingest::DEFAULT_MIN_SLICES;
use cacforge::projector::{ProjectionGeometry, View};
use cacforge::stats::EXACT_CUTOFF;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    /// 0 = one thread per core. Never affects output bytes.
    pub workers: usize,
    /// `pa`, `la` or `both`.
    pub views: String,
    pub ingest: IngestSection,
    pub geometry: GeometrySection,
    pub enhance: EnhanceSection,
    pub upsample: UpsampleSection,
    pub dataset: DatasetSection,
    pub stats: StatsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_slices: usize,
    /// Isotropic target in mm; 0 = the in-plane x spacing.
    pub resample_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub sdd: f64,
    pub source_to_isocenter: f64,
    pub det_cols: usize,
    pub det_rows: usize,
    pub det_spacing: f64,
    pub output_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSection {
    pub modes: Vec<String>,
    pub clahe_tiles: [usize; 2],
    pub clahe_clip: f64,
    pub clahe_with_unsharp: bool,
    pub unsharp_kernel: usize,
    pub unsharp_sigma: f64,
    pub unsharp_gain: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpsampleSection {
    pub enabled: bool,
    pub factor: usize,
    /// Empty = built-in bicubic.
    pub program: String,
    pub args: Vec<String>,
    pub timeout_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub curriculum_phase1_fraction: f64,
    pub augment_draws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub alpha: f64,
    pub exact_cutoff: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            workers: 0,
            views: "both".into(),
            ingest: IngestSection::default(),
            geometry: GeometrySection::default(),
            enhance: EnhanceSection::default(),
            upsample: UpsampleSection::default(),
            dataset: DatasetSection::default(),
            stats: StatsSection::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self { input: PathBuf::from("scans"), output: PathBuf::from("out") }
    }
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { min_slices: DEFAULT_MIN_SLICES, resample_target: 0.0 }
    }
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = ProjectionGeometry::default();
        Self {
            sdd: g.sdd,
            source_to_isocenter: g.source_to_isocenter,
            det_cols: g.det_cols,
            det_rows: g.det_rows,
            det_spacing: g.det_spacing,
            output_size: g.output_size,
        }
    }
}

impl Default for EnhanceSection {
    fn default() -> Self {
        let e = EnhanceConfig::default();
        Self {
            modes: Mode::ALL.iter().map(|m| m.to_string()).collect(),
            clahe_tiles: [e.clahe_tiles.0, e.clahe_tiles.1],
            clahe_clip: e.clahe_clip,
            clahe_with_unsharp: e.clahe_with_unsharp,
            unsharp_kernel: e.unsharp_kernel,
            unsharp_sigma: e.unsharp_sigma,
            unsharp_gain: e.unsharp_gain,
            gamma: e.gamma,
        }
    }
}

impl Default for UpsampleSection {
    fn default() -> Self {
        Self {
            enabled: false,
            factor: UpsampleConfig::default().factor,
            program: String::new(),
            args: vec![],
            timeout_secs: 60.0,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, seeds: DEFAULT_SEEDS.to_vec(), curriculum_phase1_fraction: 0.5, augment_draws: 1 }
    }
}

impl Default for StatsSection {
    fn default() -> Self {
        Self { alpha: 0.05, exact_cutoff: EXACT_CUTOFF }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        self.views()?;
        for m in self.modes()? {
            self.enhance_config(m).validate()?;
        }
        if self.upsample.enabled && self.upsample.factor == 0 {
            bail!("upsample.factor must be at least 1");
        }
        if !(self.upsample.timeout_secs > 0.0 && self.upsample.timeout_secs.is_finite()) {
            bail!("upsample.timeout_secs must be positive");
        }
        if self.ingest.resample_target < 0.0 || !self.ingest.resample_target.is_finite() {
            bail!("ingest.resample_target must be finite and non-negative");
        }
        if self.dataset.folds < 2 {
            bail!("dataset.folds must be at least 2");
        }
        if self.dataset.seeds.is_empty() {
            bail!("dataset.seeds must not be empty");
        }
        let mut seeds = self.dataset.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.dataset.seeds.len() {
            bail!("dataset.seeds has duplicates");
        }
        if !(0.0..=1.0).contains(&self.dataset.curriculum_phase1_fraction) {
            bail!("dataset.curriculum_phase1_fraction must lie in [0, 1]");
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            bail!("stats.alpha must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn geometry(&self) -> ProjectionGeometry {
        let g = &self.geometry;
        ProjectionGeometry {
            sdd: g.sdd,
            source_to_isocenter: g.source_to_isocenter,
            det_cols: g.det_cols,
            det_rows: g.det_rows,
            det_spacing: g.det_spacing,
            output_size: g.output_size,
        }
    }

    pub fn views(&self) -> Result<Vec<View>> {
        parse_views(&self.views)
    }

    pub fn modes(&self) -> Result<Vec<Mode>> {
        if self.enhance.modes.is_empty() {
            bail!("enhance.modes must not be empty");
        }
        let mut out = Vec::new();
        for s in &self.enhance.modes {
            let m: Mode = s.parse().map_err(|e| anyhow::anyhow!("enhance.modes: {e}"))?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn enhance_config(&self, mode: Mode) -> EnhanceConfig {
        let e = &self.enhance;
        EnhanceConfig {
            mode,
            clahe_tiles: (e.clahe_tiles[0], e.clahe_tiles[1]),
            clahe_clip: e.clahe_clip,
            unsharp_kernel: e.unsharp_kernel,
            unsharp_sigma: e.unsharp_sigma,
            unsharp_gain: e.unsharp_gain,
            gamma: e.gamma,
            clahe_with_unsharp: e.clahe_with_unsharp,
        }
    }

    pub fn upsample_config(&self) -> Option<UpsampleConfig> {
        let u = &self.upsample;
        if !u.enabled {
            return None;
        }
        let method = if u.program.is_empty() {
            UpsampleMethod::BicubicBaseline
        } else {
            UpsampleMethod::External(ExternalModel {
                program: u.program.clone(),
                args: u.args.clone(),
                timeout: Duration::from_secs_f64(u.timeout_secs),
            })
        };
        Some(UpsampleConfig { factor: u.factor, method })
    }

    /// Hash of everything that can change an artifact's bytes. Paths, worker
    /// count and the view selection only decide where and which artifacts are
    /// written, so they are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths = Paths { input: PathBuf::new(), output: PathBuf::new() };
        canonical.workers = 0;
        canonical.views = String::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_views(s: &str) -> Result<Vec<View>> {
    match s {
        "both" => Ok(View::ALL.to_vec()),
        other => match View::parse(other) {
            Some(v) => Ok(vec![v]),
            None => bail!("views must be pa, la or both, not `{other}`"),
        },
    }
}

/// `original`, `clahe`, `calc_focused`, a comma list of these, or `all`.
pub fn parse_modes(s: &str) -> Result<Vec<String>> {
    if s == "all" {
        return Ok(Mode::ALL.iter().map(|m| m.to_string()).collect());
    }
    s.split(',')
        .map(|m| m.trim().parse::<Mode>().map(|m| m.to_string()).map_err(|e| anyhow::anyhow!("--mode: {e}")))
        .collect()
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    s.split(',').map(|x| x.trim().parse::<u64>().with_context(|| format!("--seed-list: bad seed `{x}`"))).collect()
}
