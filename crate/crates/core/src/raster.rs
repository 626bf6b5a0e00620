//! On-disk raster bundles.
//!
//! A bundle is a directory holding two files:
//!
//! * `header` — UTF-8 `key = value` lines after a magic first line.
//! * `voxels.raw` — little-endian samples, x varying fastest.
//!
//! ```text
//! cacforge-raster 1
//! kind = volume
//! patient_id = P0001
//! shape = 512 512 48
//! spacing = 0.68 0.68 3
//! dtype = i16
//! axis_order = x-fastest
//! label.1 = LAD
//! ```
//!
//! The same layout carries CT volumes (`i16` or `f32`), calcium masks
//! (`u16`, with `label.N` entries) and 2-D DRRs (`f32`, two shape entries).
//! Headers are written canonically, so loading and re-writing a bundle that
//! this module produced is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: &str = "cacforge-raster 1";
pub const HEADER_FILE: &str = "header";
pub const PAYLOAD_FILE: &str = "voxels.raw";
pub const AXIS_ORDER: &str = "x-fastest";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Header { path: PathBuf, line: usize, message: String },
    #[error("{path}: payload holds {actual} bytes, header declares {expected}")]
    PayloadSize { path: PathBuf, expected: usize, actual: usize },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    fn header(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Header { path: path.to_path_buf(), line, message: message.into() }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        Self::Invalid { path: path.to_path_buf(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RasterKind {
    Volume,
    Mask,
    Drr,
}

impl RasterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Volume => "volume",
            Self::Mask => "mask",
            Self::Drr => "drr",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "volume" => Some(Self::Volume),
            "mask" => Some(Self::Mask),
            "drr" => Some(Self::Drr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    I16,
    U16,
    F32,
}

impl DType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::I16 => "i16",
            Self::U16 => "u16",
            Self::F32 => "f32",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::I16 | Self::U16 => 2,
            Self::F32 => 4,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "i16" => Some(Self::I16),
            "u16" => Some(Self::U16),
            "f32" => Some(Self::F32),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub kind: RasterKind,
    pub patient_id: String,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub dtype: DType,
    /// Mask label names; empty for other kinds.
    pub labels: BTreeMap<u16, String>,
}

impl RasterHeader {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let join_usize = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let join_f64 = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kind = {}", self.kind.as_str());
        let _ = writeln!(out, "patient_id = {}", self.patient_id);
        let _ = writeln!(out, "shape = {}", join_usize(&self.shape));
        let _ = writeln!(out, "spacing = {}", join_f64(&self.spacing));
        let _ = writeln!(out, "dtype = {}", self.dtype.as_str());
        let _ = writeln!(out, "axis_order = {AXIS_ORDER}");
        for (label, name) in &self.labels {
            let _ = writeln!(out, "label.{label} = {name}");
        }
        out
    }

    /// Parses header text; `path` is used only for diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self, FormatError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == MAGIC => {}
            _ => return Err(FormatError::header(path, 1, format!("expected magic line `{MAGIC}`"))),
        }

        let mut kind = None;
        let mut patient_id = None;
        let mut shape = None;
        let mut spacing = None;
        let mut dtype = None;
        let mut labels = BTreeMap::new();

        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| FormatError::header(path, line_no, "expected `key = value`"))?;
            match key {
                "kind" => {
                    kind = Some(
                        RasterKind::parse(value)
                            .ok_or_else(|| FormatError::header(path, line_no, format!("unknown kind `{value}`")))?,
                    )
                }
                "patient_id" => {
                    if value.is_empty() || value.contains('\t') {
                        return Err(FormatError::header(path, line_no, "invalid patient_id"));
                    }
                    patient_id = Some(value.to_string());
                }
                "shape" => {
                    let dims = value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| FormatError::header(path, line_no, format!("shape: {e}")))?;
                    shape = Some(dims);
                }
                "spacing" => {
                    let sp = value
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| FormatError::header(path, line_no, format!("spacing: {e}")))?;
                    spacing = Some(sp);
                }
                "dtype" => {
                    dtype =
                        Some(DType::parse(value).ok_or_else(|| {
                            FormatError::header(path, line_no, format!("unsupported dtype `{value}`"))
                        })?)
                }
                "axis_order" => {
                    if value != AXIS_ORDER {
                        return Err(FormatError::header(path, line_no, format!("unsupported axis order `{value}`")));
                    }
                }
                _ if key.starts_with("label.") => {
                    let label = key["label.".len()..]
                        .parse::<u16>()
                        .map_err(|e| FormatError::header(path, line_no, format!("label id: {e}")))?;
                    if label == 0 {
                        return Err(FormatError::header(path, line_no, "label 0 is reserved for background"));
                    }
                    labels.insert(label, value.to_string());
                }
                _ => return Err(FormatError::header(path, line_no, format!("unknown key `{key}`"))),
            }
        }

        let missing = |what: &str| FormatError::header(path, 0, format!("missing `{what}`"));
        let header = RasterHeader {
            kind: kind.ok_or_else(|| missing("kind"))?,
            patient_id: patient_id.ok_or_else(|| missing("patient_id"))?,
            shape: shape.ok_or_else(|| missing("shape"))?,
            spacing: spacing.ok_or_else(|| missing("spacing"))?,
            dtype: dtype.ok_or_else(|| missing("dtype"))?,
            labels,
        };
        header.validate(path)?;
        Ok(header)
    }

    fn validate(&self, path: &Path) -> Result<(), FormatError> {
        let dims = match self.kind {
            RasterKind::Drr => 2,
            RasterKind::Volume | RasterKind::Mask => 3,
        };
        if self.shape.len() != dims || self.spacing.len() != dims {
            return Err(FormatError::invalid(
                path,
                format!("{} needs {dims} shape and spacing entries", self.kind.as_str()),
            ));
        }
        if self.shape.contains(&0) {
            return Err(FormatError::invalid(path, "shape entries must be at least 1"));
        }
        if self.shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none() {
            return Err(FormatError::invalid(path, "shape overflows"));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(FormatError::invalid(path, "spacing entries must be positive and finite"));
        }
        let dtype_ok = match self.kind {
            RasterKind::Volume => matches!(self.dtype, DType::I16 | DType::F32),
            RasterKind::Mask => self.dtype == DType::U16,
            RasterKind::Drr => self.dtype == DType::F32,
        };
        if !dtype_ok {
            return Err(FormatError::invalid(
                path,
                format!("dtype {} not allowed for {}", self.dtype.as_str(), self.kind.as_str()),
            ));
        }
        if self.kind != RasterKind::Mask && !self.labels.is_empty() {
            return Err(FormatError::invalid(path, "label entries are only valid in masks"));
        }
        Ok(())
    }
}

/// Decoded payload samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    I16(Vec<i16>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            Samples::I16(v) => v.iter().map(|&x| x as f32).collect(),
            Samples::U16(v) => v.iter().map(|&x| x as f32).collect(),
            Samples::F32(v) => v.clone(),
        }
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            Samples::I16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Samples::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Samples::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn decode(bytes: &[u8], dtype: DType) -> Self {
        match dtype {
            DType::I16 => Samples::I16(bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect()),
            DType::U16 => Samples::U16(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()),
            DType::F32 => {
                Samples::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::I16(v) => v.len(),
            Samples::U16(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            Samples::I16(_) => DType::I16,
            Samples::U16(_) => DType::U16,
            Samples::F32(_) => DType::F32,
        }
    }
}

/// Resolves a bundle location: either the bundle directory or its header file.
pub fn bundle_files(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_file() {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        (path.to_path_buf(), dir.join(PAYLOAD_FILE))
    } else {
        (path.join(HEADER_FILE), path.join(PAYLOAD_FILE))
    }
}

pub fn read_bundle(path: &Path) -> Result<(RasterHeader, Samples), FormatError> {
    let (header_path, payload_path) = bundle_files(path);
    let text = fs::read_to_string(&header_path).map_err(|e| FormatError::io(&header_path, e))?;
    let header = RasterHeader::parse(&text, &header_path)?;
    let bytes = fs::read(&payload_path).map_err(|e| FormatError::io(&payload_path, e))?;
    let expected = header.element_count() * header.dtype.size();
    if bytes.len() != expected {
        return Err(FormatError::PayloadSize { path: payload_path, expected, actual: bytes.len() });
    }
    let samples = Samples::decode(&bytes, header.dtype);
    Ok((header, samples))
}

pub fn write_bundle(dir: &Path, header: &RasterHeader, samples: &Samples) -> Result<(), FormatError> {
    if samples.dtype() != header.dtype || samples.len() != header.element_count() {
        return Err(FormatError::invalid(dir, "samples disagree with header dtype or shape"));
    }
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let header_path = dir.join(HEADER_FILE);
    fs::write(&header_path, header.render()).map_err(|e| FormatError::io(&header_path, e))?;
    let payload_path = dir.join(PAYLOAD_FILE);
    fs::write(&payload_path, samples.encode()).map_err(|e| FormatError::io(&payload_path, e))?;
    Ok(())
}
