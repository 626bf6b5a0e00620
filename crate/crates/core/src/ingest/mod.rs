//! CT volumes, calcium masks, quality gating and calcium scoring.

mod agatston;
mod resample;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::raster::{self, DType, FormatError, RasterHeader, RasterKind, Samples};

pub use agatston::{
    agatston_score, density_weight, find_lesions, BinaryLabel, CacLabel, Lesion, CALCIUM_THRESHOLD_HU,
    MIN_LESION_AREA_MM2, POSITIVE_THRESHOLD,
};
pub use resample::{resample_isotropic, resample_mask};

/// Scans with fewer axial slices than this are excluded.
pub const DEFAULT_MIN_SLICES: usize = 30;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: expected a {expected} bundle, found {found}")]
    WrongKind { path: String, expected: &'static str, found: &'static str },
    #[error("shape {0:?} has a zero-length axis")]
    InvalidShape([usize; 3]),
    #[error("spacing {0:?} must be positive and finite")]
    InvalidSpacing([f64; 3]),
    #[error("{actual} samples for shape {shape:?} (expected {expected})")]
    VoxelCount { shape: [usize; 3], expected: usize, actual: usize },
    #[error("mask shape {mask:?} / spacing {mask_spacing:?} does not match volume {volume:?} / {volume_spacing:?}")]
    NotCoRegistered { volume: [usize; 3], mask: [usize; 3], volume_spacing: [f64; 3], mask_spacing: [f64; 3] },
    #[error("mask label {0} has no artery name")]
    UnnamedLabel(u16),
    #[error("resampling target {0} mm must be positive and finite")]
    InvalidTarget(f64),
    #[error("resampled shape along axis {axis} is degenerate ({extent} mm at {target} mm)")]
    DegenerateShape { axis: usize, extent: f64, target: f64 },
}

fn check_geometry(shape: [usize; 3], spacing: [f64; 3], len: usize) -> Result<(), IngestError> {
    if shape.contains(&0) {
        return Err(IngestError::InvalidShape(shape));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(IngestError::InvalidSpacing(spacing));
    }
    let expected = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    match expected {
        Some(expected) if expected == len => Ok(()),
        Some(expected) => Err(IngestError::VoxelCount { shape, expected, actual: len }),
        None => Err(IngestError::InvalidShape(shape)),
    }
}

/// A CT volume in Hounsfield units, x varying fastest.
///
/// Voxel `(i, j, k)` covers `[i·dx, (i+1)·dx) × [j·dy, (j+1)·dy) × [k·dz, (k+1)·dz)`
/// in the volume frame; the z axis is cranio-caudal.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    voxels: Vec<f32>,
    shape: [usize; 3],
    spacing: [f64; 3],
    patient_id: String,
    source_dtype: DType,
}

impl Volume {
    pub fn new(
        voxels: Vec<f32>,
        shape: [usize; 3],
        spacing: [f64; 3],
        patient_id: impl Into<String>,
    ) -> Result<Self, IngestError> {
        check_geometry(shape, spacing, voxels.len())?;
        Ok(Self { voxels, shape, spacing, patient_id: patient_id.into(), source_dtype: DType::F32 })
    }

    pub fn from_fn(
        shape: [usize; 3],
        spacing: [f64; 3],
        patient_id: impl Into<String>,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, IngestError> {
        let mut voxels = Vec::with_capacity(shape.iter().product());
        for k in 0..shape[2] {
            for j in 0..shape[1] {
                for i in 0..shape[0] {
                    voxels.push(f(i, j, k));
                }
            }
        }
        Self::new(voxels, shape, spacing, patient_id)
    }

    /// Sets the integer width used when the volume is written back to disk.
    pub fn with_source_dtype(mut self, dtype: DType) -> Self {
        if dtype != DType::U16 {
            self.source_dtype = dtype;
        }
        self
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f32] {
        &mut self.voxels
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn source_dtype(&self) -> DType {
        self.source_dtype
    }

    /// Physical size of the grid along each axis in mm.
    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.shape[a] as f64 * self.spacing[a])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f32) {
        let idx = self.index(i, j, k);
        self.voxels[idx] = value;
    }

    pub fn is_isotropic(&self) -> bool {
        let [dx, dy, dz] = self.spacing;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        close(dx, dy) && close(dx, dz)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.voxels.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Integer artery labels co-registered with a [`Volume`]; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct CalciumMask {
    labels: Vec<u16>,
    shape: [usize; 3],
    spacing: [f64; 3],
    patient_id: String,
    artery_names: BTreeMap<u16, String>,
}

impl CalciumMask {
    pub fn new(
        labels: Vec<u16>,
        shape: [usize; 3],
        spacing: [f64; 3],
        patient_id: impl Into<String>,
        artery_names: BTreeMap<u16, String>,
    ) -> Result<Self, IngestError> {
        check_geometry(shape, spacing, labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&l| l != 0 && !artery_names.contains_key(&l)) {
            return Err(IngestError::UnnamedLabel(bad));
        }
        if artery_names.contains_key(&0) {
            return Err(IngestError::UnnamedLabel(0));
        }
        Ok(Self { labels, shape, spacing, patient_id: patient_id.into(), artery_names })
    }

    /// Empty mask matching a volume's grid.
    pub fn empty_like(v: &Volume) -> Self {
        Self {
            labels: vec![0; v.voxels.len()],
            shape: v.shape,
            spacing: v.spacing,
            patient_id: v.patient_id.clone(),
            artery_names: BTreeMap::new(),
        }
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn artery_names(&self) -> &BTreeMap<u16, String> {
        &self.artery_names
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> u16 {
        self.labels[self.index(i, j, k)]
    }

    /// Assigns `label` at `(i, j, k)`, registering `name` for it.
    pub fn set(&mut self, i: usize, j: usize, k: usize, label: u16, name: &str) {
        if label != 0 {
            self.artery_names.entry(label).or_insert_with(|| name.to_string());
        }
        let idx = self.index(i, j, k);
        self.labels[idx] = label;
    }

    pub fn check_registered(&self, v: &Volume) -> Result<(), IngestError> {
        let spacing_ok = (0..3)
            .all(|a| (self.spacing[a] - v.spacing[a]).abs() <= 1e-9 * v.spacing[a].abs().max(self.spacing[a].abs()));
        if self.shape != v.shape || !spacing_ok {
            return Err(IngestError::NotCoRegistered {
                volume: v.shape,
                mask: self.shape,
                volume_spacing: v.spacing,
                mask_spacing: self.spacing,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Accepted,
    Rejected,
}

/// Rejects scans whose axial slice count (pre-resampling `nz`) is below `min_slices`.
pub fn gate_slice_coverage(v: &Volume, min_slices: usize) -> Gate {
    if v.shape[2] < min_slices {
        Gate::Rejected
    } else {
        Gate::Accepted
    }
}

fn to3<T: Copy>(v: &[T]) -> [T; 3] {
    [v[0], v[1], v[2]]
}

pub fn load_volume(path: &Path) -> Result<Volume, IngestError> {
    let (header, samples) = raster::read_bundle(path)?;
    if header.kind != RasterKind::Volume {
        return Err(IngestError::WrongKind {
            path: path.display().to_string(),
            expected: "volume",
            found: header.kind.as_str(),
        });
    }
    let dtype = samples.dtype();
    Ok(Volume::new(samples.to_f32(), to3(&header.shape), to3(&header.spacing), header.patient_id)?
        .with_source_dtype(dtype))
}

/// Writes the volume in its source dtype; `i16` output rounds and saturates.
pub fn write_volume(v: &Volume, dir: &Path) -> Result<(), IngestError> {
    let header = RasterHeader {
        kind: RasterKind::Volume,
        patient_id: v.patient_id.clone(),
        shape: v.shape.to_vec(),
        spacing: v.spacing.to_vec(),
        dtype: v.source_dtype,
        labels: BTreeMap::new(),
    };
    let samples = match v.source_dtype {
        DType::I16 => Samples::I16(v.voxels.iter().map(|&x| x.round() as i16).collect()),
        _ => Samples::F32(v.voxels.clone()),
    };
    raster::write_bundle(dir, &header, &samples)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<CalciumMask, IngestError> {
    let (header, samples) = raster::read_bundle(path)?;
    if header.kind != RasterKind::Mask {
        return Err(IngestError::WrongKind {
            path: path.display().to_string(),
            expected: "mask",
            found: header.kind.as_str(),
        });
    }
    let labels = match samples {
        Samples::U16(v) => v,
        _ => unreachable!("mask headers are validated to u16"),
    };
    CalciumMask::new(labels, to3(&header.shape), to3(&header.spacing), header.patient_id, header.labels)
}

pub fn write_mask(m: &CalciumMask, dir: &Path) -> Result<(), IngestError> {
    let header = RasterHeader {
        kind: RasterKind::Mask,
        patient_id: m.patient_id.clone(),
        shape: m.shape.to_vec(),
        spacing: m.spacing.to_vec(),
        dtype: DType::U16,
        labels: m.artery_names.clone(),
    };
    raster::write_bundle(dir, &header, &Samples::U16(m.labels.clone()))?;
    Ok(())
}
