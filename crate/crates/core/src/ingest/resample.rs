//! Isotropic resampling. The output grid shares the input's physical origin
//! and has `ceil(extent / target)` voxels per axis; sample positions are
//! voxel centers. Intensities are trilinear (edge-replicated outside the
//! outermost input centers), labels are nearest-neighbor.

use rayon::prelude::*;

use super::{CalciumMask, IngestError, Volume};

// Absorbs floating noise in extent / target before taking the ceiling.
const CEIL_SLACK: f64 = 1e-9;

fn output_shape(shape: [usize; 3], spacing: [f64; 3], target: f64) -> Result<[usize; 3], IngestError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(IngestError::InvalidTarget(target));
    }
    let mut out = [0usize; 3];
    for axis in 0..3 {
        let extent = shape[axis] as f64 * spacing[axis];
        let n = (extent / target - CEIL_SLACK).ceil();
        if !(n >= 1.0 && n < u32::MAX as f64) {
            return Err(IngestError::DegenerateShape { axis, extent, target });
        }
        out[axis] = n as usize;
    }
    if out.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none() {
        return Err(IngestError::DegenerateShape { axis: 2, extent: f64::INFINITY, target });
    }
    Ok(out)
}

/// Per-output-index lower neighbor, upper neighbor and weight of the upper one.
fn linear_taps(n_in: usize, h_in: f64, n_out: usize, target: f64) -> Vec<(usize, usize, f64)> {
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|j| {
            let pos = (j as f64 + 0.5) * target;
            let u = (pos / h_in - 0.5).clamp(0.0, last);
            let lo = (u.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, u - lo as f64)
        })
        .collect()
}

fn nearest_taps(n_in: usize, h_in: f64, n_out: usize, target: f64) -> Vec<usize> {
    (0..n_out)
        .map(|j| {
            let pos = (j as f64 + 0.5) * target;
            ((pos / h_in).floor().max(0.0) as usize).min(n_in - 1)
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (a + t * (b - a)).clamp(lo, hi)
}

/// Resamples `v` to `target` mm isotropic spacing by trilinear interpolation.
pub fn resample_isotropic(v: &Volume, target: f64) -> Result<Volume, IngestError> {
    let shape = output_shape(v.shape(), v.spacing(), target)?;
    let spacing = v.spacing();
    let taps: Vec<_> = (0..3).map(|a| linear_taps(v.shape()[a], spacing[a], shape[a], target)).collect();
    let plane = shape[0] * shape[1];
    let mut voxels = vec![0f32; plane * shape[2]];

    voxels.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        let (z0, z1, tz) = taps[2][k];
        for (j, row) in slab.chunks_mut(shape[0]).enumerate() {
            let (y0, y1, ty) = taps[1][j];
            for (i, out) in row.iter_mut().enumerate() {
                let (x0, x1, tx) = taps[0][i];
                let at = |x, y, z| v.get(x, y, z) as f64;
                let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), tx);
                let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), tx);
                let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), tx);
                let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), tx);
                let c0 = lerp(c00, c10, ty);
                let c1 = lerp(c01, c11, ty);
                *out = lerp(c0, c1, tz) as f32;
            }
        }
    });

    Volume::new(voxels, shape, [target; 3], v.patient_id())
}

/// Resamples labels onto the same grid [`resample_isotropic`] produces.
pub fn resample_mask(m: &CalciumMask, target: f64) -> Result<CalciumMask, IngestError> {
    let shape = output_shape(m.shape(), m.spacing(), target)?;
    let spacing = m.spacing();
    let taps: Vec<_> = (0..3).map(|a| nearest_taps(m.shape()[a], spacing[a], shape[a], target)).collect();
    let plane = shape[0] * shape[1];
    let mut labels = vec![0u16; plane * shape[2]];

    labels.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        let z = taps[2][k];
        for (j, row) in slab.chunks_mut(shape[0]).enumerate() {
            let y = taps[1][j];
            for (i, out) in row.iter_mut().enumerate() {
                *out = m.get(taps[0][i], y, z);
            }
        }
    });

    CalciumMask::new(labels, shape, [target; 3], m.patient_id(), m.artery_names().clone())
}
