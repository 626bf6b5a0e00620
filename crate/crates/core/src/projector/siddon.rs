//! Exact radiological path lengths through a voxel grid.
//!
//! The traversal follows Siddon's parametric formulation with the
//! incremental voxel walk: the segment `src + α·(dst − src)`, `α ∈ [0, 1]`, is
//! clipped to the grid box, and each subsequent plane crossing is computed
//! directly from the current voxel index, never by accumulating increments.
//! Voxels are half-open, so a ray running exactly along a shared face is
//! attributed to the voxel with the larger index.

use crate::ingest::Volume;

use super::ProjectError;

/// A regular grid placed in space by its geometric center.
///
/// Plane `i` along axis `a` sits at `center[a] + (i − n/2)·h`. With
/// `center = 0` planes come in exactly negated pairs, which keeps mirrored
/// rays bit-identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub center: [f64; 3],
}

impl Grid {
    /// Grid in the volume frame: the box `[0, n·h)` on every axis.
    pub fn volume_frame(v: &Volume) -> Self {
        let extent = v.extent();
        Self { shape: v.shape(), spacing: v.spacing(), center: extent.map(|e| 0.5 * e) }
    }

    /// Grid centered on the origin (isocentric frame).
    pub fn centered(v: &Volume) -> Self {
        Self { shape: v.shape(), spacing: v.spacing(), center: [0.0; 3] }
    }

    #[inline]
    fn plane(&self, axis: usize, i: isize) -> f64 {
        self.center[axis] + (i as f64 - self.shape[axis] as f64 * 0.5) * self.spacing[axis]
    }

    pub fn lower(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.plane(a, 0))
    }

    pub fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.plane(a, self.shape[a] as isize))
    }

    /// Whether `p` lies in the half-open grid box.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.plane(a, 0) && p[a] < self.plane(a, self.shape[a] as isize))
    }
}

/// Walks the voxels cut by segment `src → dst`, calling `visit(linear_index,
/// chord_mm)` in traversal order. Zero-length pieces are skipped.
pub fn trace(grid: &Grid, src: [f64; 3], dst: [f64; 3], mut visit: impl FnMut(usize, f64)) {
    let d = [dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]];
    let length = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if length == 0.0 {
        return;
    }

    let mut alpha_in: f64 = 0.0;
    let mut alpha_out: f64 = 1.0;
    for a in 0..3 {
        let lo = grid.plane(a, 0);
        let hi = grid.plane(a, grid.shape[a] as isize);
        if d[a] == 0.0 {
            if !(src[a] >= lo && src[a] < hi) {
                return;
            }
        } else {
            let t_lo = (lo - src[a]) / d[a];
            let t_hi = (hi - src[a]) / d[a];
            alpha_in = alpha_in.max(t_lo.min(t_hi));
            alpha_out = alpha_out.min(t_lo.max(t_hi));
        }
    }
    if alpha_in >= alpha_out {
        return;
    }

    // Voxel occupied just after alpha_in, and the alpha of its exit plane per axis.
    let mut idx = [0isize; 3];
    let mut next = [f64::INFINITY; 3];
    for a in 0..3 {
        let n = grid.shape[a] as isize;
        let h = grid.spacing[a];
        let p = if d[a] == 0.0 { src[a] } else { src[a] + alpha_in * d[a] };
        let t = (p - grid.plane(a, 0)) / h;
        let i = if d[a] < 0.0 { t.ceil() as isize - 1 } else { t.floor() as isize };
        idx[a] = i.clamp(0, n - 1);
        next[a] = exit_alpha(grid, a, idx[a], src[a], d[a]);
    }

    let stride = [1usize, grid.shape[0], grid.shape[0] * grid.shape[1]];
    let mut alpha = alpha_in;
    loop {
        let alpha_next = next[0].min(next[1]).min(next[2]);
        let end = alpha_next.min(alpha_out);
        if end > alpha {
            let linear = idx[0] as usize * stride[0] + idx[1] as usize * stride[1] + idx[2] as usize * stride[2];
            visit(linear, (end - alpha) * length);
            alpha = end;
        }
        if alpha_next >= alpha_out {
            break;
        }
        for a in 0..3 {
            if next[a] == alpha_next {
                idx[a] += if d[a] > 0.0 { 1 } else { -1 };
                if idx[a] < 0 || idx[a] >= grid.shape[a] as isize {
                    return;
                }
                next[a] = exit_alpha(grid, a, idx[a], src[a], d[a]);
            }
        }
    }
}

#[inline]
fn exit_alpha(grid: &Grid, axis: usize, idx: isize, s: f64, d: f64) -> f64 {
    if d > 0.0 {
        (grid.plane(axis, idx + 1) - s) / d
    } else if d < 0.0 {
        (grid.plane(axis, idx) - s) / d
    } else {
        f64::INFINITY
    }
}

/// Linear attenuation relative to water: `max(HU + 1000, 0) / 1000`.
#[inline]
pub fn hu_to_mu(hu: f32) -> f64 {
    (hu as f64 + 1000.0).max(0.0) / 1000.0
}

/// `Σ length · (HU + 1000)⁺` along the segment; dividing by 1000 gives `Σ l·μ`.
#[inline]
pub(crate) fn shifted_hu_integral(v: &Volume, grid: &Grid, src: [f64; 3], dst: [f64; 3]) -> f64 {
    let voxels = v.voxels();
    let mut sum = 0.0;
    trace(grid, src, dst, |i, len| {
        sum += len * (voxels[i] as f64 + 1000.0).max(0.0);
    });
    sum
}

/// Line integral `Σ lᵢ·μᵢ` (mm × relative attenuation) of segment `src → dst`
/// given in the volume frame, where the grid occupies `[0, n·h)` per axis.
pub fn siddon_path_integral(v: &Volume, src: [f64; 3], dst: [f64; 3]) -> Result<f64, ProjectError> {
    if src.iter().chain(&dst).any(|c| !c.is_finite()) {
        return Err(ProjectError::NonFiniteEndpoint);
    }
    if src == dst {
        return Err(ProjectError::ZeroLengthSegment);
    }
    Ok(shifted_hu_integral(v, &Grid::volume_frame(v), src, dst) / 1000.0)
}
