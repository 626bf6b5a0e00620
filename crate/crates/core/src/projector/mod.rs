//! PA and lateral DRR rendering from a CT volume.
//!
//! Geometry (isocentric frame, mm, volume center at the origin):
//!
//! * PA: point source at `(0, +s, 0)` behind the patient (posterior, +y),
//!   flat detector centered at `(0, −(sdd − s), 0)` in front of the patient.
//!   Detector columns run along +x, rows along −z, so row 0 is the most
//!   cranial (largest z) row.
//! * LA: the whole source/detector assembly rotated by +90° about the
//!   cranio-caudal z axis through the isocenter.
//!
//! Every detector pixel receives one Siddon line integral from the source to
//! its center. The raw integral image is min-max normalized to `[0, 1]` and
//! bilinearly resized to `output_size × output_size`.

mod io;
mod siddon;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::Volume;
use crate::raster::FormatError;

pub use io::{read_drr, write_drr, write_png_preview, PREVIEW_FILE, PROVENANCE_FILE};
pub use siddon::{hu_to_mu, siddon_path_integral, trace, Grid};

/// Which side of the patient faces the detector in the PA view.
pub const PA_ORIENTATION: &str = "anterior-to-detector";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("segment endpoint is not finite")]
    NonFiniteEndpoint,
    #[error("segment has zero length")]
    ZeroLengthSegment,
    #[error("invalid projection geometry: {0}")]
    InvalidGeometry(String),
    #[error("source at {0:?} mm lies inside the volume")]
    SourceInsideVolume([f64; 3]),
    #[error("view rotation {0}° is not a supported pose")]
    UnsupportedRotation(f64),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("provenance: {0}")]
    Provenance(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionGeometry {
    /// Source–detector distance, mm.
    pub sdd: f64,
    pub source_to_isocenter: f64,
    pub det_cols: usize,
    pub det_rows: usize,
    /// Detector pixel pitch, mm.
    pub det_spacing: f64,
    /// Side length of the square output image.
    pub output_size: usize,
}

impl Default for ProjectionGeometry {
    fn default() -> Self {
        Self {
            sdd: 1085.6,
            source_to_isocenter: 542.8,
            det_cols: 512,
            det_rows: 512,
            det_spacing: 1.0,
            output_size: 512,
        }
    }
}

impl ProjectionGeometry {
    pub fn validate(&self) -> Result<(), ProjectError> {
        let bad = |m: &str| Err(ProjectError::InvalidGeometry(m.to_string()));
        if !(self.sdd.is_finite() && self.sdd > 0.0) {
            return bad("sdd must be positive");
        }
        if !(self.source_to_isocenter > 0.0 && self.source_to_isocenter < self.sdd) {
            return bad("source_to_isocenter must lie in (0, sdd)");
        }
        if !(self.det_spacing.is_finite() && self.det_spacing > 0.0) {
            return bad("det_spacing must be positive");
        }
        if self.det_cols == 0 || self.det_rows == 0 || self.output_size == 0 {
            return bad("detector and output sizes must be at least 1");
        }
        Ok(())
    }

    /// Canonical text form, also the input to [`Self::hash`].
    pub fn describe(&self) -> String {
        format!(
            "sdd={} source_to_isocenter={} detector={}x{} det_spacing={} output_size={}",
            self.sdd, self.source_to_isocenter, self.det_cols, self.det_rows, self.det_spacing, self.output_size
        )
    }

    /// First 16 hex digits of SHA-256 over [`Self::describe`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        hex::encode(&digest[..8])
    }

    fn detector_distance(&self) -> f64 {
        self.sdd - self.source_to_isocenter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    Pa,
    La,
}

impl View {
    pub const ALL: [View; 2] = [View::Pa, View::La];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Pa => "pa",
            View::La => "la",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pa" => Some(View::Pa),
            "la" => Some(View::La),
            _ => None,
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewPose {
    pub view: View,
}

impl ViewPose {
    pub fn new(view: View) -> Self {
        Self { view }
    }

    /// Rotation about the cranio-caudal axis, degrees.
    pub fn rotation_deg(&self) -> f64 {
        match self.view {
            View::Pa => 0.0,
            View::La => 90.0,
        }
    }
}

/// Rotation about the isocenter followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub const IDENTITY: Self =
        Self { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] };

    /// Rotation by `deg` about +z. Multiples of 90° use exact matrices.
    pub fn rotation_z(deg: f64) -> Self {
        let quarter = deg / 90.0;
        let (s, c) = if quarter == quarter.round() {
            match (quarter as i64).rem_euclid(4) {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            }
        } else {
            deg.to_radians().sin_cos()
        };
        Self { rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    /// Rotation only; for direction vectors.
    pub fn apply_vector(&self, v: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        let translation = self.apply(other.translation);
        Self { rotation, translation }
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rotation = [0, 1, 2].map(|i| [r[0][i], r[1][i], r[2][i]]);
        let inv = Self { rotation, translation: [0.0; 3] };
        let t = inv.apply_vector(self.translation);
        Self { rotation, translation: [-t[0], -t[1], -t[2]] }
    }
}

/// Pose of the source/detector assembly relative to the PA reference.
pub fn pose_transform(p: ViewPose) -> RigidTransform {
    match p.view {
        View::Pa => RigidTransform::IDENTITY,
        View::La => RigidTransform::rotation_z(90.0),
    }
}

/// Source position, detector center and detector column/row unit vectors in
/// the isocentric frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorFrame {
    pub source: [f64; 3],
    pub center: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
}

impl DetectorFrame {
    pub fn new(g: &ProjectionGeometry, pose: ViewPose) -> Self {
        let t = pose_transform(pose);
        Self {
            source: t.apply([0.0, g.source_to_isocenter, 0.0]),
            center: t.apply([0.0, -g.detector_distance(), 0.0]),
            u: t.apply_vector([1.0, 0.0, 0.0]),
            v: t.apply_vector([0.0, 0.0, -1.0]),
        }
    }

    /// Center of detector pixel `(col, row)`.
    pub fn pixel_center(&self, g: &ProjectionGeometry, col: usize, row: usize) -> [f64; 3] {
        let du = (col as f64 + 0.5 - g.det_cols as f64 * 0.5) * g.det_spacing;
        let dv = (row as f64 + 0.5 - g.det_rows as f64 * 0.5) * g.det_spacing;
        [0, 1, 2].map(|a| self.center[a] + du * self.u[a] + dv * self.v[a])
    }

    /// Continuous detector coordinates `(col, row)` (pixel centers at integers)
    /// where the ray from the source through `q` meets the detector plane.
    pub fn project_point(&self, g: &ProjectionGeometry, q: [f64; 3]) -> Option<(f64, f64)> {
        let dir = [0, 1, 2].map(|a| q[a] - self.source[a]);
        let normal = [0, 1, 2].map(|a| self.center[a] - self.source[a]);
        let denom: f64 = (0..3).map(|a| dir[a] * normal[a]).sum();
        if denom <= 0.0 {
            return None;
        }
        let t = (0..3).map(|a| normal[a] * normal[a]).sum::<f64>() / denom;
        let hit = [0, 1, 2].map(|a| self.source[a] + t * dir[a] - self.center[a]);
        let du: f64 = (0..3).map(|a| hit[a] * self.u[a]).sum();
        let dv: f64 = (0..3).map(|a| hit[a] * self.v[a]).sum();
        Some((du / g.det_spacing + g.det_cols as f64 * 0.5 - 0.5, dv / g.det_spacing + g.det_rows as f64 * 0.5 - 0.5))
    }
}

/// Where an image came from and what has been done to it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub patient_id: String,
    pub view: Option<View>,
    pub rotation_deg: f64,
    pub geometry: String,
    pub geometry_hash: String,
    pub orientation: String,
    /// Enhancement stages applied so far, in order.
    pub enhancement: Vec<String>,
    /// Additional keys, e.g. content and configuration hashes.
    pub extra: BTreeMap<String, String>,
}

/// A 2-D image with pixels stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DrrImage {
    pub pixels: Vec<f32>,
    pub width: usize,
    pub height: usize,
    /// Pixel pitch in mm (columns, rows).
    pub pixel_spacing: [f64; 2],
    pub provenance: Provenance,
}

impl DrrImage {
    pub fn new(pixels: Vec<f32>, width: usize, height: usize) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count must equal width × height");
        Self { pixels, width, height, pixel_spacing: [1.0, 1.0], provenance: Provenance::default() }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Same metadata, new pixels.
    pub fn with_pixels(&self, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), self.pixels.len());
        Self { pixels, ..self.clone() }
    }
}

/// Raw (unnormalized) line-integral image, row-major `det_rows × det_cols`.
pub fn render_raw(v: &Volume, g: &ProjectionGeometry, pose: ViewPose) -> Result<Vec<f64>, ProjectError> {
    g.validate()?;
    let frame = DetectorFrame::new(g, pose);
    let grid = Grid::centered(v);
    let (lo, hi) = (grid.lower(), grid.upper());
    if (0..3).all(|a| frame.source[a] >= lo[a] && frame.source[a] <= hi[a]) {
        return Err(ProjectError::SourceInsideVolume(frame.source));
    }

    let mut raw = vec![0.0f64; g.det_cols * g.det_rows];
    raw.par_chunks_mut(g.det_cols).enumerate().for_each(|(row, line)| {
        for (col, out) in line.iter_mut().enumerate() {
            let dst = frame.pixel_center(g, col, row);
            *out = siddon::shifted_hu_integral(v, &grid, frame.source, dst) / 1000.0;
        }
    });
    Ok(raw)
}

/// Min-max normalization to `[0, 1]`; constant inputs map to all zeros.
pub fn normalize_min_max(raw: &[f64]) -> Vec<f32> {
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return vec![0.0; raw.len()];
    }
    let span = hi - lo;
    raw.iter().map(|&x| (((x - lo) / span) as f32).clamp(0.0, 1.0)).collect()
}

/// Bilinear resize with pixel-center alignment and edge clamping. Identity
/// when the size is unchanged.
pub fn resize_bilinear(pixels: &[f32], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    if width == out_w && height == out_h {
        return pixels.to_vec();
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = (s.floor() as usize).min(n_in - 1);
                (lo, (lo + 1).min(n_in - 1), s - lo as f64)
            })
            .collect()
    };
    let xs = taps(width, out_w);
    let ys = taps(height, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, wy) in &ys {
        for &(x0, x1, wx) in &xs {
            let p = |x: usize, y: usize| pixels[y * width + x] as f64;
            let top = p(x0, y0) + wx * (p(x1, y0) - p(x0, y0));
            let bottom = p(x0, y1) + wx * (p(x1, y1) - p(x0, y1));
            out.push((top + wy * (bottom - top)) as f32);
        }
    }
    out
}

/// Renders one normalized DRR.
pub fn render_drr(v: &Volume, g: &ProjectionGeometry, pose: ViewPose) -> Result<DrrImage, ProjectError> {
    let raw = render_raw(v, g, pose)?;
    let normalized = normalize_min_max(&raw);
    let pixels = resize_bilinear(&normalized, g.det_cols, g.det_rows, g.output_size, g.output_size);
    let pixel_spacing = [
        g.det_spacing * g.det_cols as f64 / g.output_size as f64,
        g.det_spacing * g.det_rows as f64 / g.output_size as f64,
    ];
    Ok(DrrImage {
        pixels,
        width: g.output_size,
        height: g.output_size,
        pixel_spacing,
        provenance: Provenance {
            patient_id: v.patient_id().to_string(),
            view: Some(pose.view),
            rotation_deg: pose.rotation_deg(),
            geometry: g.describe(),
            geometry_hash: g.hash(),
            orientation: PA_ORIENTATION.to_string(),
            enhancement: Vec::new(),
            extra: BTreeMap::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_geometry(n: usize) -> ProjectionGeometry {
        ProjectionGeometry { det_cols: n, det_rows: n, output_size: n, ..Default::default() }
    }

    fn air(shape: [usize; 3], spacing: f64) -> Volume {
        Volume::new(vec![-1000.0; shape.iter().product()], shape, [spacing; 3], "phantom").unwrap()
    }

    #[test]
    fn defaults_match_reference_setup() {
        let g = ProjectionGeometry::default();
        assert_eq!(g.sdd, 1085.6);
        assert_eq!(g.source_to_isocenter, 542.8);
        assert_eq!((g.det_cols, g.det_rows, g.det_spacing, g.output_size), (512, 512, 1.0, 512));
        g.validate().unwrap();
    }

    #[test]
    fn geometry_validation() {
        let mut g = ProjectionGeometry::default();
        g.source_to_isocenter = g.sdd;
        assert!(g.validate().is_err());
        let g = ProjectionGeometry { det_spacing: 0.0, ..Default::default() };
        assert!(g.validate().is_err());
        let g = ProjectionGeometry { sdd: -1.0, ..Default::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn pa_is_identity_and_la_twice_is_half_turn() {
        assert_eq!(pose_transform(ViewPose::new(View::Pa)), RigidTransform::IDENTITY);
        let la = pose_transform(ViewPose::new(View::La));
        assert_eq!(la.compose(&la), RigidTransform::rotation_z(180.0));
        assert_eq!(la.compose(&la).apply([1.0, 2.0, 3.0]), [-1.0, -2.0, 3.0]);
        assert_eq!(la.compose(&la.inverse()), RigidTransform::IDENTITY);
        assert_eq!(ViewPose::new(View::La).rotation_deg(), 90.0);
    }

    #[test]
    fn pa_projection_matches_closed_form() {
        let g = ProjectionGeometry::default();
        let frame = DetectorFrame::new(&g, ViewPose::new(View::Pa));
        let q = [12.0, -30.0, 7.5];
        // Magnification sdd / (s − q_y); columns follow +x, rows follow −z.
        let m = g.sdd / (g.source_to_isocenter - q[1]);
        let (col, row) = frame.project_point(&g, q).unwrap();
        assert!((col - (q[0] * m + 255.5)).abs() < 1e-9);
        assert!((row - (-q[2] * m + 255.5)).abs() < 1e-9);
    }

    #[test]
    fn la_projection_is_pa_projection_of_rotated_point() {
        let g = ProjectionGeometry::default();
        let pa = DetectorFrame::new(&g, ViewPose::new(View::Pa));
        let la = DetectorFrame::new(&g, ViewPose::new(View::La));
        let back = pose_transform(ViewPose::new(View::La)).inverse();
        for q in [[10.0, 0.0, 0.0], [3.0, -8.0, 4.0], [-20.0, 15.0, -6.0]] {
            let (c1, r1) = la.project_point(&g, q).unwrap();
            let (c2, r2) = pa.project_point(&g, back.apply(q)).unwrap();
            assert!((c1 - c2).abs() < 1e-9 && (r1 - r2).abs() < 1e-9);
        }
        // A pure +x offset under LA lands on the same column as a pure +y offset under PA.
        let (c_la, _) = la.project_point(&g, [25.0, 0.0, 0.0]).unwrap();
        let (c_pa, _) = pa.project_point(&g, [0.0, 25.0, 0.0]).unwrap();
        assert!((c_la - c_pa).abs() < 1e-9 && (c_pa - 255.5).abs() < 1e-9);
    }

    #[test]
    fn all_air_gives_all_zero_image() {
        let v = air([8, 8, 8], 2.0);
        let img = render_drr(&v, &small_geometry(32), ViewPose::new(View::Pa)).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
        assert_eq!((img.width, img.height), (32, 32));
    }

    #[test]
    fn source_inside_volume_is_rejected() {
        let v = air([4, 4, 4], 400.0);
        assert!(matches!(
            render_drr(&v, &small_geometry(8), ViewPose::new(View::Pa)),
            Err(ProjectError::SourceInsideVolume(_))
        ));
    }

    #[test]
    fn central_pixel_of_cube_phantom_matches_analytic_chord() {
        let n = 40;
        let h = 1.25;
        let mu = 1.2;
        let v = Volume::new(vec![(mu * 1000.0 - 1000.0) as f32; n * n * n], [n, n, n], [h; 3], "cube").unwrap();
        let g = ProjectionGeometry::default();
        let raw = render_raw(&v, &g, ViewPose::new(View::Pa)).unwrap();
        let frame = DetectorFrame::new(&g, ViewPose::new(View::Pa));
        let half = n as f64 * h / 2.0;
        for (col, row) in [(256, 256), (255, 255), (250, 262)] {
            let dst = frame.pixel_center(&g, col, row);
            let chord = cacforge_oracles::segment_box_chord([-half; 3], [half; 3], frame.source, dst);
            let got = raw[row * g.det_cols + col];
            assert!((got - chord * mu).abs() <= 1e-3 * chord * mu, "{got} vs {}", chord * mu);
        }
    }

    #[test]
    fn single_voxel_projects_to_closed_form_pixel() {
        let n = 24;
        let h = 2.0;
        let mut v = air([n, n, n], h);
        let (i, j, k) = (17, 6, 9);
        v.set(i, j, k, 2000.0);
        let g = small_geometry(128);
        for view in View::ALL {
            let pose = ViewPose::new(view);
            let img = render_drr(&v, &g, pose).unwrap();
            let center = [i, j, k].map(|x| (x as f64 + 0.5) * h - n as f64 * h / 2.0);
            let (col, row) = DetectorFrame::new(&g, pose).project_point(&g, center).unwrap();

            let bright: Vec<(usize, usize)> = (0..g.det_rows)
                .flat_map(|r| (0..g.det_cols).map(move |c| (c, r)))
                .filter(|&(c, r)| img.get(c, r) > 0.0)
                .collect();
            assert!(!bright.is_empty());
            // One 8-connected region.
            let mut seen = vec![bright[0]];
            let mut frontier = vec![bright[0]];
            while let Some((c, r)) = frontier.pop() {
                for &(c2, r2) in &bright {
                    if !seen.contains(&(c2, r2)) && c.abs_diff(c2) <= 1 && r.abs_diff(r2) <= 1 {
                        seen.push((c2, r2));
                        frontier.push((c2, r2));
                    }
                }
            }
            assert_eq!(seen.len(), bright.len(), "{view}: more than one bright region");
            // Intensity-weighted centroid sits on the projected voxel center.
            let (mut sc, mut sr, mut sw) = (0.0, 0.0, 0.0);
            for &(c, r) in &bright {
                let w = img.get(c, r) as f64;
                sc += w * c as f64;
                sr += w * r as f64;
                sw += w;
            }
            assert!((sc / sw - col).abs() < 0.5 && (sr / sw - row).abs() < 0.5, "{view}: {} {}", sc / sw, sr / sw);
            assert!(img.get(col.round() as usize, row.round() as usize) > 0.0);
        }
    }

    #[test]
    fn normalization_and_resize() {
        assert_eq!(normalize_min_max(&[2.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(normalize_min_max(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
        let px = vec![0.0, 1.0, 2.0, 3.0];
        assert_eq!(resize_bilinear(&px, 2, 2, 2, 2), px);
        let up = resize_bilinear(&px, 2, 2, 4, 4);
        assert_eq!(up.len(), 16);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[15], 3.0);
        assert!((up[1] - 0.25).abs() < 1e-6);
    }
}
