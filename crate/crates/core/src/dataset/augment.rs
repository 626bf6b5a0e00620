//! Random affine augmentation.
//!
//! Sampling: `rng = CounterRng::new(seed, index)`; counters 0–4 give, in
//! order, rotation, x translation, y translation, scale and shear, each
//! `lo + (hi − lo)·unit`.
//!
//! Application, in pixel-index coordinates with center
//! `c = ((w − 1)/2, (h − 1)/2)`:
//!
//! ```text
//! θ = rotation·π/180, t = tan(shear·π/180)
//! M = R(θ) · [[1, t], [t, 1]] · scale          (scale, then shear, then rotate)
//! out(q) = bilinear(in, M⁻¹·(q − c − (tx·w, ty·h)) + c)
//! ```
//!
//! Samples outside the image read as 0. There is no flip.

use std::fmt::Write as _;

use crate::projector::DrrImage;
use crate::rng::CounterRng;

use super::{parse_err, table_lines, DatasetError};

pub const ROTATION_DEG: (f64, f64) = (-5.0, 5.0);
pub const TRANSLATION: (f64, f64) = (-0.05, 0.05);
pub const SCALE: (f64, f64) = (0.9, 1.1);
pub const SHEAR_DEG: (f64, f64) = (-10.0, 10.0);
pub const AUGMENT_HEADER: &str = "seed\tindex\tpatient_id\trotation_deg\ttranslate_x\ttranslate_y\tscale\tshear_deg";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    /// Fractions of width and height.
    pub translate: [f64; 2],
    pub scale: f64,
    pub shear_deg: f64,
    pub seed: u64,
    pub index: u64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, translate: [0.0, 0.0], scale: 1.0, shear_deg: 0.0, seed: 0, index: 0 }
    }

    /// The forward 2×2 matrix `[[a, b], [c, d]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let t = self.shear_deg.to_radians().tan();
        let s = self.scale;
        // R · Sh · S
        [[(cos - sin * t) * s, (cos * t - sin) * s], [(sin + cos * t) * s, (sin * t + cos) * s]]
    }
}

pub fn sample_augment(seed: u64, index: u64) -> AugmentParams {
    let rng = CounterRng::new(seed, index);
    let draw = |c: u64, (lo, hi): (f64, f64)| rng.uniform(c, lo, hi);
    AugmentParams {
        rotation_deg: draw(0, ROTATION_DEG),
        translate: [draw(1, TRANSLATION), draw(2, TRANSLATION)],
        scale: draw(3, SCALE),
        shear_deg: draw(4, SHEAR_DEG),
        seed,
        index,
    }
}

pub fn apply_augment(img: &DrrImage, p: &AugmentParams) -> DrrImage {
    let (w, h) = (img.width, img.height);
    let [[a, b], [c, d]] = p.matrix();
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let tx = p.translate[0] * w as f64;
    let ty = p.translate[1] * h as f64;
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            img.pixels[y as usize * w + x as usize] as f64
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let qx = x as f64 - cx - tx;
            let qy = y as f64 - cy - ty;
            let sx = inv[0][0] * qx + inv[0][1] * qy + cx;
            let sy = inv[1][0] * qx + inv[1][1] * qy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = (1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0);
            let bottom = (1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1);
            out.push(((1.0 - fy) * top + fy * bottom).clamp(0.0, 1.0) as f32);
        }
    }
    img.with_pixels(out)
}

/// One row per `(params, patient_id)`.
pub fn render_augment_table(rows: &[(AugmentParams, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{AUGMENT_HEADER}");
    for (p, id) in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.seed, p.index, id, p.rotation_deg, p.translate[0], p.translate[1], p.scale, p.shear_deg
        );
    }
    out
}

pub fn parse_augment_table(text: &str) -> Result<Vec<(AugmentParams, String)>, DatasetError> {
    let mut lines = table_lines(text);
    match lines.next() {
        Some((_, h)) if h == AUGMENT_HEADER => {}
        _ => return Err(parse_err(1, "missing augmentation header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(parse_err(n, "expected 8 fields"));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| parse_err(n, format!("bad integer `{s}`")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| parse_err(n, format!("bad number `{s}`")));
        let p = AugmentParams {
            seed: int(f[0])?,
            index: int(f[1])?,
            rotation_deg: real(f[3])?,
            translate: [real(f[4])?, real(f[5])?],
            scale: real(f[6])?,
            shear_deg: real(f[7])?,
        };
        rows.push((p, f[2].to_string()));
    }
    Ok(rows)
}
