//! Post-projection enhancement and pre-projection sagittal upsampling.
//!
//! Modes:
//!
//! | mode           | chain                         |
//! |----------------|-------------------------------|
//! | `original`     | identity                      |
//! | `clahe`        | CLAHE → unsharp               |
//! | `calc_focused` | gamma → CLAHE → unsharp       |
//!
//! The unsharp stage of `clahe` can be switched off with
//! [`EnhanceConfig::clahe_with_unsharp`].

mod clahe;
mod upsample;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::IngestError;
use crate::projector::DrrImage;

pub use clahe::{apply_clahe, clahe_tile_luts};
pub use upsample::{upsample_sagittal, ExternalModel, UpsampleConfig, UpsampleMethod};

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("invalid enhancement config: {0}")]
    InvalidConfig(String),
    #[error("image {width}x{height} is smaller than the {tiles_x}x{tiles_y} tile grid")]
    ImageTooSmall { width: usize, height: usize, tiles_x: usize, tiles_y: usize },
    #[error("upsampled shape overflows: {0:?} × {1}")]
    ShapeOverflow([usize; 3], usize),
    #[error("external model `{program}` on slice {slice}: {message}")]
    External { program: String, slice: usize, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Original,
    Clahe,
    CalcFocused,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Original, Mode::Clahe, Mode::CalcFocused];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Clahe => "clahe",
            Mode::CalcFocused => "calc_focused",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = EnhanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Mode::Original),
            "clahe" => Ok(Mode::Clahe),
            "calc_focused" | "calc-focused" => Ok(Mode::CalcFocused),
            _ => Err(EnhanceError::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    pub mode: Mode,
    pub clahe_tiles: (usize, usize),
    pub clahe_clip: f64,
    /// Odd side length of the Gaussian kernel.
    pub unsharp_kernel: usize,
    pub unsharp_sigma: f64,
    pub unsharp_gain: f64,
    pub gamma: f64,
    pub clahe_with_unsharp: bool,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Original,
            clahe_tiles: (8, 8),
            clahe_clip: 2.0,
            unsharp_kernel: 5,
            unsharp_sigma: 1.0,
            unsharp_gain: 1.5,
            gamma: 1.5,
            clahe_with_unsharp: true,
        }
    }
}

impl EnhanceConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        let bad = |m: &str| Err(EnhanceError::InvalidConfig(m.to_string()));
        if !(self.clahe_clip > 1.0) {
            return bad("clahe_clip must exceed 1");
        }
        if self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return bad("clahe_tiles must be at least 1x1");
        }
        if !(self.unsharp_sigma > 0.0) {
            return bad("unsharp_sigma must be positive");
        }
        if !(self.unsharp_gain >= 0.0) {
            return bad("unsharp_gain must be non-negative");
        }
        if self.unsharp_kernel.is_multiple_of(2) {
            return bad("unsharp_kernel must be odd");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        Ok(())
    }

    /// Stage names in application order, as recorded in provenance.
    pub fn chain(&self) -> Vec<String> {
        let gamma = format!("gamma({})", self.gamma);
        let clahe = format!("clahe({}x{},{})", self.clahe_tiles.0, self.clahe_tiles.1, self.clahe_clip);
        let unsharp = format!("unsharp({},{},{})", self.unsharp_kernel, self.unsharp_sigma, self.unsharp_gain);
        match self.mode {
            Mode::Original => vec![],
            Mode::Clahe if self.clahe_with_unsharp => vec![clahe, unsharp],
            Mode::Clahe => vec![clahe],
            Mode::CalcFocused => vec![gamma, clahe, unsharp],
        }
    }
}

/// `p^γ` per pixel.
pub fn apply_gamma(img: &DrrImage, gamma: f64) -> Result<DrrImage, EnhanceError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(EnhanceError::InvalidConfig(format!("gamma must be positive, got {gamma}")));
    }
    let pixels = img.pixels.par_iter().map(|&p| (p as f64).powf(gamma) as f32).collect();
    Ok(img.with_pixels(pixels))
}

/// Normalized `size × size` Gaussian weights, row-major.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    g.iter().flat_map(|&a| g.iter().map(move |&b| a * b / total)).collect()
}

/// `clamp(p + gain·(p − G∗p), 0, 1)` with edge replication.
pub fn apply_unsharp(img: &DrrImage, cfg: &EnhanceConfig) -> Result<DrrImage, EnhanceError> {
    cfg.validate()?;
    let size = cfg.unsharp_kernel;
    let r = (size / 2) as isize;
    let kernel = gaussian_kernel(size, cfg.unsharp_sigma);
    let (w, h) = (img.width, img.height);
    let src = &img.pixels;
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let p = src[y * w + x] as f64;
            // p − G∗p written as Σ k·(p − q) so flat regions give exactly zero detail.
            let mut detail = 0.0;
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let k = kernel[((dy + r) as usize) * size + (dx + r) as usize];
                    detail += k * (p - src[yy * w + xx] as f64);
                }
            }
            *o = (p + cfg.unsharp_gain * detail).clamp(0.0, 1.0) as f32;
        }
    });
    Ok(img.with_pixels(out))
}

/// Runs the mode's chain and appends it to the provenance.
pub fn apply_mode(img: &DrrImage, cfg: &EnhanceConfig) -> Result<DrrImage, EnhanceError> {
    cfg.validate()?;
    let mut out = match cfg.mode {
        Mode::Original => img.clone(),
        Mode::Clahe => {
            let c = apply_clahe(img, cfg)?;
            if cfg.clahe_with_unsharp {
                apply_unsharp(&c, cfg)?
            } else {
                c
            }
        }
        Mode::CalcFocused => apply_unsharp(&apply_clahe(&apply_gamma(img, cfg.gamma)?, cfg)?, cfg)?,
    };
    out.provenance.enhancement = img.provenance.enhancement.clone();
    out.provenance.enhancement.extend(cfg.chain());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(pixels: Vec<f32>, w: usize, h: usize) -> DrrImage {
        DrrImage::new(pixels, w, h)
    }

    #[test]
    fn gamma_fixed_points_and_exact_value() {
        let img = image(vec![0.0, 1.0, 0.25, 0.5], 2, 2);
        let out = apply_gamma(&img, 1.5).unwrap();
        assert_eq!(out.pixels[..3], [0.0, 1.0, 0.125]);
        assert_eq!(apply_gamma(&img, 1.0).unwrap().pixels, img.pixels);
        assert!(apply_gamma(&img, 0.0).is_err());
        assert!(apply_gamma(&img, -1.0).is_err());
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(5, 1.0);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[24]);
        assert_eq!(k[7], k[17]);
        let s = 1.0 + 2.0 * (-0.5f64).exp() + 2.0 * (-2.0f64).exp();
        assert!((k[12] - 1.0 / (s * s)).abs() < 1e-15);
    }

    #[test]
    fn unsharp_constant_and_zero_gain_are_identity() {
        let img = image(vec![0.37; 49], 7, 7);
        assert_eq!(apply_unsharp(&img, &EnhanceConfig::default()).unwrap().pixels, img.pixels);
        let ramp = image((0..49).map(|i| i as f32 / 48.0).collect(), 7, 7);
        let cfg = EnhanceConfig { unsharp_gain: 0.0, ..Default::default() };
        assert_eq!(apply_unsharp(&ramp, &cfg).unwrap().pixels, ramp.pixels);
    }

    #[test]
    fn unsharp_impulse_matches_hand_kernel() {
        // Unit impulse on zeros saturates: 1 at the center, 0 elsewhere.
        let mut px = vec![0.0; 81];
        px[40] = 1.0;
        let out = apply_unsharp(&image(px, 9, 9), &EnhanceConfig::default()).unwrap();
        assert_eq!(out.pixels[40], 1.0);
        assert!(out.pixels.iter().enumerate().all(|(i, &p)| i == 40 || p == 0.0));

        // A small impulse on mid-gray stays unclamped: 0.5 + a·δ + 1.5·a·(δ − k).
        let a = 0.1;
        let mut px = vec![0.5f32; 81];
        px[40] = 0.6;
        let out = apply_unsharp(&image(px, 9, 9), &EnhanceConfig::default()).unwrap();
        let s = 1.0 + 2.0 * (-0.5f64).exp() + 2.0 * (-2.0f64).exp();
        let g = |d: i32| (-(d * d) as f64 / 2.0).exp() / s;
        for y in 0..9 {
            for x in 0..9 {
                let (dx, dy) = (x as i32 - 4, y as i32 - 4);
                let k = if dx.abs() <= 2 && dy.abs() <= 2 { g(dx) * g(dy) } else { 0.0 };
                let delta = if dx == 0 && dy == 0 { 1.0 } else { 0.0 };
                let want = 0.5 + a * delta + 1.5 * a * (delta - k);
                assert!((out.pixels[y * 9 + x] as f64 - want).abs() < 1e-6, "({x},{y})");
            }
        }
    }

    #[test]
    fn original_mode_is_identity() {
        let img = image((0..64).map(|i| i as f32 / 63.0).collect(), 8, 8);
        let out = apply_mode(&img, &EnhanceConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn calc_focused_is_the_composition_and_keeps_constants() {
        let rng = crate::rng::CounterRng::new(5, 0);
        let img = image((0..32 * 24).map(|c| rng.unit(c) as f32).collect(), 32, 24);
        let cfg = EnhanceConfig { clahe_tiles: (4, 3), ..EnhanceConfig::with_mode(Mode::CalcFocused) };
        let got = apply_mode(&img, &cfg).unwrap();
        let want = apply_unsharp(&apply_clahe(&apply_gamma(&img, 1.5).unwrap(), &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(got.pixels, want.pixels);
        assert_eq!(got.provenance.enhancement, vec!["gamma(1.5)", "clahe(4x3,2)", "unsharp(5,1,1.5)"]);

        let flat = image(vec![0.4; 32 * 24], 32, 24);
        let out = apply_mode(&flat, &cfg).unwrap();
        assert!(out.pixels.iter().all(|&p| p == out.pixels[0]));
    }

    #[test]
    fn clahe_mode_chain_is_configurable() {
        let img = image((0..256).map(|i| (i % 17) as f32 / 16.0).collect(), 16, 16);
        let with = EnhanceConfig { clahe_tiles: (2, 2), ..EnhanceConfig::with_mode(Mode::Clahe) };
        let without = EnhanceConfig { clahe_with_unsharp: false, ..with.clone() };
        assert_eq!(apply_mode(&img, &without).unwrap().pixels, apply_clahe(&img, &with).unwrap().pixels);
        assert_eq!(
            apply_mode(&img, &with).unwrap().pixels,
            apply_unsharp(&apply_clahe(&img, &with).unwrap(), &with).unwrap().pixels
        );
    }

    #[test]
    fn config_validation() {
        assert!(EnhanceConfig::default().validate().is_ok());
        assert!(EnhanceConfig { clahe_clip: 1.0, ..Default::default() }.validate().is_err());
        assert!(EnhanceConfig { clahe_tiles: (0, 8), ..Default::default() }.validate().is_err());
        assert!(EnhanceConfig { unsharp_sigma: 0.0, ..Default::default() }.validate().is_err());
        assert!(EnhanceConfig { unsharp_gain: -0.1, ..Default::default() }.validate().is_err());
        assert!(EnhanceConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!("calc_focused".parse::<Mode>().unwrap(), Mode::CalcFocused);
        assert!("sharp".parse::<Mode>().is_err());
    }
}
