//! Contrast-limited adaptive histogram equalization on 256 gray levels.
//!
//! The image is split into `tiles_x × tiles_y` tiles of `ceil(w / tiles_x) ×
//! ceil(h / tiles_y)` pixels; the last row and column of tiles are filled out
//! by reflect-101 padding so every tile holds the same count `N`. Each tile's
//! histogram is clipped at `max(floor(clip·N / 256), 1)` and the clipped
//! excess is spread evenly over all bins, the remainder going one count each
//! to the lowest bins. A pixel's output blends the mappings of the four tiles
//! whose centers surround it.

use rayon::prelude::*;

use crate::projector::DrrImage;

use super::{EnhanceConfig, EnhanceError};

const LEVELS: usize = 256;

#[inline]
fn quantize(p: f32) -> usize {
    ((p as f64) * 255.0).round().clamp(0.0, 255.0) as usize
}

#[inline]
fn reflect101(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * (n - 1) - i
    }
}

/// Per-tile lookup tables `lut[ty·tiles_x + tx][level]`, in output gray levels (0–255, unrounded).
pub fn clahe_tile_luts(
    levels: &[u8],
    width: usize,
    height: usize,
    tiles: (usize, usize),
    clip: f64,
) -> Vec<[f64; LEVELS]> {
    let (tiles_x, tiles_y) = tiles;
    let tile_w = width.div_ceil(tiles_x);
    let tile_h = height.div_ceil(tiles_y);
    let n = tile_w * tile_h;
    let limit = ((clip * n as f64 / LEVELS as f64).floor() as usize).max(1);

    (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let mut hist = [0usize; LEVELS];
            for y in ty * tile_h..(ty + 1) * tile_h {
                let row = reflect101(y, height) * width;
                for x in tx * tile_w..(tx + 1) * tile_w {
                    hist[levels[row + reflect101(x, width)] as usize] += 1;
                }
            }
            let mut excess = 0;
            for h in hist.iter_mut() {
                if *h > limit {
                    excess += *h - limit;
                    *h = limit;
                }
            }
            let (each, extra) = (excess / LEVELS, excess % LEVELS);
            let mut lut = [0.0; LEVELS];
            let mut cdf = 0usize;
            for (b, h) in hist.iter().enumerate() {
                cdf += h + each + usize::from(b < extra);
                lut[b] = cdf as f64 * 255.0 / n as f64;
            }
            lut
        })
        .collect()
}

/// Lower tile, upper tile and weight of the upper one for pixel `coord`.
#[inline]
fn neighbours(coord: usize, tile: usize, count: usize) -> (usize, usize, f64) {
    let g = (coord as f64 + 0.5) / tile as f64 - 0.5;
    if g <= 0.0 {
        (0, 0, 0.0)
    } else if g >= (count - 1) as f64 {
        (count - 1, count - 1, 0.0)
    } else {
        let lo = g.floor() as usize;
        (lo, lo + 1, g - lo as f64)
    }
}

pub fn apply_clahe(img: &DrrImage, cfg: &EnhanceConfig) -> Result<DrrImage, EnhanceError> {
    cfg.validate()?;
    let (tiles_x, tiles_y) = cfg.clahe_tiles;
    let (w, h) = (img.width, img.height);
    if w < tiles_x || h < tiles_y {
        return Err(EnhanceError::ImageTooSmall { width: w, height: h, tiles_x, tiles_y });
    }
    let levels: Vec<u8> = img.pixels.iter().map(|&p| quantize(p) as u8).collect();
    let luts = clahe_tile_luts(&levels, w, h, cfg.clahe_tiles, cfg.clahe_clip);
    let tile_w = w.div_ceil(tiles_x);
    let tile_h = h.div_ceil(tiles_y);
    let xs: Vec<_> = (0..w).map(|x| neighbours(x, tile_w, tiles_x)).collect();

    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let (y0, y1, wy) = neighbours(y, tile_h, tiles_y);
        for (x, o) in row.iter_mut().enumerate() {
            let v = levels[y * w + x] as usize;
            let (x0, x1, wx) = xs[x];
            let m = |tx: usize, ty: usize| luts[ty * tiles_x + tx][v];
            let top = (1.0 - wx) * m(x0, y0) + wx * m(x1, y0);
            let bottom = (1.0 - wx) * m(x0, y1) + wx * m(x1, y1);
            let blended = (1.0 - wy) * top + wy * bottom;
            *o = (blended.round().clamp(0.0, 255.0) / 255.0) as f32;
        }
    });
    Ok(img.with_pixels(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn cfg(tiles: (usize, usize)) -> EnhanceConfig {
        EnhanceConfig { clahe_tiles: tiles, ..Default::default() }
    }

    fn random(w: usize, h: usize, seed: u64) -> DrrImage {
        let rng = CounterRng::new(seed, 3);
        DrrImage::new((0..(w * h) as u64).map(|c| rng.unit(c) as f32).collect(), w, h)
    }

    #[test]
    fn matches_tile_loop_reference() {
        for (w, h, tiles) in [(64, 64, (2, 2)), (37, 29, (3, 4)), (20, 20, (8, 8))] {
            let img = random(w, h, w as u64);
            let got = apply_clahe(&img, &cfg(tiles)).unwrap().pixels;
            let want = cacforge_oracles::clahe_tile_loop(&img.pixels, w, h, tiles, 2.0);
            assert_eq!(got, want, "{w}x{h} {tiles:?}");
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        for w in [16, 19, 64] {
            let img = DrrImage::new(vec![0.3; w * w], w, w);
            let out = apply_clahe(&img, &cfg((8, 8))).unwrap();
            assert!(out.pixels.iter().all(|&p| p == out.pixels[0]));
        }
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = DrrImage::new(vec![0.0; 7 * 7], 7, 7);
        assert!(matches!(apply_clahe(&img, &cfg((8, 8))), Err(EnhanceError::ImageTooSmall { .. })));
    }

    #[test]
    fn change_in_corner_tile_stays_local() {
        let img = random(64, 64, 9);
        let mut changed = img.clone();
        changed.pixels[3 * 64 + 2] = 1.0 - changed.pixels[3 * 64 + 2];
        let a = apply_clahe(&img, &cfg((8, 8))).unwrap();
        let b = apply_clahe(&changed, &cfg((8, 8))).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                if x >= 16 || y >= 16 {
                    assert_eq!(a.get(x, y), b.get(x, y), "({x},{y})");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn luts_are_monotone_and_output_in_range(seed in any::<u64>(), w in 8usize..40, h in 8usize..40, clip in 1.01f64..6.0) {
            let img = random(w, h, seed);
            let levels: Vec<u8> = img.pixels.iter().map(|&p| quantize(p) as u8).collect();
            for lut in clahe_tile_luts(&levels, w, h, (4, 4), clip) {
                prop_assert!(lut.windows(2).all(|p| p[0] <= p[1]));
                prop_assert!(lut[255] <= 255.0 + 1e-9);
            }
            let c = EnhanceConfig { clahe_clip: clip, clahe_tiles: (4, 4), ..Default::default() };
            let out = apply_clahe(&img, &c).unwrap();
            prop_assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
