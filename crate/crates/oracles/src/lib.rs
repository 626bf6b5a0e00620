//! Slow, obviously-correct reference computations for tests.
//!
//! Nothing here shares code with the `cacforge` implementation paths it is
//! used to check. Inputs are plain slices so the oracles stay independent of
//! the library's types.

use std::collections::VecDeque;

/// Midpoint-rule integral of a piecewise-constant voxel field along `src → dst`.
///
/// The grid occupies `[0, n·h)` per axis with voxel `(i, j, k)` stored at
/// `i + nx·(j + ny·k)`.
pub fn line_integral_quadrature(
    values: &[f64],
    shape: [usize; 3],
    spacing: [f64; 3],
    src: [f64; 3],
    dst: [f64; 3],
    steps: usize,
) -> f64 {
    let delta = [dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]];
    let length = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
    let ds = length / steps as f64;
    let mut sum = 0.0;
    for s in 0..steps {
        let t = (s as f64 + 0.5) / steps as f64;
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let p = src[a] + t * delta[a];
            let cell = (p / spacing[a]).floor();
            if cell < 0.0 || cell >= shape[a] as f64 {
                inside = false;
                break;
            }
            idx[a] = cell as usize;
        }
        if inside {
            sum += values[idx[0] + shape[0] * (idx[1] + shape[1] * idx[2])];
        }
    }
    sum * ds
}

/// Length of the part of segment `src → dst` inside the box `[lo, hi]` (slab method).
pub fn segment_box_chord(lo: [f64; 3], hi: [f64; 3], src: [f64; 3], dst: [f64; 3]) -> f64 {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    let mut len2 = 0.0;
    for a in 0..3 {
        let d = dst[a] - src[a];
        len2 += d * d;
        if d == 0.0 {
            if src[a] < lo[a] || src[a] > hi[a] {
                return 0.0;
            }
        } else {
            let ta = (lo[a] - src[a]) / d;
            let tb = (hi[a] - src[a]) / d;
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if t1 <= t0 {
        0.0
    } else {
        (t1 - t0) * len2.sqrt()
    }
}

fn agatston_weight(peak: f32) -> f64 {
    if peak >= 400.0 {
        4.0
    } else if peak >= 300.0 {
        3.0
    } else if peak >= 200.0 {
        2.0
    } else if peak >= 130.0 {
        1.0
    } else {
        0.0
    }
}

/// Agatston total by breadth-first flood fill, one slice and one label at a time.
pub fn agatston_flood_fill(hu: &[f32], labels: &[u16], shape: [usize; 3], spacing: [f64; 3]) -> f64 {
    let [nx, ny, nz] = shape;
    let mut distinct: Vec<u16> = labels.iter().copied().filter(|&l| l != 0).collect();
    distinct.sort_unstable();
    distinct.dedup();

    let mut total = 0.0;
    for &label in &distinct {
        for k in 0..nz {
            let at = |i: usize, j: usize| i + nx * (j + ny * k);
            let hit = |i: usize, j: usize| labels[at(i, j)] == label && hu[at(i, j)] >= 130.0;
            let mut seen = vec![false; nx * ny];
            for j0 in 0..ny {
                for i0 in 0..nx {
                    if seen[i0 + nx * j0] || !hit(i0, j0) {
                        continue;
                    }
                    let mut count = 0usize;
                    let mut peak = f32::NEG_INFINITY;
                    let mut queue = VecDeque::from([(i0, j0)]);
                    seen[i0 + nx * j0] = true;
                    while let Some((i, j)) = queue.pop_front() {
                        count += 1;
                        peak = peak.max(hu[at(i, j)]);
                        for dj in -1i64..=1 {
                            for di in -1i64..=1 {
                                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                                if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                                    continue;
                                }
                                let (ii, jj) = (ii as usize, jj as usize);
                                if !seen[ii + nx * jj] && hit(ii, jj) {
                                    seen[ii + nx * jj] = true;
                                    queue.push_back((ii, jj));
                                }
                            }
                        }
                    }
                    let area = count as f64 * spacing[0] * spacing[1];
                    if area >= 1.0 - 1e-9 {
                        total += area * agatston_weight(peak);
                    }
                }
            }
        }
    }
    total
}

/// CLAHE evaluated pixel by pixel, rebuilding the four neighbouring tile
/// histograms from scratch for every output pixel.
///
/// Procedure: quantize to `round(255·p)`; pad to a whole number of tiles by
/// reflect-101; clip each bin at `max(floor(clip·N/256), 1)`; hand the clipped
/// excess out as `excess / 256` per bin plus one extra count to each of the
/// lowest `excess % 256` bins; map with `255·cdf/N`; blend the four tiles
/// whose centers surround the pixel bilinearly (clamped at the edges); round
/// to a level and divide by 255.
pub fn clahe_tile_loop(pixels: &[f32], width: usize, height: usize, tiles: (usize, usize), clip: f64) -> Vec<f32> {
    let (tiles_x, tiles_y) = tiles;
    let tile_w = width.div_ceil(tiles_x);
    let tile_h = height.div_ceil(tiles_y);
    let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
    let level = |x: usize, y: usize| -> usize {
        let p = pixels[reflect(y, height) * width + reflect(x, width)] as f64;
        (p * 255.0).round().clamp(0.0, 255.0) as usize
    };

    let tile_map = |tx: usize, ty: usize, v: usize| -> f64 {
        let mut hist = [0usize; 256];
        for y in ty * tile_h..(ty + 1) * tile_h {
            for x in tx * tile_w..(tx + 1) * tile_w {
                hist[level(x, y)] += 1;
            }
        }
        let n = tile_w * tile_h;
        let limit = ((clip * n as f64 / 256.0).floor() as usize).max(1);
        let mut excess = 0;
        for h in hist.iter_mut() {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        let each = excess / 256;
        let extra = excess % 256;
        let mut cdf = 0usize;
        for (b, h) in hist.iter().enumerate() {
            cdf += h + each + usize::from(b < extra);
            if b == v {
                break;
            }
        }
        cdf as f64 * 255.0 / n as f64
    };

    let neighbours = |coord: usize, tile: usize, count: usize| -> (usize, usize, f64) {
        let g = (coord as f64 + 0.5) / tile as f64 - 0.5;
        if g <= 0.0 {
            (0, 0, 0.0)
        } else if g >= (count - 1) as f64 {
            (count - 1, count - 1, 0.0)
        } else {
            let lo = g.floor() as usize;
            (lo, lo + 1, g - lo as f64)
        }
    };

    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let v = level(x, y);
            let (x0, x1, wx) = neighbours(x, tile_w, tiles_x);
            let (y0, y1, wy) = neighbours(y, tile_h, tiles_y);
            let top = (1.0 - wx) * tile_map(x0, y0, v) + wx * tile_map(x1, y0, v);
            let bottom = (1.0 - wx) * tile_map(x0, y1, v) + wx * tile_map(x1, y1, v);
            let blended = (1.0 - wy) * top + wy * bottom;
            out.push((blended.round().clamp(0.0, 255.0) / 255.0) as f32);
        }
    }
    out
}

/// Two-sided Wilcoxon signed-rank test by visiting all `2^n` sign
/// assignments of the non-zero differences. Returns `(min(W+, W-), p)`;
/// `None` when every difference is zero.
pub fn wilcoxon_enumerate(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&d| d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return None;
    }
    assert!(n <= 26, "enumeration oracle is for small n");
    let ranks: Vec<f64> = d
        .iter()
        .map(|di| {
            let below = d.iter().filter(|dj| dj.abs() < di.abs()).count() as f64;
            let equal = d.iter().filter(|dj| dj.abs() == di.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(di, _)| **di > 0.0).map(|(_, r)| r).sum();
    let observed = w_plus.min(total - w_plus);

    let mut extreme: u64 = 0;
    for signs in 0u64..(1u64 << n) {
        let mut w = 0.0;
        for (i, r) in ranks.iter().enumerate() {
            if signs >> i & 1 == 1 {
                w += r;
            }
        }
        if w.min(total - w) <= observed {
            extreme += 1;
        }
    }
    Some((observed, extreme as f64 / (1u64 << n) as f64))
}

/// ROC AUC by counting every (positive, negative) pair; ties count one half.
pub fn auc_pair_count(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
