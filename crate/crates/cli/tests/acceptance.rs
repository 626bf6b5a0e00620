//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use cacforge::dataset::{build_manifest, PatientRecord, SplitPlan, DEFAULT_SEEDS};
use cacforge::enhance::{apply_clahe, apply_mode, EnhanceConfig, Mode};
use cacforge::ingest::{agatston_score, BinaryLabel, CalciumMask, Volume};
use cacforge::projector::{
    hu_to_mu, render_drr, siddon_path_integral, DetectorFrame, DrrImage, ProjectionGeometry, View, ViewPose,
};
use cacforge::rng::CounterRng;
use cacforge::stats::{epoch_select, roc_auc, wilcoxon_signed_rank, wilcoxon_with_cutoff, PValueMethod, StatsError};
use cacforge::with_workers;
use cacforge_oracles::{
    agatston_flood_fill, auc_pair_count, clahe_tile_loop, line_integral_quadrature, wilcoxon_enumerate,
};
use common::*;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Parameter interval of `src → dst` inside `[0, ext)`, if any.
fn clip_to_box(ext: [f64; 3], src: [f64; 3], dst: [f64; 3]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        let d = dst[a] - src[a];
        if d == 0.0 {
            if src[a] < 0.0 || src[a] >= ext[a] {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((0.0 - src[a]) / d, (ext[a] - src[a]) / d);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 > t0).then_some((t0, t1))
}

fn siddon_exactness() -> Outcome {
    let start = Instant::now();
    let per_volume: Vec<Result<f64, String>> = (0..50u64).into_par_iter().map(siddon_volume).collect();
    let mut worst = 0.0f64;
    for r in per_volume {
        worst = worst.max(r?);
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("10000 rays, worst relative error {worst:.2e}, {:.1}s", elapsed.as_secs_f64()))
}

/// 200 random rays, a miss ray and three axis-aligned rays through one random volume; returns the worst relative error.
fn siddon_volume(vol: u64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    let rng = CounterRng::new(1000 + vol, 0);
    let shape = [0, 1, 2].map(|a| 1 + rng.below(a, 8) as usize);
    let spacing = [0, 1, 2].map(|a| rng.uniform(3 + a, 0.5, 3.0));
    let n = shape.iter().product::<usize>() as u64;
    // HU in [-800, 0] keeps μ in [0.2, 1.0].
    let hu: Vec<f32> = (0..n).map(|c| rng.uniform(10 + c, -800.0, 0.0) as f32).collect();
    let v = Volume::new(hu.clone(), shape, spacing, "s").unwrap();
    let mu: Vec<f64> = hu.iter().map(|&h| hu_to_mu(h)).collect();
    let ext = [0, 1, 2].map(|a| shape[a] as f64 * spacing[a]);
    let half_diag = ext.iter().map(|e| e * e).sum::<f64>().sqrt() / 2.0;
    let rr = CounterRng::new(2000 + vol, 1);
    for ray in 0..200u64 {
        let c = ray * 16;
        // Through a point of the central half-box, in a uniform random direction, endpoints well outside.
        let p = [0, 1, 2].map(|a| ext[a] * rr.uniform(c + a as u64, 0.25, 0.75));
        let z = rr.uniform(c + 3, -1.0, 1.0);
        let phi = rr.uniform(c + 4, 0.0, std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        let d = [s * phi.cos(), s * phi.sin(), z];
        let reach = 2.2 * half_diag;
        let src = [0, 1, 2].map(|a| p[a] - reach * d[a]);
        let dst = [0, 1, 2].map(|a| p[a] + reach * d[a]);
        let got = siddon_path_integral(&v, src, dst).map_err(|e| e.to_string())?;
        let (t0, t1) = clip_to_box(ext, src, dst).ok_or("central ray missed the volume")?;
        let a = [0, 1, 2].map(|k| src[k] + t0 * (dst[k] - src[k]));
        let b = [0, 1, 2].map(|k| src[k] + t1 * (dst[k] - src[k]));
        let want = line_integral_quadrature(&mu, shape, spacing, a, b, 100_000);
        let rel = (got - want).abs() / want;
        worst = worst.max(rel);
        check(rel <= 1e-3, || format!("volume {vol} ray {ray}: {got} vs {want} (rel {rel:.2e})"))?;
    }
    // Rays that miss the box integrate to exactly zero.
    let off = [ext[0] + 1.0, -1.0, ext[2] * 0.5];
    let miss = siddon_path_integral(&v, off, [off[0] + 3.0, off[1] - 5.0, off[2] + 1.0]).map_err(|e| e.to_string())?;
    check(miss == 0.0, || format!("volume {vol}: miss ray gave {miss}"))?;
    // Axis-aligned rays: exact sum of μ·h along a voxel line.
    let (i, j, k) = (shape[0] / 2, shape[1] / 2, shape[2] / 2);
    let at = |ii: usize, jj: usize, kk: usize| mu[ii + shape[0] * (jj + shape[1] * kk)];
    let y = (j as f64 + 0.37) * spacing[1];
    let zc = (k as f64 + 0.61) * spacing[2];
    let xc = (i as f64 + 0.29) * spacing[0];
    let cases = [
        ([-5.0, y, zc], [ext[0] + 5.0, y, zc], (0..shape[0]).map(|ii| at(ii, j, k) * spacing[0]).sum::<f64>()),
        ([xc, ext[1] + 4.0, zc], [xc, -4.0, zc], (0..shape[1]).map(|jj| at(i, jj, k) * spacing[1]).sum()),
        ([xc, y, -7.0], [xc, y, ext[2] + 7.0], (0..shape[2]).map(|kk| at(i, j, kk) * spacing[2]).sum()),
    ];
    for (src, dst, want) in cases {
        let got = siddon_path_integral(&v, src, dst).map_err(|e| e.to_string())?;
        check((got - want).abs() <= 1e-9 * want, || format!("volume {vol} axis ray: {got} vs {want}"))?;
    }
    Ok(worst)
}

fn phantom_64() -> Volume {
    let rng = CounterRng::new(64, 0);
    Volume::from_fn([64, 64, 64], [1.5; 3], "det", |i, j, k| {
        let r = ((i as f64 - 31.5).powi(2) + (j as f64 - 33.0).powi(2)).sqrt();
        let base = if r < 26.0 { 40.0 } else { -1000.0 };
        let c = (i + 64 * (j + 64 * k)) as u64;
        base + rng.uniform(c, -30.0, 30.0) as f32 + if (i / 8 + j / 8 + k / 8) % 5 == 0 { 600.0 } else { 0.0 }
    })
    .unwrap()
}

fn projector_determinism() -> Outcome {
    let v = phantom_64();
    let g = ProjectionGeometry::default();
    for view in View::ALL {
        let pose = ViewPose::new(view);
        let reference = with_workers(1, || render_drr(&v, &g, pose)).map_err(|e| e.to_string())?;
        for workers in [4, 16] {
            let img = with_workers(workers, || render_drr(&v, &g, pose)).map_err(|e| e.to_string())?;
            let same = img.pixels.iter().zip(&reference.pixels).all(|(a, b)| a.to_bits() == b.to_bits());
            check(same, || format!("{view} differs with {workers} workers"))?;
        }
    }
    Ok("64^3 phantom, PA and LA, 512x512, workers 1/4/16".into())
}

fn random_scan(seed: u64) -> (Volume, CalciumMask) {
    let rng = CounterRng::new(seed, 0);
    let shape = [6 + rng.below(0, 14) as usize, 6 + rng.below(1, 14) as usize, 1 + rng.below(2, 6) as usize];
    let spacing = [rng.uniform(3, 0.3, 0.9), rng.uniform(4, 0.3, 0.9), rng.uniform(5, 0.5, 3.0)];
    let n = shape.iter().product::<usize>() as u64;
    let arteries = 1 + rng.below(6, 4) as u16;
    let v = Volume::from_fn(shape, spacing, "A", |i, j, k| {
        rng.uniform(100 + (i + shape[0] * (j + shape[1] * k)) as u64, -200.0, 900.0).round() as f32
    })
    .unwrap();
    let names: BTreeMap<u16, String> = (1..=arteries).map(|a| (a, format!("A{a}"))).collect();
    let labels =
        (0..n)
            .map(|c| {
                if rng.below(100 + n + c, 3) == 0 {
                    1 + rng.below(100 + 2 * n + c, arteries as u64) as u16
                } else {
                    0
                }
            })
            .collect();
    (v.clone(), CalciumMask::new(labels, shape, spacing, "A", names).unwrap())
}

fn agatston_oracle() -> Outcome {
    let mut nonzero = 0;
    for seed in 0..100 {
        let (v, m) = random_scan(7000 + seed);
        let got = agatston_score(&v, &m).map_err(|e| e.to_string())?.agatston;
        let want = agatston_flood_fill(v.voxels(), m.labels(), v.shape(), v.spacing());
        check((got - want).abs() <= 1e-9 * want.max(1.0), || format!("seed {seed}: {got} vs {want}"))?;
        nonzero += usize::from(want > 0.0);
    }
    // 25 mm² at weight 4 is exactly 100; one more 1 mm² voxel at weight 1 makes 101.
    let mut v = Volume::new(vec![0.0; 10 * 10 * 2], [10, 10, 2], [1.0, 1.0, 3.0], "B").unwrap();
    let mut m = CalciumMask::empty_like(&v);
    for i in 0..5 {
        for j in 0..5 {
            v.set(i, j, 0, 450.0);
            m.set(i, j, 0, 1, "LAD");
        }
    }
    let at_100 = agatston_score(&v, &m).map_err(|e| e.to_string())?;
    check(at_100.agatston == 100.0 && at_100.binary == BinaryLabel::Negative, || format!("100 case: {at_100:?}"))?;
    v.set(8, 8, 1, 150.0);
    m.set(8, 8, 1, 2, "RCA");
    let at_101 = agatston_score(&v, &m).map_err(|e| e.to_string())?;
    check(at_101.agatston == 101.0 && at_101.binary == BinaryLabel::Positive, || format!("101 case: {at_101:?}"))?;
    Ok(format!("100 random scans ({nonzero} with calcium), boundary 100 negative and 101 positive"))
}

fn clahe_reference() -> Outcome {
    for seed in 0..20u64 {
        let rng = CounterRng::new(seed, 3);
        let pixels: Vec<f32> = (0..64 * 64).map(|c| rng.unit(c) as f32).collect();
        let img = DrrImage::new(pixels.clone(), 64, 64);
        for tiles in [(2, 2), (8, 8)] {
            let cfg = EnhanceConfig { clahe_tiles: tiles, clahe_clip: 2.0, ..EnhanceConfig::with_mode(Mode::Clahe) };
            let got = apply_clahe(&img, &cfg).map_err(|e| e.to_string())?;
            let want = clahe_tile_loop(&pixels, 64, 64, tiles, 2.0);
            let diff = got.pixels.iter().zip(&want).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
            check(diff == 0, || format!("image {seed}, tiles {tiles:?}: {diff} pixels differ"))?;
        }
    }
    Ok("20 images x {2x2, 8x8} tiles, bit-equal".into())
}

/// (mean inside − mean ring) / mean ring around a projected point.
fn local_contrast(img: &DrrImage, center: (f64, f64), inner: f64, ring: (f64, f64)) -> f64 {
    let (mut si, mut ni, mut sr, mut nr) = (0.0, 0, 0.0, 0);
    for y in 0..img.height {
        for x in 0..img.width {
            let r = ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt();
            let p = img.get(x, y) as f64;
            if r <= inner {
                si += p;
                ni += 1;
            } else if r >= ring.0 && r <= ring.1 {
                sr += p;
                nr += 1;
            }
        }
    }
    (si / ni as f64 - sr / nr as f64) / (sr / nr as f64)
}

fn phantom_contrast() -> Outcome {
    let (n, h) = (64usize, 1.0);
    let insert = [38.5, 30.5, 34.5];
    let v = Volume::from_fn([n, n, n], [h; 3], "C", |i, j, k| {
        let p = [i, j, k].map(|x| x as f64 + 0.5);
        let d = ((p[0] - insert[0]).powi(2) + (p[1] - insert[1]).powi(2) + (p[2] - insert[2]).powi(2)).sqrt();
        let body = ((p[0] - 32.0).powi(2) + (p[1] - 32.0).powi(2)).sqrt() < 28.0;
        if d < 3.0 {
            1200.0
        } else if body {
            40.0
        } else {
            -1000.0
        }
    })
    .unwrap();
    let g = ProjectionGeometry::default();
    let pose = ViewPose::new(View::Pa);
    let img = render_drr(&v, &g, pose).map_err(|e| e.to_string())?;
    let world = insert.map(|c| c * h - n as f64 * h / 2.0);
    let frame = DetectorFrame::new(&g, pose);
    let center = frame.project_point(&g, world).ok_or("insert does not project")?;
    let edge = frame.project_point(&g, [world[0] + 3.0, world[1], world[2]]).ok_or("insert edge does not project")?;
    let radius = (edge.0 - center.0).abs();
    let inner = 0.5 * radius;
    let ring = (1.5 * radius, 3.0 * radius);
    let original =
        local_contrast(&apply_mode(&img, &EnhanceConfig::with_mode(Mode::Original)).unwrap(), center, inner, ring);
    let focused =
        local_contrast(&apply_mode(&img, &EnhanceConfig::with_mode(Mode::CalcFocused)).unwrap(), center, inner, ring);
    check(focused >= original, || format!("calc_focused {focused:.4} < original {original:.4}"))?;
    Ok(format!("contrast original {original:.4}, calc_focused {focused:.4}"))
}

fn split_properties() -> Outcome {
    for trial in 0..100u64 {
        let rng = CounterRng::new(trial, 11);
        let positives = 5 + rng.below(0, 658) as usize;
        let records: Vec<PatientRecord> = (0..667)
            .map(|i| {
                let score = if i < positives {
                    101.0 + rng.uniform(1 + i as u64, 0.0, 3000.0)
                } else {
                    rng.uniform(1 + i as u64, 0.0, 100.0)
                };
                PatientRecord::new(
                    format!("S{:07}", rng.below(5000 + i as u64, 10_000) * 1000 + i as u64),
                    score,
                    Mode::Original,
                )
            })
            .collect();
        let m = build_manifest(records, None).map_err(|e| e.to_string())?;
        let plan = SplitPlan::build(&m, 5, &DEFAULT_SEEDS).map_err(|e| e.to_string())?;
        check(plan.assignments.len() == 25, || format!("trial {trial}: {} partitions", plan.assignments.len()))?;
        let all: BTreeSet<&str> = m.ids().into_iter().collect();
        for &seed in &DEFAULT_SEEDS {
            let mut seen = BTreeSet::new();
            for fold in 0..5 {
                let a = plan.get(seed, fold).ok_or("missing fold")?;
                check(a.val.len() == 133 || a.val.len() == 134, || format!("trial {trial}: val size {}", a.val.len()))?;
                let train: BTreeSet<&str> = a.train.iter().map(String::as_str).collect();
                let val: BTreeSet<&str> = a.val.iter().map(String::as_str).collect();
                check(train.is_disjoint(&val), || format!("trial {trial}: train/val overlap"))?;
                check(train.union(&val).copied().collect::<BTreeSet<_>>() == all, || {
                    format!("trial {trial}: not a partition")
                })?;
                for id in &val {
                    check(seen.insert(*id), || format!("trial {trial}: {id} validated twice"))?;
                }
                let pos = a.val.iter().filter(|id| m.get(id).unwrap().binary == BinaryLabel::Positive).count() as f64;
                check((pos - positives as f64 / 5.0).abs() <= 1.0, || {
                    format!("trial {trial}: {pos} positives in fold")
                })?;
            }
            check(seen.len() == 667, || format!("trial {trial}: val folds cover {}", seen.len()))?;
        }
    }
    Ok("100 label ratios x 5 seeds x 5 folds on 667 patients".into())
}

fn wilcoxon_exactness() -> Outcome {
    let mut checked = 0;
    for t in 0..3000u64 {
        let rng = CounterRng::new(t, 21);
        let n = 1 + (t % 10) as usize;
        let levels = 2 + rng.below(0, 9);
        let a: Vec<f64> = (0..n).map(|i| rng.below(1 + i as u64, levels) as f64 * 0.125).collect();
        let b: Vec<f64> = (0..n).map(|i| rng.below(100 + i as u64, levels) as f64 * 0.125).collect();
        let r = wilcoxon_signed_rank(&a, &b);
        match wilcoxon_enumerate(&a, &b) {
            None => check(r.is_degenerate() && r.p_value == 1.0, || format!("case {t}: expected degenerate"))?,
            Some((w, p)) => {
                check(r.method == PValueMethod::Exact, || format!("case {t}: not exact"))?;
                check(r.statistic == Some(w) && r.p_value.to_bits() == p.to_bits(), || {
                    format!("case {t}: ({:?}, {}) vs ({w}, {p})", r.statistic, r.p_value)
                })?;
                checked += 1;
            }
        }
    }
    let mut worst = 0.0f64;
    for t in 0..200u64 {
        let rng = CounterRng::new(t, 22);
        let shift = rng.uniform(0, -0.04, 0.04);
        let a: Vec<f64> = (0..25).map(|i| rng.uniform(1 + i, 0.6, 0.85)).collect();
        let b: Vec<f64> = (0..25).map(|i| rng.uniform(100 + i, 0.6, 0.85) + shift).collect();
        let normal = wilcoxon_signed_rank(&a, &b);
        let exact = wilcoxon_with_cutoff(&a, &b, usize::MAX);
        check(normal.method == PValueMethod::Normal, || "n = 25 did not use the normal branch".into())?;
        worst = worst.max((normal.p_value - exact.p_value).abs());
        // Subsampled n = 12 stays on the exact branch and agrees with enumeration.
        let (w, p) = wilcoxon_enumerate(&a[..12], &b[..12]).ok_or("degenerate subsample")?;
        let sub = wilcoxon_signed_rank(&a[..12], &b[..12]);
        check(
            sub.method == PValueMethod::Exact && sub.statistic == Some(w) && sub.p_value.to_bits() == p.to_bits(),
            || format!("n=12 case {t} disagrees with enumeration"),
        )?;
    }
    check(worst <= 0.02, || format!("normal vs exact at n=25 differs by {worst}"))?;
    let zero = wilcoxon_signed_rank(&[0.7; 6], &[0.7; 6]);
    check(zero.is_degenerate() && zero.p_value == 1.0 && zero.statistic.is_none(), || format!("{zero:?}"))?;
    Ok(format!("{checked} exact cases bit-equal, n=25 worst |Δp| {worst:.4}, degenerate flagged"))
}

fn auc_oracle() -> Outcome {
    for t in 0..1000u64 {
        let rng = CounterRng::new(t, 31);
        let n = 2 + rng.below(0, 80) as usize;
        let levels = 2 + rng.below(1, 30);
        let scores: Vec<f64> = (0..n).map(|i| rng.below(2 + i as u64, levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|i| rng.below(500 + i as u64, 2) == 1).collect();
        labels[0] = true;
        labels[n - 1] = false;
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = auc_pair_count(&scores, &labels);
        check(got == want, || format!("case {t}: {got} vs {want}"))?;
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() * 0.25 + 1.0).collect();
        let m = roc_auc(&mapped, &labels).map_err(|e| e.to_string())?;
        check(m == got, || format!("case {t}: monotone map changed AUC {got} -> {m}"))?;
    }
    Ok("1000 instances with ties, monotone invariance".into())
}

fn epoch_rule() -> Outcome {
    let aucs = [0.5, 0.5, 0.5, 0.5, 0.5, 0.70, 0.71, 0.72, 0.73, 0.74, 0.75, 0.60];
    let got = epoch_select(&aucs).map_err(|e| e.to_string())?;
    check((got - 0.730).abs() < 1e-12, || format!("got {got}"))?;
    check(epoch_select(&aucs[..9]) == Err(StatsError::TooFewEpochs { needed: 10, got: 9 }), || {
        "9 epochs accepted".into()
    })?;
    Ok(format!("{got:.3}; 9 epochs rejected"))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let t = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = t.path().join("scans");
    cohort(&input, 5, [48, 48, 32]);
    let cfg = t.path().join("pipeline.toml");
    // Five patients give three negatives and two positives, so two folds.
    write_config(&cfg, "[dataset]\nfolds = 2\n");
    let runs = t.path().join("runs");
    write_run_set(&runs.join("original"), &[0, 1, 2, 3, 4], 2, 0.2, 5);
    write_run_set(&runs.join("calc_focused"), &[0, 1, 2, 3, 4], 2, 0.3, 6);
    fs::write(runs.join("spec.tsv"), "name\trun_set_a\trun_set_b\noriginal_vs_calc\toriginal\tcalc_focused\n")
        .map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for pass in ["a", "b"] {
        let out = t.path().join(pass);
        let common =
            ["--config", cfg.to_str().unwrap(), "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()];
        for args in [
            vec!["run", "--mode", "all", "--view", "both"],
            vec!["stats", "--spec", runs.join("spec.tsv").to_str().unwrap()],
        ] {
            let o = run(&[&args[..], &common[..]].concat());
            let (_, stderr) = text(&o);
            check(o.status.success(), || format!("pass {pass} `{}` failed: {stderr}", args[0]))?;
        }
        trees.push(tree(&out));
    }
    let elapsed = start.elapsed();
    let files = trees[0].len();
    check(files >= 5 * 2 * 4 * 3, || format!("only {files} files written"))?;
    for mode in Mode::ALL {
        check(trees[0].contains_key(&format!("dataset/{mode}/manifest.tsv")), || format!("no manifest for {mode}"))?;
    }
    check(trees[0].contains_key("stats/report.txt"), || "no stats report".into())?;
    if trees[0] != trees[1] {
        let differ: Vec<&String> = trees[0].keys().filter(|k| trees[1].get(*k) != trees[0].get(*k)).take(3).collect();
        return Err(format!("runs differ, e.g. {differ:?}"));
    }
    check(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{files} files byte-identical across two runs, {:.1}s", elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("siddon-exactness", siddon_exactness),
        ("projector-determinism", projector_determinism),
        ("agatston-oracle", agatston_oracle),
        ("clahe-reference", clahe_reference),
        ("phantom-contrast", phantom_contrast),
        ("split-properties", split_properties),
        ("wilcoxon-exactness", wilcoxon_exactness),
        ("roc-auc", auc_oracle),
        ("epoch-selection", epoch_rule),
        ("end-to-end", end_to_end),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
