#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cacforge::ingest::{write_mask, write_volume, CalciumMask, Volume};
use cacforge::raster::DType;
use cacforge::rng::CounterRng;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cacforge"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cacforge")
}

pub fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

/// Soft-tissue ellipse in air with a square calcified lesion of `side` voxels
/// on slice `nz / 2` at `hu`.
pub fn phantom(
    id: &str,
    shape: [usize; 3],
    spacing: [f64; 3],
    side: usize,
    hu: f32,
    seed: u64,
) -> (Volume, CalciumMask) {
    let rng = CounterRng::new(seed, 0);
    let [nx, ny, nz] = shape;
    let (cx, cy) = (nx as f64 / 2.0, ny as f64 / 2.0);
    let v = Volume::from_fn(shape, spacing, id, |i, j, k| {
        let (dx, dy) = ((i as f64 + 0.5 - cx) / (0.45 * nx as f64), (j as f64 + 0.5 - cy) / (0.4 * ny as f64));
        let c = (i + nx * (j + ny * k)) as u64;
        if dx * dx + dy * dy <= 1.0 {
            (40.0 + rng.uniform(c, -20.0, 20.0)).round() as f32
        } else {
            -1000.0
        }
    })
    .unwrap()
    .with_source_dtype(DType::I16);
    let mut v = v;
    let mut m = CalciumMask::empty_like(&v);
    let (i0, j0, k0) = (nx / 2 - side / 2, ny / 2 - side / 2, nz / 2);
    for i in i0..i0 + side {
        for j in j0..j0 + side {
            v.set(i, j, k0, hu);
            m.set(i, j, k0, 1, "LAD");
        }
    }
    (v, m)
}

pub fn write_patient(input: &Path, v: &Volume, m: Option<&CalciumMask>) -> PathBuf {
    let dir = input.join(v.patient_id());
    write_volume(v, &dir.join("ct")).unwrap();
    if let Some(m) = m {
        write_mask(m, &dir.join("mask")).unwrap();
    }
    dir
}

/// `n` phantoms, alternating clearly negative and clearly positive scores.
pub fn cohort(input: &Path, n: usize, shape: [usize; 3]) {
    for p in 0..n {
        let side = if p % 2 == 0 { 2 } else { 12 };
        let (v, m) = phantom(&format!("PH{p:03}"), shape, [0.7, 0.7, 2.5], side, 450.0, p as u64);
        write_patient(input, &v, Some(&m));
    }
}

pub fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

/// Synthetic run logs: per (seed, fold), 15 epochs of scores whose AUC drifts with `skill`.
pub fn write_run_set(dir: &Path, seeds: &[u64], folds: usize, skill: f64, salt: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for &seed in seeds {
        for fold in 0..folds {
            let rng = CounterRng::new(salt, seed * 100 + fold as u64);
            let mut t = String::from("epoch\tpatient_id\tscore\tlabel\n");
            for epoch in 1..=15u64 {
                for p in 0..20u64 {
                    let label = p % 2;
                    let noise = rng.unit(epoch * 1000 + p);
                    let score = (noise * (1.0 - skill) + skill * label as f64).clamp(0.0, 1.0);
                    t.push_str(&format!("{epoch}\tR{p:02}\t{score}\t{label}\n"));
                }
            }
            std::fs::write(dir.join(format!("seed{seed}_fold{fold}.tsv")), t).unwrap();
        }
    }
}
