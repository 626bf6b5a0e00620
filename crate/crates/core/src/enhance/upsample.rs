//! Sagittal slice upsampling ahead of projection.
//!
//! A sagittal slice is the `x = const` plane, laid out with `y` as its fast
//! axis (width `ny`) and `z` as rows (height `nz`). Both in-slice axes grow by
//! `factor`; the x spacing is untouched and the y/z spacings shrink by
//! `factor`, so the physical extent is preserved.
//!
//! External model protocol, per slice, over the child's standard streams:
//! `u32 width`, `u32 height`, then `width·height` `f32` samples row-major,
//! all little-endian. The child must reply in the same layout with
//! `factor·width × factor·height` samples and exit 0.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::ingest::Volume;

use super::EnhanceError;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalModel {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpsampleMethod {
    BicubicBaseline,
    External(ExternalModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleConfig {
    pub factor: usize,
    pub method: UpsampleMethod,
}

impl Default for UpsampleConfig {
    fn default() -> Self {
        Self { factor: 4, method: UpsampleMethod::BicubicBaseline }
    }
}

/// Keys cubic convolution weights (a = −0.5) for fractional offset `t`.
fn keys_weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let near = |x: f64| ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0;
    let far = |x: f64| ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A;
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

/// Four clamped source indices and weights per output sample.
fn cubic_taps(n_in: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..n_in * factor)
        .map(|o| {
            let u = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = u.floor();
            let idx = [-1isize, 0, 1, 2].map(|d| (base as isize + d).clamp(0, n_in as isize - 1) as usize);
            (idx, keys_weights(u - base))
        })
        .collect()
}

fn upsampled_shape(shape: [usize; 3], factor: usize) -> Result<[usize; 3], EnhanceError> {
    let overflow = || EnhanceError::ShapeOverflow(shape, factor);
    let ny = shape[1].checked_mul(factor).ok_or_else(overflow)?;
    let nz = shape[2].checked_mul(factor).ok_or_else(overflow)?;
    shape[0].checked_mul(ny).and_then(|p| p.checked_mul(nz)).ok_or_else(overflow)?;
    Ok([shape[0], ny, nz])
}

/// Upsamples every sagittal slice and reassembles the volume.
pub fn upsample_sagittal(v: &Volume, cfg: &UpsampleConfig) -> Result<Volume, EnhanceError> {
    if cfg.factor == 0 {
        return Err(EnhanceError::InvalidConfig("upsample factor must be at least 1".into()));
    }
    if cfg.factor == 1 {
        return Ok(v.clone());
    }
    let shape = upsampled_shape(v.shape(), cfg.factor)?;
    let [dx, dy, dz] = v.spacing();
    let spacing = [dx, dy / cfg.factor as f64, dz / cfg.factor as f64];
    let voxels = match &cfg.method {
        UpsampleMethod::BicubicBaseline => bicubic(v, cfg.factor, shape),
        UpsampleMethod::External(model) => external(v, cfg.factor, shape, model)?,
    };
    Ok(Volume::new(voxels, shape, spacing, v.patient_id())?)
}

fn bicubic(v: &Volume, factor: usize, shape: [usize; 3]) -> Vec<f32> {
    let [nx, _, _] = v.shape();
    let ys = cubic_taps(v.shape()[1], factor);
    let zs = cubic_taps(v.shape()[2], factor);
    let plane = shape[0] * shape[1];
    let mut out = vec![0f32; plane * shape[2]];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        let (zi, zw) = zs[k];
        for (j, row) in slab.chunks_mut(nx).enumerate() {
            let (yi, yw) = ys[j];
            for (i, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (&z, &wz) in zi.iter().zip(&zw) {
                    let mut line = 0.0;
                    for (&y, &wy) in yi.iter().zip(&yw) {
                        line += wy * v.get(i, y, z) as f64;
                    }
                    acc += wz * line;
                }
                *o = acc as f32;
            }
        }
    });
    out
}

fn encode_slice(v: &Volume, i: usize) -> Vec<u8> {
    let [_, ny, nz] = v.shape();
    let mut bytes = Vec::with_capacity(8 + 4 * ny * nz);
    bytes.extend((ny as u32).to_le_bytes());
    bytes.extend((nz as u32).to_le_bytes());
    for k in 0..nz {
        for j in 0..ny {
            bytes.extend(v.get(i, j, k).to_le_bytes());
        }
    }
    bytes
}

fn run_model(
    model: &ExternalModel,
    slice: usize,
    input: Vec<u8>,
    expect: (usize, usize),
) -> Result<Vec<f32>, EnhanceError> {
    let fail = |message: String| EnhanceError::External { program: model.program.clone(), slice, message };
    let mut child = Command::new(&model.program)
        .args(&model.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| fail(format!("spawn failed: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = thread::spawn(move || {
        // A child that exits early closes the pipe; the exit status reports that.
        let _ = stdin.write_all(&input);
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });

    let deadline = Instant::now() + model.timeout;
    let status = loop {
        match child.try_wait().map_err(|e| fail(e.to_string()))? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(fail(format!("timed out after {:?}", model.timeout)));
            }
            None => thread::sleep(Duration::from_millis(2)),
        }
    };
    let _ = writer.join();
    let bytes = reader.join().expect("reader thread").map_err(|e| fail(e.to_string()))?;
    if !status.success() {
        return Err(fail(format!("exited with {status}")));
    }
    if bytes.len() < 8 {
        return Err(fail("reply shorter than its header".into()));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if (w, h) != expect {
        return Err(fail(format!("reply is {w}x{h}, expected {}x{}", expect.0, expect.1)));
    }
    if bytes.len() != 8 + 4 * w * h {
        return Err(fail(format!("reply payload has {} bytes, expected {}", bytes.len() - 8, 4 * w * h)));
    }
    Ok(bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn external(v: &Volume, factor: usize, shape: [usize; 3], model: &ExternalModel) -> Result<Vec<f32>, EnhanceError> {
    let [nx, ny, nz] = shape;
    let slices: Vec<Vec<f32>> = (0..nx)
        .into_par_iter()
        .map(|i| run_model(model, i, encode_slice(v, i), (v.shape()[1] * factor, v.shape()[2] * factor)))
        .collect::<Result<_, _>>()?;
    let mut out = vec![0f32; nx * ny * nz];
    for (i, slice) in slices.iter().enumerate() {
        for k in 0..nz {
            for j in 0..ny {
                out[i + nx * (j + ny * k)] = slice[k * ny + j];
            }
        }
    }
    Ok(out)
}
