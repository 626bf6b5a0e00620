//! DRR bundles: a 2-D `f32` raster (shape `width height`), a provenance file
//! of `key = value` lines next to it, and an optional 16-bit grayscale PNG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::raster::{self, DType, FormatError, RasterHeader, RasterKind, Samples};

use super::{DrrImage, ProjectError, Provenance, View};

pub const PROVENANCE_FILE: &str = "provenance";
pub const PREVIEW_FILE: &str = "preview.png";

impl Provenance {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "patient_id = {}", self.patient_id);
        let _ = writeln!(out, "view = {}", self.view.map(View::as_str).unwrap_or("none"));
        let _ = writeln!(out, "rotation_deg = {}", self.rotation_deg);
        let _ = writeln!(out, "geometry = {}", self.geometry);
        let _ = writeln!(out, "geometry_hash = {}", self.geometry_hash);
        let _ = writeln!(out, "orientation = {}", self.orientation);
        let _ = writeln!(out, "enhancement = {}", self.enhancement.join(" "));
        for (k, v) in &self.extra {
            let _ = writeln!(out, "extra.{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProjectError> {
        let mut p = Provenance::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .or_else(|| line.strip_suffix(" =").map(|k| (k, "")))
                .ok_or_else(|| ProjectError::Provenance(format!("line {}: expected `key = value`", n + 1)))?;
            match key {
                "patient_id" => p.patient_id = value.to_string(),
                "view" => {
                    p.view = match value {
                        "none" => None,
                        v => Some(
                            View::parse(v).ok_or_else(|| ProjectError::Provenance(format!("unknown view `{v}`")))?,
                        ),
                    }
                }
                "rotation_deg" => {
                    p.rotation_deg =
                        value.parse().map_err(|_| ProjectError::Provenance(format!("bad rotation `{value}`")))?
                }
                "geometry" => p.geometry = value.to_string(),
                "geometry_hash" => p.geometry_hash = value.to_string(),
                "orientation" => p.orientation = value.to_string(),
                "enhancement" => p.enhancement = value.split_whitespace().map(str::to_string).collect(),
                k => match k.strip_prefix("extra.") {
                    Some(name) => {
                        p.extra.insert(name.to_string(), value.to_string());
                    }
                    None => return Err(ProjectError::Provenance(format!("unknown key `{k}`"))),
                },
            }
        }
        Ok(p)
    }
}

/// Writes `dir/header`, `dir/voxels.raw` and `dir/provenance`.
pub fn write_drr(img: &DrrImage, dir: &Path) -> Result<(), ProjectError> {
    let header = RasterHeader {
        kind: RasterKind::Drr,
        patient_id: img.provenance.patient_id.clone(),
        shape: vec![img.width, img.height],
        spacing: img.pixel_spacing.to_vec(),
        dtype: DType::F32,
        labels: BTreeMap::new(),
    };
    raster::write_bundle(dir, &header, &Samples::F32(img.pixels.clone()))?;
    let path = dir.join(PROVENANCE_FILE);
    fs::write(&path, img.provenance.render()).map_err(|e| FormatError::io(&path, e))?;
    Ok(())
}

/// Reads a DRR bundle; the provenance file is optional.
pub fn read_drr(path: &Path) -> Result<DrrImage, ProjectError> {
    let (header, samples) = raster::read_bundle(path)?;
    if header.kind != RasterKind::Drr {
        return Err(FormatError::invalid(path, format!("expected a drr bundle, found {}", header.kind.as_str())).into());
    }
    let (header_path, _) = raster::bundle_files(path);
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let prov_path = dir.join(PROVENANCE_FILE);
    let provenance = match fs::read_to_string(&prov_path) {
        Ok(text) => Provenance::parse(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Provenance { patient_id: header.patient_id.clone(), ..Default::default() }
        }
        Err(e) => return Err(FormatError::io(&prov_path, e).into()),
    };
    Ok(DrrImage {
        pixels: samples.to_f32(),
        width: header.shape[0],
        height: header.shape[1],
        pixel_spacing: [header.spacing[0], header.spacing[1]],
        provenance,
    })
}

/// 16-bit grayscale preview, `round(pixel · 65535)`.
pub fn write_png_preview(img: &DrrImage, path: &Path) -> Result<(), ProjectError> {
    let file = fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let png_err = |e: png::EncodingError| FormatError::invalid(path, e.to_string());
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(png_err)?;
    let data: Vec<u8> =
        img.pixels.iter().flat_map(|&p| ((p.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16).to_be_bytes()).collect();
    writer.write_image_data(&data).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}
