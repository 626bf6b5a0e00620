//! Agatston calcium scoring.
//!
//! Lesions are 8-connected components, within one axial slice and one artery
//! label, of masked voxels at or above 130 HU. Each lesion scores
//! `area_mm2 × w(max HU)` with `w` = 1, 2, 3, 4 for the bands starting at
//! 130, 200, 300 and 400 HU. Lesions under 1 mm² are dropped.

use super::{CalciumMask, IngestError, Volume};

pub const CALCIUM_THRESHOLD_HU: f32 = 130.0;
pub const MIN_LESION_AREA_MM2: f64 = 1.0;
/// Scores strictly above this are positive.
pub const POSITIVE_THRESHOLD: f64 = 100.0;

// Tolerates rounding in count × dx × dy at exactly 1 mm².
const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    pub fn from_score(agatston: f64) -> Self {
        if agatston > POSITIVE_THRESHOLD {
            Self::Positive
        } else {
            Self::Negative
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Self::Negative => 0,
            Self::Positive => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Negative),
            1 => Some(Self::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacLabel {
    pub agatston: f64,
    pub binary: BinaryLabel,
}

impl CacLabel {
    pub fn from_score(agatston: f64) -> Self {
        Self { agatston, binary: BinaryLabel::from_score(agatston) }
    }
}

/// Density weight for a lesion's peak attenuation; 0 below the calcium threshold.
pub fn density_weight(max_hu: f32) -> u8 {
    match max_hu {
        h if h >= 400.0 => 4,
        h if h >= 300.0 => 3,
        h if h >= 200.0 => 2,
        h if h >= CALCIUM_THRESHOLD_HU => 1,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lesion {
    pub label: u16,
    pub slice: usize,
    pub voxel_count: usize,
    pub area_mm2: f64,
    pub max_hu: f32,
    pub weight: u8,
}

impl Lesion {
    pub fn score(&self) -> f64 {
        self.area_mm2 * self.weight as f64
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let next = parent[x as usize];
        parent[x as usize] = parent[next as usize];
        x = next;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// All scoring lesions (area ≥ 1 mm²), ordered by slice then first raster position.
pub fn find_lesions(v: &Volume, m: &CalciumMask) -> Result<Vec<Lesion>, IngestError> {
    m.check_registered(v)?;
    let [nx, ny, nz] = v.shape();
    let [dx, dy, _] = v.spacing();
    let pixel_area = dx * dy;
    let plane = nx * ny;
    let mut lesions = Vec::new();

    // Two-pass union–find over each slice; a pixel's key is its label when it
    // is calcified, otherwise 0.
    let mut key = vec![0u16; plane];
    let mut parent: Vec<u32> = vec![0; plane];
    for k in 0..nz {
        let base = k * plane;
        for (p, slot) in key.iter_mut().enumerate() {
            let label = m.labels()[base + p];
            *slot = if label != 0 && v.voxels()[base + p] >= CALCIUM_THRESHOLD_HU { label } else { 0 };
        }
        for (p, slot) in parent.iter_mut().enumerate() {
            *slot = p as u32;
        }
        for j in 0..ny {
            for i in 0..nx {
                let p = j * nx + i;
                let label = key[p];
                if label == 0 {
                    continue;
                }
                let mut join = |q: usize| {
                    if key[q] == label {
                        union(&mut parent, p as u32, q as u32);
                    }
                };
                if i > 0 {
                    join(p - 1);
                }
                if j > 0 {
                    join(p - nx);
                    if i > 0 {
                        join(p - nx - 1);
                    }
                    if i + 1 < nx {
                        join(p - nx + 1);
                    }
                }
            }
        }

        // Roots are the smallest member index, so raster order visits each
        // component's root first.
        let mut slot_of_root = vec![usize::MAX; plane];
        let first = lesions.len();
        for p in 0..plane {
            if key[p] == 0 {
                continue;
            }
            let root = find(&mut parent, p as u32) as usize;
            let hu = v.voxels()[base + p];
            if slot_of_root[root] == usize::MAX {
                slot_of_root[root] = lesions.len();
                lesions.push(Lesion { label: key[p], slice: k, voxel_count: 0, area_mm2: 0.0, max_hu: hu, weight: 0 });
            }
            let lesion = &mut lesions[slot_of_root[root]];
            lesion.voxel_count += 1;
            lesion.max_hu = lesion.max_hu.max(hu);
        }
        for lesion in &mut lesions[first..] {
            lesion.area_mm2 = lesion.voxel_count as f64 * pixel_area;
            lesion.weight = density_weight(lesion.max_hu);
        }
    }

    lesions.retain(|l| l.area_mm2 + AREA_EPS >= MIN_LESION_AREA_MM2);
    Ok(lesions)
}

/// Total Agatston score summed over arteries, slices and lesions, with its binary label.
pub fn agatston_score(v: &Volume, m: &CalciumMask) -> Result<CacLabel, IngestError> {
    let total = find_lesions(v, m)?.iter().map(Lesion::score).fold(0.0, |a, b| a + b);
    Ok(CacLabel::from_score(total))
}
