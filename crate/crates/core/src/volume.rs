//! Sliding 3D score volume, region growing and morphological opening.
//!
//! Voxels are addressed 0-based as `(c_x, c_y, layer)`; layer `k` of a window
//! starting at `base_scan` holds the map of scan `base_scan + k`.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::scenario::SeedSpacing;
use crate::voting::ScoreMap;

/// `(c_x, c_y, layer)`, signed so morphology can step outside the volume.
pub type Voxel = (i32, i32, i32);

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    pub n_x: usize,
    pub n_y: usize,
    pub layers: usize,
    pub base_scan: i64,
    pub values: Vec<f64>,
}

impl ScoreVolume {
    pub fn zeros(n_x: usize, n_y: usize, layers: usize, base_scan: i64) -> Self {
        Self {
            n_x,
            n_y,
            layers,
            base_scan,
            values: vec![0.0; n_x * n_y * layers],
        }
    }

    pub fn contains(&self, v: Voxel) -> bool {
        v.0 >= 0
            && v.1 >= 0
            && v.2 >= 0
            && (v.0 as usize) < self.n_x
            && (v.1 as usize) < self.n_y
            && (v.2 as usize) < self.layers
    }

    #[inline]
    fn index(&self, v: Voxel) -> usize {
        (v.2 as usize * self.n_y + v.1 as usize) * self.n_x + v.0 as usize
    }

    /// Score at `v`; zero outside the volume.
    pub fn get(&self, v: Voxel) -> f64 {
        if self.contains(v) {
            self.values[self.index(v)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, v: Voxel, value: f64) {
        let i = self.index(v);
        self.values[i] = value;
    }

    /// Layer `k` as a flat row-major slice.
    pub fn layer(&self, k: usize) -> &[f64] {
        let n = self.n_x * self.n_y;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn scan_of(&self, k: usize) -> i64 {
        self.base_scan + k as i64
    }

    /// Nonzero voxels in index order.
    pub fn support(&self) -> BTreeSet<Voxel> {
        let mut out = BTreeSet::new();
        for k in 0..self.layers {
            for y in 0..self.n_y {
                for x in 0..self.n_x {
                    let v = (x as i32, y as i32, k as i32);
                    if self.get(v) != 0.0 {
                        out.insert(v);
                    }
                }
            }
        }
        out
    }

    /// Copy that keeps only the voxels in `keep`.
    pub fn restricted_to<'a>(&self, keep: impl IntoIterator<Item = &'a Voxel>) -> Self {
        let mut out = Self::zeros(self.n_x, self.n_y, self.layers, self.base_scan);
        for &v in keep {
            if self.contains(v) {
                out.set(v, self.get(v));
            }
        }
        out
    }
}

/// Stacks consecutive score maps into one volume, oldest at layer 0.
pub fn stack_window(maps: &[&ScoreMap], window: usize) -> Result<ScoreVolume> {
    if maps.len() != window {
        return Err(Error::WindowSize {
            expected: window,
            actual: maps.len(),
        });
    }
    let first = maps[0];
    let mut vol = ScoreVolume::zeros(first.n_x, first.n_y, window, first.scan);
    let n = first.n_x * first.n_y;
    for (k, m) in maps.iter().enumerate() {
        if m.dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                actual: m.dims(),
            });
        }
        if m.scan != first.scan + k as i64 {
            return Err(Error::Validation(format!(
                "window layer {k} holds scan {}, expected {}",
                m.scan,
                first.scan + k as i64
            )));
        }
        vol.values[k * n..(k + 1) * n].copy_from_slice(&m.values);
    }
    Ok(vol)
}

/// Evenly spaced seeds `(a d_x, b d_y, c d_t)` in 1-based terms, returned
/// 0-based in layer-major order.
pub fn seed_cells(volume: &ScoreVolume, spacing: SeedSpacing) -> Vec<Voxel> {
    let mut seeds = Vec::new();
    if spacing.d_x == 0 || spacing.d_y == 0 || spacing.d_t == 0 {
        return seeds;
    }
    for c in 1..=volume.layers / spacing.d_t {
        for b in 1..=volume.n_y / spacing.d_y {
            for a in 1..=volume.n_x / spacing.d_x {
                seeds.push((
                    (a * spacing.d_x - 1) as i32,
                    (b * spacing.d_y - 1) as i32,
                    (c * spacing.d_t - 1) as i32,
                ));
            }
        }
    }
    seeds
}

/// Accepted connected voxel set of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub cells: BTreeSet<Voxel>,
    pub total_score: f64,
}

const NEIGHBORS_26: [Voxel; 26] = {
    let mut out = [(0, 0, 0); 26];
    let mut i = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[i] = (dx, dy, dz);
                    i += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

fn add(a: Voxel, b: Voxel) -> Voxel {
    (a.0 + b.0, a.1 + b.1, a.2 + b.2)
}

/// 26-connected component of nonzero voxels containing `start`.
fn flood(volume: &ScoreVolume, start: Voxel) -> BTreeSet<Voxel> {
    let mut set = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for d in NEIGHBORS_26 {
            let u = add(v, d);
            if volume.get(u) != 0.0 && set.insert(u) {
                queue.push_back(u);
            }
        }
    }
    set
}

/// Grows a region from every still-active nonzero seed and keeps those with
/// total score `>= gamma_score` and at least `gamma_num` voxels.
///
/// Returns the accepted regions, ordered and numbered by their smallest voxel
/// so the result does not depend on seed order, and a copy of the volume
/// zeroed outside them.
pub fn region_grow(
    volume: &ScoreVolume,
    seeds: &[Voxel],
    gamma_score: f64,
    gamma_num: usize,
) -> (Vec<Region>, ScoreVolume) {
    let mut work = volume.clone();
    let mut visited = BTreeSet::new();
    let mut regions = Vec::new();
    for &seed in seeds {
        if visited.contains(&seed) || work.get(seed) == 0.0 {
            continue;
        }
        let cells = flood(&work, seed);
        visited.extend(cells.iter().copied());
        let total_score: f64 = cells.iter().map(|&v| work.get(v)).sum();
        if cells.len() >= gamma_num && total_score >= gamma_score {
            regions.push(Region {
                id: 0,
                cells,
                total_score,
            });
        } else {
            for &v in &cells {
                work.set(v, 0.0);
            }
        }
    }
    regions.sort_by(|a, b| a.cells.first().cmp(&b.cells.first()));
    for (i, r) in regions.iter_mut().enumerate() {
        r.id = i;
    }
    let cleaned = volume.restricted_to(regions.iter().flat_map(|r| r.cells.iter()));
    (regions, cleaned)
}

/// Offsets of a structuring element; always contains the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    offsets: Vec<Voxel>,
}

impl StructuringElement {
    pub fn new(offsets: Vec<Voxel>) -> Result<Self> {
        if !offsets.contains(&(0, 0, 0)) {
            return Err(Error::Validation("structuring element must contain its origin".into()));
        }
        Ok(Self { offsets })
    }

    /// Origin plus its six face neighbours.
    pub fn cross7() -> Self {
        Self {
            offsets: vec![
                (0, 0, 0),
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ],
        }
    }

    pub fn offsets(&self) -> &[Voxel] {
        &self.offsets
    }

    /// The element translated to `origin`.
    pub fn at(&self, origin: Voxel) -> impl Iterator<Item = Voxel> + '_ {
        self.offsets.iter().map(move |&d| add(origin, d))
    }
}

/// `{c : B_c ⊆ region}`.
pub fn erode(region: &BTreeSet<Voxel>, element: &StructuringElement) -> BTreeSet<Voxel> {
    // the origin is in B, so every surviving c is itself in the region
    region
        .iter()
        .copied()
        .filter(|&c| element.at(c).all(|v| region.contains(&v)))
        .collect()
}

/// `{c : B_c ∩ region ≠ ∅}`.
pub fn dilate(region: &BTreeSet<Voxel>, element: &StructuringElement) -> BTreeSet<Voxel> {
    let mut out = BTreeSet::new();
    for &r in region {
        for &(dx, dy, dk) in element.offsets() {
            out.insert((r.0 - dx, r.1 - dy, r.2 - dk));
        }
    }
    out
}

/// Erosion followed by dilation.
pub fn open(region: &BTreeSet<Voxel>, element: &StructuringElement) -> BTreeSet<Voxel> {
    dilate(&erode(region, element), element)
}

/// Opens every region, drops the ones that vanish and zeroes removed voxels
/// in the volume.
pub fn open_regions(
    regions: &[Region],
    volume: &ScoreVolume,
    element: &StructuringElement,
) -> (Vec<Region>, ScoreVolume) {
    let mut opened = Vec::new();
    for r in regions {
        let cells = open(&r.cells, element);
        if cells.is_empty() {
            continue;
        }
        let total_score = cells.iter().map(|&v| volume.get(v)).sum();
        opened.push(Region {
            id: r.id,
            cells,
            total_score,
        });
    }
    let vol = volume.restricted_to(opened.iter().flat_map(|r| r.cells.iter()));
    (opened, vol)
}
