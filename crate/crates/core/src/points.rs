//! Point measurements from the layers of an opened score volume.
//!
//! Each region's layer is smoothed, its 8-neighbour local maxima become
//! cluster peaks, clusters grow over cells whose straight segment to the peak
//! stays under the bilinear score surface, and every cluster yields one
//! score-weighted centroid.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::geometry::Position;
use crate::scenario::SurveillanceGrid;
use crate::volume::{Region, ScoreVolume};

/// One 2D layer, row-major along x, 0-based cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_x: usize,
    pub n_y: usize,
    pub values: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        Self {
            n_x,
            n_y,
            values: vec![0.0; n_x * n_y],
        }
    }

    pub fn from_values(n_x: usize, n_y: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_x * n_y, "layer size");
        Self { n_x, n_y, values }
    }

    #[inline]
    pub fn get(&self, c_x: usize, c_y: usize) -> f64 {
        self.values[c_y * self.n_x + c_x]
    }

    #[inline]
    pub fn set(&mut self, c_x: usize, c_y: usize, v: f64) {
        self.values[c_y * self.n_x + c_x] = v;
    }

    /// 8-neighbours of a cell that exist in the layer.
    pub fn neighbors(&self, (x, y): (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (x, y) = (x as i64, y as i64);
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (x + dx, y + dy)))
            .filter(move |&(u, v)| {
                (u, v) != (x, y) && u >= 0 && v >= 0 && (u as usize) < self.n_x && (v as usize) < self.n_y
            })
            .map(|(u, v)| (u as usize, v as usize))
    }
}

/// Box mean over a `(2w+1)²` window; taps outside the layer count as zero.
pub fn smooth_layer(layer: &Layer, w: usize) -> Layer {
    let (n_x, n_y) = (layer.n_x, layer.n_y);
    // separable running sums
    let mut rows = Layer::zeros(n_x, n_y);
    for y in 0..n_y {
        for x in 0..n_x {
            let lo = x.saturating_sub(w);
            let hi = (x + w).min(n_x - 1);
            rows.set(x, y, (lo..=hi).map(|u| layer.get(u, y)).sum());
        }
    }
    let div = ((2 * w + 1) * (2 * w + 1)) as f64;
    let mut out = Layer::zeros(n_x, n_y);
    for y in 0..n_y {
        let lo = y.saturating_sub(w);
        let hi = (y + w).min(n_y - 1);
        for x in 0..n_x {
            let s: f64 = (lo..=hi).map(|v| rows.get(x, v)).sum();
            out.set(x, y, s / div);
        }
    }
    out
}

/// Positive cells at least as large as all of their existing 8-neighbours
/// and strictly larger than those earlier in row-major order. Box smoothing
/// turns sparse scores into flat tops; the tie rule keeps one cell of such a
/// plateau instead of none.
pub fn local_maxima(layer: &Layer) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..layer.n_y {
        for x in 0..layer.n_x {
            let v = layer.get(x, y);
            let peak = v > 0.0
                && layer.neighbors((x, y)).all(|(nx, ny)| {
                    let u = layer.get(nx, ny);
                    v > u || (v == u && (ny, nx) > (y, x))
                });
            if peak {
                out.push((x, y));
            }
        }
    }
    out
}

/// Bilinear interpolation between cell centers; queries beyond the outer
/// centers use the nearest 2×2 patch, clamped.
pub fn interp(layer: &Layer, grid: &SurveillanceGrid, x: f64, y: f64) -> f64 {
    let axis = |p: f64, d: f64, n: usize| -> (usize, usize, f64) {
        let mut u = p / d - 0.5;
        // snap onto a center so cell scores come back exactly
        if (u - u.round()).abs() < 1e-9 {
            u = u.round();
        }
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i0 = (u.floor().max(0.0) as usize).min(n - 2);
        let t = (u - i0 as f64).clamp(0.0, 1.0);
        (i0, i0 + 1, t)
    };
    let (x0, x1, tx) = axis(x, grid.delta_x, layer.n_x);
    let (y0, y1, ty) = axis(y, grid.delta_y, layer.n_y);
    let lerp = |a: f64, b: f64, t: f64| {
        if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            a + (b - a) * t
        }
    };
    let bottom = lerp(layer.get(x0, y0), layer.get(x1, y0), tx);
    let top = lerp(layer.get(x0, y1), layer.get(x1, y1), tx);
    lerp(bottom, top, ty)
}

fn center(grid: &SurveillanceGrid, (x, y): (usize, usize)) -> Position {
    Position::new((x as f64 + 0.5) * grid.delta_x, (y as f64 + 0.5) * grid.delta_y)
}

/// Whether the segment from the peak's surface point to the test cell's
/// surface point stays on or below the interpolated surface at its `n - 1`
/// interior subdivision points.
pub fn segment_test(
    layer: &Layer,
    grid: &SurveillanceGrid,
    peak: (usize, usize),
    test: (usize, usize),
    n: usize,
) -> bool {
    let (p, q) = (center(grid, peak), center(grid, test));
    let (hp, hq) = (layer.get(peak.0, peak.1), layer.get(test.0, test.1));
    // the chord is exactly linear along grid lines; allow for rounding there
    let tol = 1e-12 * hp.abs().max(hq.abs());
    (1..n).all(|h| {
        let t = h as f64 / n as f64;
        let at = p.lerp(&q, t);
        let chord = hp + (hq - hp) * t;
        interp(layer, grid, at.x, at.y) >= chord - tol
    })
}

/// Cells of one layer grouped around a local maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub peak: (usize, usize),
    pub cells: BTreeSet<(usize, usize)>,
}

/// 8-connected closure of positive cells passing the segment test, grown
/// outward from `peak`.
pub fn grow_cluster(layer: &Layer, grid: &SurveillanceGrid, peak: (usize, usize), n: usize) -> Cluster {
    let mut cells = BTreeSet::from([peak]);
    let mut decided = BTreeSet::from([peak]);
    let mut queue = VecDeque::from([peak]);
    while let Some(c) = queue.pop_front() {
        for nb in layer.neighbors(c) {
            if !decided.insert(nb) {
                continue;
            }
            // a verdict depends only on (peak, cell), so it never changes
            if layer.get(nb.0, nb.1) > 0.0 && segment_test(layer, grid, peak, nb, n) {
                cells.insert(nb);
                queue.push_back(nb);
            }
        }
    }
    Cluster { peak, cells }
}

/// Point measurement `(x, y, scan, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measurement {
    pub x: f64,
    pub y: f64,
    pub scan: i64,
    pub score: f64,
}

impl Measurement {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

/// Score-weighted centroid with score `mean · variance · |U|`; `None` when
/// the score is zero (a flat cluster) or falls below `score_floor`.
pub fn extract_measurement(
    cluster: &Cluster,
    layer: &Layer,
    grid: &SurveillanceGrid,
    scan: i64,
    score_floor: f64,
) -> Option<Measurement> {
    let n = cluster.cells.len() as f64;
    let scores: Vec<f64> = cluster.cells.iter().map(|&(x, y)| layer.get(x, y)).collect();
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (&c, &s) in cluster.cells.iter().zip(&scores) {
        let p = center(grid, c);
        sx += s * p.x;
        sy += s * p.y;
    }
    let mean = total / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let score = mean * var * n;
    (score > 0.0 && score >= score_floor).then_some(Measurement {
        x: sx / total,
        y: sy / total,
        scan,
        score,
    })
}

/// Measurements of one layer.
pub fn layer_measurements(
    layer: &Layer,
    grid: &SurveillanceGrid,
    scan: i64,
    smooth_w: usize,
    segment_n: usize,
    score_floor: f64,
) -> Vec<Measurement> {
    let smoothed = smooth_layer(layer, smooth_w);
    let mut taken = BTreeSet::new();
    let mut out = Vec::new();
    for peak in local_maxima(&smoothed) {
        // a second corner of an irregular plateau lands in the first cluster
        if taken.contains(&peak) {
            continue;
        }
        let cluster = grow_cluster(&smoothed, grid, peak, segment_n);
        taken.extend(cluster.cells.iter().copied());
        out.extend(extract_measurement(&cluster, &smoothed, grid, scan, score_floor));
    }
    out
}

/// Measurement tagged with the region and window layer it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPoint {
    pub region: usize,
    pub layer: usize,
    pub measurement: Measurement,
}

/// Measurements of every region and layer of a window; each region's layer
/// is processed on its own. `score_floors[k]` applies to layer `k`.
pub fn region_points(
    regions: &[Region],
    volume: &ScoreVolume,
    grid: &SurveillanceGrid,
    smooth_w: usize,
    segment_n: usize,
    score_floors: &[f64],
) -> Vec<RegionPoint> {
    let mut out = Vec::new();
    for region in regions {
        for k in 0..volume.layers {
            let mut layer = Layer::zeros(volume.n_x, volume.n_y);
            let mut any = false;
            for &(x, y, l) in &region.cells {
                if l as usize == k {
                    let v = volume.get((x, y, l));
                    any |= v != 0.0;
                    layer.set(x as usize, y as usize, v);
                }
            }
            if !any {
                continue;
            }
            let floor = score_floors.get(k).copied().unwrap_or(0.0);
            let found = layer_measurements(&layer, grid, volume.scan_of(k), smooth_w, segment_n, floor);
            out.extend(found.into_iter().map(|measurement| RegionPoint {
                region: region.id,
                layer: k,
                measurement,
            }));
        }
    }
    out
}

/// Per-layer measurement sets `Z^k` of a window, pooled over regions.
pub fn generate_points(
    regions: &[Region],
    volume: &ScoreVolume,
    grid: &SurveillanceGrid,
    smooth_w: usize,
    segment_n: usize,
    score_floors: &[f64],
) -> Vec<Vec<Measurement>> {
    let mut out = vec![Vec::new(); volume.layers];
    for rp in region_points(regions, volume, grid, smooth_w, segment_n, score_floors) {
        out[rp.layer].push(rp.measurement);
    }
    out
}
