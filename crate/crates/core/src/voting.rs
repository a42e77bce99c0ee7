//! Circle/ellipse voting, multiplicative fusion and adaptive thresholding.
//!
//! Every range bin `j` of sensor `n` defines a curve: a circle around the
//! sensor (monostatic) or an ellipse with foci at the transmitter and the
//! sensor (multistatic). A curve crosses a closed grid cell exactly when its
//! level value (radius, or focal distance sum) lies between the minimum and
//! maximum of that quantity over the cell, so the set of bins voting for a
//! cell is a contiguous index range that can be precomputed per grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::scenario::{NetworkMode, PipelineParams, SensorLayout, SurveillanceGrid};
use crate::synth::RangeProfile;
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    PerSensor,
    FusedRaw,
    FusedThresholded,
    ClutterSuppressed,
    ClutterDensity,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::PerSensor => "per-sensor",
            MapKind::FusedRaw => "fused-raw",
            MapKind::FusedThresholded => "fused-thresholded",
            MapKind::ClutterSuppressed => "clutter-suppressed",
            MapKind::ClutterDensity => "clutter-density",
        }
    }
}

/// `n_x × n_y` non-negative cell scores, stored row by row along x.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub n_x: usize,
    pub n_y: usize,
    pub values: Vec<f64>,
    pub scan: i64,
    pub kind: MapKind,
}

impl ScoreMap {
    pub fn zeros(n_x: usize, n_y: usize, scan: i64, kind: MapKind) -> Self {
        Self {
            n_x,
            n_y,
            values: vec![0.0; n_x * n_y],
            scan,
            kind,
        }
    }

    pub fn for_grid(grid: &SurveillanceGrid, scan: i64, kind: MapKind) -> Self {
        Self::zeros(grid.n_x, grid.n_y, scan, kind)
    }

    #[inline]
    pub fn index(&self, c_x: usize, c_y: usize) -> usize {
        c_y * self.n_x + c_x
    }

    /// Score of the 0-based cell `(c_x, c_y)`.
    #[inline]
    pub fn get(&self, c_x: usize, c_y: usize) -> f64 {
        self.values[self.index(c_x, c_y)]
    }

    #[inline]
    pub fn set(&mut self, c_x: usize, c_y: usize, v: f64) {
        let i = self.index(c_x, c_y);
        self.values[i] = v;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_x, self.n_y)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn check_dims(&self, other: &ScoreMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

/// `V(j) = m(j)^α / mean_l m(l)^α`.
pub fn votes_from_profile(m: &RangeProfile, alpha: f64) -> Result<Vec<f64>> {
    let powered: Vec<f64> = m.samples.iter().map(|&s| s.powf(alpha)).collect();
    let mean = powered.iter().sum::<f64>() / powered.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::ZeroProfile);
    }
    Ok(powered.into_iter().map(|p| p / mean).collect())
}

/// Level value of the curve for a delay: circle radius (monostatic) or
/// focal distance sum (multistatic).
fn curve_level(layout: &SensorLayout, sensor: usize, delay: f64) -> f64 {
    match layout.mode {
        NetworkMode::Monostatic => SPEED_OF_LIGHT * delay / 2.0,
        NetworkMode::Multistatic => layout.baseline_length(sensor) + SPEED_OF_LIGHT * delay,
    }
}

/// Range of the level quantity over the closed 0-based cell.
fn cell_level_range(
    layout: &SensorLayout,
    sensor: usize,
    grid: &SurveillanceGrid,
    c_x: usize,
    c_y: usize,
) -> (f64, f64) {
    let rect = grid.cell_rect0(c_x, c_y);
    let rx = &layout.sensors[sensor];
    match (layout.mode, layout.transmitter) {
        (NetworkMode::Multistatic, Some(tx)) => rect.focal_sum_range(&tx, rx),
        _ => rect.distance_range(rx),
    }
}

/// 1-based cells whose closed square the curve of `delay` crosses.
pub fn rasterize_curve(
    layout: &SensorLayout,
    sensor: usize,
    delay: f64,
    grid: &SurveillanceGrid,
) -> Vec<(usize, usize)> {
    let level = curve_level(layout, sensor, delay);
    // the curve lies inside a disc around the sensor (circle) or around the
    // foci midpoint (ellipse, radius = semi-major axis)
    let (center, radius) = match (layout.mode, layout.transmitter) {
        (NetworkMode::Multistatic, Some(tx)) => {
            let rx = layout.sensors[sensor];
            (tx.lerp(&rx, 0.5), level / 2.0)
        }
        _ => (layout.sensors[sensor], level),
    };
    let span = |c: f64, d: f64, n: usize| {
        let lo = ((c - radius) / d).floor().max(0.0) as usize;
        let hi = (((c + radius) / d).floor() as i64).clamp(-1, n as i64 - 1);
        (lo, hi)
    };
    let (x0, x1) = span(center.x, grid.delta_x, grid.n_x);
    let (y0, y1) = span(center.y, grid.delta_y, grid.n_y);
    let mut cells = Vec::new();
    if x1 < 0 || y1 < 0 {
        return cells;
    }
    for c_y in y0..=y1 as usize {
        for c_x in x0..=x1 as usize {
            let (lo, hi) = cell_level_range(layout, sensor, grid, c_x, c_y);
            if lo <= level && level <= hi {
                cells.push((c_x + 1, c_y + 1));
            }
        }
    }
    cells
}

/// Per-cell voting bin ranges for every sensor of a layout on one grid.
#[derive(Debug, Clone)]
pub struct VotingGeometry {
    grid: SurveillanceGrid,
    n_c: usize,
    /// `[sensor][cell] -> (first bin, last bin)`, inclusive; `first > last`
    /// means no curve crosses the cell.
    ranges: Vec<Vec<(u32, u32)>>,
}

impl VotingGeometry {
    pub fn new(layout: &SensorLayout, grid: &SurveillanceGrid, n_c: usize, sample_period: f64) -> Self {
        let ranges = (0..layout.len())
            .into_par_iter()
            .map(|n| {
                let level = |j: i64| curve_level(layout, n, j as f64 * sample_period);
                let step = level(1) - level(0);
                let base = level(0);
                let mut out = Vec::with_capacity(grid.cell_count());
                for c_y in 0..grid.n_y {
                    for c_x in 0..grid.n_x {
                        let (lo, hi) = cell_level_range(layout, n, grid, c_x, c_y);
                        // first bin with level >= lo, last bin with level <= hi
                        let mut first = ((lo - base) / step).ceil().max(0.0) as i64;
                        while first > 0 && level(first - 1) >= lo {
                            first -= 1;
                        }
                        while level(first) < lo {
                            first += 1;
                        }
                        let mut last = ((hi - base) / step).floor() as i64;
                        while level(last + 1) <= hi {
                            last += 1;
                        }
                        while last >= 0 && level(last) > hi {
                            last -= 1;
                        }
                        let last = last.min(n_c as i64 - 1);
                        if last < 0 || first > last {
                            out.push((1, 0));
                        } else {
                            out.push((first as u32, last as u32));
                        }
                    }
                }
                out
            })
            .collect();
        Self {
            grid: *grid,
            n_c,
            ranges,
        }
    }

    pub fn from_params(layout: &SensorLayout, grid: &SurveillanceGrid, params: &PipelineParams) -> Self {
        Self::new(layout, grid, params.n_c, params.sample_period)
    }

    pub fn grid(&self) -> &SurveillanceGrid {
        &self.grid
    }

    pub fn sensors(&self) -> usize {
        self.ranges.len()
    }

    /// Inclusive bin range crossing 0-based cell `(c_x, c_y)` for `sensor`.
    pub fn bins(&self, sensor: usize, c_x: usize, c_y: usize) -> Option<(usize, usize)> {
        let (a, b) = self.ranges[sensor][c_y * self.grid.n_x + c_x];
        (a <= b).then_some((a as usize, b as usize))
    }

    /// `S_n(cell) = max_j V(j) I_n(j, cell)`; all zero for an all-zero profile.
    pub fn sensor_score_map(&self, m: &RangeProfile, alpha: f64) -> Result<ScoreMap> {
        if m.len() != self.n_c {
            return Err(Error::LengthMismatch {
                expected: self.n_c,
                actual: m.len(),
            });
        }
        let mut map = ScoreMap::for_grid(&self.grid, m.scan, MapKind::PerSensor);
        let votes = match votes_from_profile(m, alpha) {
            Ok(v) => v,
            Err(Error::ZeroProfile) => return Ok(map),
            Err(e) => return Err(e),
        };
        for (cell, &(a, b)) in self.ranges[m.sensor].iter().enumerate() {
            if a <= b {
                map.values[cell] = votes[a as usize..=b as usize].iter().copied().fold(0.0, f64::max);
            }
        }
        Ok(map)
    }
}

/// Per-sensor score map from scratch (builds the geometry for one sensor).
pub fn sensor_score_map(
    m: &RangeProfile,
    layout: &SensorLayout,
    sensor: usize,
    grid: &SurveillanceGrid,
    alpha: f64,
    sample_period: f64,
) -> Result<ScoreMap> {
    let single = SensorLayout {
        mode: layout.mode,
        sensors: vec![layout.sensors[sensor]],
        transmitter: layout.transmitter,
    };
    let geom = VotingGeometry::new(&single, grid, m.len(), sample_period);
    let mut local = m.clone();
    local.sensor = 0;
    let mut map = geom.sensor_score_map(&local, alpha)?;
    map.scan = m.scan;
    Ok(map)
}

/// Thresholded fused map with its adaptive threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    pub map: ScoreMap,
    pub eta: f64,
}

/// Product of the per-sensor maps.
pub fn fuse(maps: &[ScoreMap]) -> Result<ScoreMap> {
    let first = maps.first().ok_or(Error::EmptyHistory)?;
    let mut out = first.clone();
    out.kind = MapKind::FusedRaw;
    for m in &maps[1..] {
        first.check_dims(m)?;
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o *= v;
        }
    }
    Ok(out)
}

/// Zeroes every cell not strictly above `β · mean(map)`.
pub fn threshold(map: &ScoreMap, beta: f64, kind: MapKind) -> Thresholded {
    let eta = beta * map.mean();
    let mut out = map.clone();
    out.kind = kind;
    for v in out.values.iter_mut() {
        if !(*v > eta) {
            *v = 0.0;
        }
    }
    Thresholded { map: out, eta }
}

pub fn fuse_and_threshold(maps: &[ScoreMap], beta: f64) -> Result<Thresholded> {
    Ok(threshold(&fuse(maps)?, beta, MapKind::FusedThresholded))
}

/// Cell-wise mean of past thresholded maps.
pub fn clutter_density_map(history: &[ScoreMap]) -> Result<ScoreMap> {
    let first = history.first().ok_or(Error::EmptyHistory)?;
    let mut out = ScoreMap::zeros(first.n_x, first.n_y, first.scan, MapKind::ClutterDensity);
    for m in history {
        first.check_dims(m)?;
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o += v;
        }
    }
    let inv = 1.0 / history.len() as f64;
    out.values.iter_mut().for_each(|v| *v *= inv);
    out.scan = history.last().map(|m| m.scan).unwrap_or(first.scan);
    Ok(out)
}

/// `S / max(C, floor)` cell-wise.
pub fn suppress_clutter(current: &ScoreMap, density: &ScoreMap, floor: f64) -> Result<ScoreMap> {
    current.check_dims(density)?;
    let mut out = current.clone();
    out.kind = MapKind::ClutterSuppressed;
    for (o, c) in out.values.iter_mut().zip(&density.values) {
        *o /= c.max(floor);
    }
    Ok(out)
}

/// Center of the 0-based cell `(c_x, c_y)`.
pub fn cell_center0(grid: &SurveillanceGrid, c_x: usize, c_y: usize) -> Position {
    grid.center0(c_x, c_y)
}
