//! Tracklets, their association into trajectories, outlier removal and
//! smoothing, plus the centroid-and-nearest-neighbour baseline.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::lsq::fit_affine;
use crate::points::Measurement;
use crate::scenario::SurveillanceGrid;
use crate::volume::Region;

/// Trajectory point `(x, y, scan; p, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
    pub scan: i64,
    pub p: f64,
    pub d: f64,
}

impl TrackPoint {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

/// Distance between measurement `k` and the affine fit of the others,
/// floored at `floor`.
pub fn fit_error(points: &[Measurement], k: usize, floor: f64) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} points leave fewer than two for the fit",
            points.len()
        )));
    }
    let others = points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, m)| (m.scan as f64, m.position()));
    let fit = fit_affine(others)?;
    Ok(fit.at(points[k].scan as f64).distance(&points[k].position()).max(floor))
}

/// `∏ p / ∏ d` together with the per-point fit errors.
pub fn tracklet_score(points: &[Measurement], floor: f64) -> Result<(f64, Vec<f64>)> {
    let d = (0..points.len())
        .map(|k| fit_error(points, k, floor))
        .collect::<Result<Vec<_>>>()?;
    let num: f64 = points.iter().map(|m| m.score).product();
    let den: f64 = d.iter().product();
    Ok((num / den, d))
}

/// `W` points, one per consecutive scan of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub points: Vec<Measurement>,
    pub fit_errors: Vec<f64>,
    pub score: f64,
    pub window_start: i64,
}

/// Knobs of the tracklet enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackletLimits {
    /// Kept tracklets per window.
    pub cap: usize,
    /// Per-point fraction of the window's best score: a tracklet of `W`
    /// points is dropped below `relative_threshold^W` times the best.
    pub relative_threshold: f64,
    pub fit_error_floor: f64,
    /// Largest number of combinations scored before thinning each scan.
    pub max_combinations: usize,
}

impl TrackletLimits {
    pub fn from_params(p: &crate::scenario::PipelineParams) -> Self {
        Self {
            cap: p.max_tracklets_per_window,
            relative_threshold: p.tracklet_relative_threshold,
            fit_error_floor: p.fit_error_floor,
            max_combinations: p.max_tracklet_combinations,
        }
    }
}

/// Descending score, ties by the earlier combination.
fn rank(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// Keeps positive scores within the relative threshold of the best, then the
/// first `cap` by rank. Scores are products over the window, so the
/// threshold is raised to the window length to act per point.
pub fn select_tracklets(mut scored: Vec<(f64, Vec<usize>)>, limits: &TrackletLimits) -> Vec<(f64, Vec<usize>)> {
    scored.sort_by(rank);
    let Some((best, first)) = scored.first().map(|s| (s.0, s.1.len())) else {
        return scored;
    };
    let floor = best * limits.relative_threshold.powi(first as i32);
    scored
        .into_iter()
        .filter(|(s, _)| *s > 0.0 && *s >= floor)
        .take(limits.cap)
        .collect()
}

/// Scores every one-point-per-scan combination of the window and keeps the
/// best. A scan without points yields no tracklet.
pub fn enumerate_tracklets(window: &[Vec<Measurement>], limits: &TrackletLimits) -> Result<Vec<Tracklet>> {
    if window.iter().any(Vec::is_empty) || window.len() < 3 {
        return Ok(Vec::new());
    }
    // over budget: keep only the best `m` points per scan with m^W <= budget
    let total = window.iter().map(Vec::len).fold(1usize, |a, n| a.saturating_mul(n));
    let candidates: Vec<Vec<usize>> = if total > limits.max_combinations {
        let m = ((limits.max_combinations as f64).powf(1.0 / window.len() as f64).floor() as usize).max(1);
        window
            .iter()
            .map(|scan| {
                let mut idx: Vec<usize> = (0..scan.len()).collect();
                idx.sort_by(|&a, &b| scan[b].score.total_cmp(&scan[a].score).then(a.cmp(&b)));
                idx.truncate(m);
                idx.sort_unstable();
                idx
            })
            .collect()
    } else {
        window.iter().map(|scan| (0..scan.len()).collect()).collect()
    };

    let mut scored = Vec::new();
    let mut odo = vec![0usize; window.len()];
    loop {
        let combo: Vec<usize> = odo.iter().zip(&candidates).map(|(&i, c)| c[i]).collect();
        let pts: Vec<Measurement> = combo.iter().zip(window).map(|(&i, s)| s[i]).collect();
        scored.push((tracklet_score(&pts, limits.fit_error_floor)?.0, combo));
        // advance the odometer, last scan fastest
        let mut pos = window.len();
        loop {
            if pos == 0 {
                return finish(window, select_tracklets(scored, limits), limits);
            }
            pos -= 1;
            odo[pos] += 1;
            if odo[pos] < candidates[pos].len() {
                break;
            }
            odo[pos] = 0;
        }
    }
}

fn finish(window: &[Vec<Measurement>], kept: Vec<(f64, Vec<usize>)>, limits: &TrackletLimits) -> Result<Vec<Tracklet>> {
    kept.into_iter()
        .map(|(score, combo)| {
            let points: Vec<Measurement> = combo.iter().zip(window).map(|(&i, s)| s[i]).collect();
            let (_, fit_errors) = tracklet_score(&points, limits.fit_error_floor)?;
            Ok(Tracklet {
                window_start: points[0].scan,
                points,
                fit_errors,
                score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Active,
    Terminated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    /// Point per scan with the score of the tracklet that supplied it.
    points: BTreeMap<i64, (TrackPoint, f64)>,
    pub status: TrackStatus,
    pub first_window: usize,
    pub last_window: usize,
    /// Windows that extended this trajectory.
    pub windows: usize,
}

impl Trajectory {
    pub fn points(&self) -> Vec<TrackPoint> {
        self.points.values().map(|(p, _)| *p).collect()
    }

    pub fn last(&self) -> Option<&TrackPoint> {
        self.points.values().next_back().map(|(p, _)| p)
    }

    pub fn at(&self, scan: i64) -> Option<&TrackPoint> {
        self.points.get(&scan).map(|(p, _)| p)
    }

    fn absorb(&mut self, tl: &Tracklet) {
        for (m, &d) in tl.points.iter().zip(&tl.fit_errors) {
            let tp = TrackPoint {
                x: m.x,
                y: m.y,
                scan: m.scan,
                p: m.score,
                d,
            };
            match self.points.get(&m.scan) {
                Some((_, s)) if *s >= tl.score => {}
                _ => {
                    self.points.insert(m.scan, (tp, tl.score));
                }
            }
        }
    }
}

/// Association settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    /// Two windows' points closer than this at the same scan are the same point.
    pub tolerance: f64,
    /// Fallback link distance between a trajectory's last point and a
    /// tracklet's first new point.
    pub bridge_distance: f64,
}

/// Greedy shared-point association of tracklets across sliding windows.
#[derive(Debug, Clone, Default)]
pub struct Associator {
    trajectories: Vec<Trajectory>,
}

impl Associator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Links window `q`'s tracklets, strongest first. Each measurement is
    /// claimed by at most one tracklet and each trajectory is extended at
    /// most once per window. Trajectories left unextended for two windows
    /// in a row are terminated.
    pub fn push_window(&mut self, q: usize, tracklets: &[Tracklet], params: &AssociationParams) {
        let mut order: Vec<usize> = (0..tracklets.len()).collect();
        order.sort_by(|&a, &b| tracklets[b].score.total_cmp(&tracklets[a].score).then(a.cmp(&b)));
        let key = |m: &Measurement| (m.scan, m.x.to_bits(), m.y.to_bits());
        let mut claimed = BTreeSet::new();
        let mut extended = BTreeSet::new();
        for i in order {
            let tl = &tracklets[i];
            if tl.points.iter().any(|m| claimed.contains(&key(m))) {
                continue;
            }
            claimed.extend(tl.points.iter().map(key));
            let target = self.pick(q, tl, &extended, params);
            let id = match target {
                Some(idx) => {
                    let t = &mut self.trajectories[idx];
                    t.absorb(tl);
                    t.last_window = q;
                    t.windows += 1;
                    t.id
                }
                None => {
                    let id = self.trajectories.len();
                    let mut t = Trajectory {
                        id,
                        points: BTreeMap::new(),
                        status: TrackStatus::Active,
                        first_window: q,
                        last_window: q,
                        windows: 1,
                    };
                    t.absorb(tl);
                    self.trajectories.push(t);
                    id
                }
            };
            extended.insert(id);
        }
        for t in &mut self.trajectories {
            if t.status == TrackStatus::Active && q >= t.last_window + 2 {
                t.status = TrackStatus::Terminated;
            }
        }
    }

    fn pick(&self, q: usize, tl: &Tracklet, extended: &BTreeSet<usize>, params: &AssociationParams) -> Option<usize> {
        let open = self
            .trajectories
            .iter()
            .enumerate()
            .filter(|(_, t)| t.status == TrackStatus::Active && !extended.contains(&t.id));
        // (shared points, -summed distance, -id) ranks the shared-point links
        let mut best: Option<(usize, f64, usize)> = None;
        let mut bridge: Option<(f64, usize)> = None;
        for (idx, t) in open {
            let mut shared = 0;
            let mut dist = 0.0;
            for m in &tl.points {
                if let Some(p) = t.at(m.scan) {
                    let d = p.position().distance(&m.position());
                    if d <= params.tolerance {
                        shared += 1;
                        dist += d;
                    }
                }
            }
            if shared > 0 {
                let better = match best {
                    None => true,
                    Some((s, d, _)) => shared > s || (shared == s && dist < d),
                };
                if better {
                    best = Some((shared, dist, idx));
                }
                continue;
            }
            // one missed window at most
            if q > t.last_window + 2 {
                continue;
            }
            let Some(last) = t.last() else { continue };
            if let Some(next) = tl.points.iter().find(|m| m.scan > last.scan) {
                let d = last.position().distance(&next.position());
                if d <= params.bridge_distance && bridge.is_none_or(|(bd, _)| d < bd) {
                    bridge = Some((d, idx));
                }
            }
        }
        best.map(|b| b.2).or(bridge.map(|b| b.1))
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// Trajectories extended by at least `min_windows` windows.
    pub fn confirmed(&self, min_windows: usize) -> Vec<&Trajectory> {
        self.trajectories.iter().filter(|t| t.windows >= min_windows).collect()
    }
}

/// Indices of the `w + 1` consecutive points used for point `i`, centered
/// where possible and shifted at the ends.
fn window_around(i: usize, len: usize, w: usize) -> std::ops::Range<usize> {
    let start = i.saturating_sub(w / 2).min(len - (w + 1));
    start..start + w + 1
}

fn leave_one_out(points: &[TrackPoint], range: std::ops::Range<usize>, i: usize) -> Result<Position> {
    let fit = fit_affine(
        range
            .filter(|&j| j != i)
            .map(|j| (points[j].scan as f64, points[j].position())),
    )?;
    Ok(fit.at(points[i].scan as f64))
}

/// Replaces points whose fit error is at least `nu` times the mean error of
/// the other `w` points of their window by the fit of those points, with
/// error reset to `floor`. Trajectories of `w` points or fewer pass through.
pub fn remove_outliers(points: &[TrackPoint], nu: f64, w: usize, floor: f64) -> Result<Vec<TrackPoint>> {
    let mut out = points.to_vec();
    if points.len() < w + 1 {
        return Ok(out);
    }
    for i in 0..out.len() {
        let range = window_around(i, out.len(), w);
        let others: f64 = range.clone().filter(|&j| j != i).map(|j| out[j].d).sum();
        if out[i].d >= nu * others / w as f64 {
            let p = leave_one_out(&out, range, i)?;
            out[i].x = p.x;
            out[i].y = p.y;
            out[i].d = floor;
        }
    }
    Ok(out)
}

/// Moves every point onto the leave-one-out affine fit of the other `w`
/// points of its window. Trajectories of `w` points or fewer pass through.
pub fn smooth_trajectory(points: &[TrackPoint], w: usize) -> Result<Vec<TrackPoint>> {
    if points.len() < w + 1 {
        return Ok(points.to_vec());
    }
    (0..points.len())
        .map(|i| {
            let p = leave_one_out(points, window_around(i, points.len(), w), i)?;
            Ok(TrackPoint {
                x: p.x,
                y: p.y,
                ..points[i]
            })
        })
        .collect()
}

/// Linearly interpolated points for scans missing between consecutive
/// points; interpolated points carry zero score.
pub fn fill_gaps(points: &[TrackPoint]) -> Vec<TrackPoint> {
    let mut out = Vec::with_capacity(points.len());
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        let span = (b.scan - a.scan) as f64;
        for s in a.scan + 1..b.scan {
            let p = a.position().lerp(&b.position(), (s - a.scan) as f64 / span);
            out.push(TrackPoint {
                x: p.x,
                y: p.y,
                scan: s,
                p: 0.0,
                d: a.d.max(b.d),
            });
        }
    }
    out.extend(points.last());
    out
}

/// Unweighted centroid of each region's cells per window layer.
pub fn region_centroids(regions: &[Region], layers: usize, grid: &SurveillanceGrid) -> Vec<Vec<Position>> {
    let mut out = vec![Vec::new(); layers];
    for r in regions {
        let mut acc = vec![(0.0, 0.0, 0usize); layers];
        for &(x, y, k) in &r.cells {
            let a = &mut acc[k as usize];
            a.0 += (x as f64 + 0.5) * grid.delta_x;
            a.1 += (y as f64 + 0.5) * grid.delta_y;
            a.2 += 1;
        }
        for (k, (sx, sy, n)) in acc.into_iter().enumerate() {
            if n > 0 {
                out[k].push(Position::new(sx / n as f64, sy / n as f64));
            }
        }
    }
    out
}

/// Chains per-scan points into tracks by greedy nearest-neighbour linking.
///
/// A point joins the closest open track whose last point lies within
/// `max_step`; tracks without a point for more than `max_gap` scans close.
/// Only tracks with at least `min_len` points are returned.
pub fn link_nearest(
    scans: &BTreeMap<i64, Vec<Position>>,
    max_step: f64,
    max_gap: i64,
    min_len: usize,
) -> Vec<Vec<TrackPoint>> {
    let mut open: Vec<Vec<TrackPoint>> = Vec::new();
    let mut closed: Vec<Vec<TrackPoint>> = Vec::new();
    for (&scan, pts) in scans {
        let (keep, done): (Vec<_>, Vec<_>) = open
            .into_iter()
            .partition(|t| scan - t.last().map_or(scan, |p| p.scan) <= max_gap + 1);
        closed.extend(done);
        open = keep;
        let mut pairs = Vec::new();
        for (ti, t) in open.iter().enumerate() {
            let last = t.last().expect("tracks are never empty").position();
            for (pi, p) in pts.iter().enumerate() {
                let d = last.distance(p);
                if d <= max_step {
                    pairs.push((d, ti, pi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut used_t = vec![false; open.len()];
        let mut used_p = vec![false; pts.len()];
        let point = |p: &Position| TrackPoint {
            x: p.x,
            y: p.y,
            scan,
            p: 0.0,
            d: 0.0,
        };
        for (_, ti, pi) in pairs {
            if !used_t[ti] && !used_p[pi] {
                used_t[ti] = true;
                used_p[pi] = true;
                open[ti].push(point(&pts[pi]));
            }
        }
        for (pi, p) in pts.iter().enumerate() {
            if !used_p[pi] {
                open.push(vec![point(p)]);
            }
        }
    }
    closed.extend(open);
    closed.retain(|t| t.len() >= min_len);
    closed.sort_by_key(|t| (t[0].scan, t[0].x.to_bits(), t[0].y.to_bits()));
    closed
}
