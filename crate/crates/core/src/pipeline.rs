//! One run of the full chain: synthesis, MTI, voting, windowed volume
//! processing, point generation and tracking.
//!
//! Windows fire at scans `t = W + q s`, `q = 0, 1, ...`, each one viewing the
//! last `W` fused maps.

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dump::{PointRecord, VoxelRecord};
use crate::error::{Error, Result};
use crate::frontend::Frontend;
use crate::geometry::Position;
use crate::points::{region_points, Measurement};
use crate::scenario::{GammaScore, ScenarioSpec, ScoreFloor};
use crate::synth::{scan_rng, RangeProfile, Synthesizer};
use crate::tracking::{
    enumerate_tracklets, fill_gaps, link_nearest, region_centroids, remove_outliers, smooth_trajectory,
    AssociationParams, Associator, TrackPoint, Tracklet, TrackletLimits,
};
use crate::volume::{open_regions, region_grow, seed_cells, stack_window, Region, StructuringElement};
use crate::voting::{clutter_density_map, fuse, suppress_clutter, threshold, MapKind, ScoreMap, VotingGeometry};

/// Which trackers a run feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    SimpleBaseline,
    Both,
}

impl Method {
    pub fn proposed(self) -> bool {
        matches!(self, Method::Proposed | Method::Both)
    }

    pub fn baseline(self) -> bool {
        matches!(self, Method::SimpleBaseline | Method::Both)
    }
}

/// Intermediate products to keep for dumping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DumpSelection {
    pub profiles: bool,
    pub maps: bool,
    pub volumes: bool,
    pub points: bool,
}

/// Wall time per stage, seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub synth: f64,
    pub frontend: f64,
    pub voting: f64,
    pub volume: f64,
    pub points: f64,
    pub tracking: f64,
    pub baseline: f64,
}

impl StageTimes {
    /// Processing time, synthesis excluded.
    pub fn processing(&self) -> f64 {
        self.frontend + self.voting + self.volume + self.points + self.tracking + self.baseline
    }

    pub fn accumulate(&mut self, o: &StageTimes) {
        self.synth += o.synth;
        self.frontend += o.frontend;
        self.voting += o.voting;
        self.volume += o.volume;
        self.points += o.points;
        self.tracking += o.tracking;
        self.baseline += o.baseline;
    }

    pub fn scaled(&self, f: f64) -> StageTimes {
        StageTimes {
            synth: self.synth * f,
            frontend: self.frontend * f,
            voting: self.voting * f,
            volume: self.volume * f,
            points: self.points * f,
            tracking: self.tracking * f,
            baseline: self.baseline * f,
        }
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

/// A reported trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    pub id: usize,
    pub points: Vec<TrackPoint>,
}

impl Track {
    pub fn at(&self, scan: i64) -> Option<&TrackPoint> {
        self.points
            .binary_search_by_key(&scan, |p| p.scan)
            .ok()
            .map(|i| &self.points[i])
    }
}

/// Products kept for dumping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recorded {
    pub profiles: Vec<RangeProfile>,
    pub maps: Vec<ScoreMap>,
    pub voxels: Vec<VoxelRecord>,
    pub points: Vec<PointRecord>,
}

/// Products of one processed window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub q: usize,
    pub base_scan: i64,
    pub regions: Vec<Region>,
    pub points: Vec<Vec<Measurement>>,
    pub tracklets: Vec<Tracklet>,
}

/// Result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Confirmed trajectories after outlier removal and smoothing.
    pub proposed: Vec<Track>,
    /// Same trajectories before outlier removal and smoothing.
    pub proposed_raw: Vec<Track>,
    pub baseline: Vec<Track>,
    pub times: StageTimes,
    pub recorded: Recorded,
    pub windows: usize,
}

struct FusedScan {
    map: ScoreMap,
    eta: f64,
    raw_mean: f64,
}

/// Rolling state of one run.
pub struct PipelineState<'a> {
    spec: &'a ScenarioSpec,
    geometry: &'a VotingGeometry,
    method: Method,
    dumps: DumpSelection,
    frontend: Frontend,
    fused: VecDeque<FusedScan>,
    clutter: VecDeque<ScoreMap>,
    associator: Associator,
    element: StructuringElement,
    q: usize,
    baseline_scans: BTreeMap<i64, Vec<Position>>,
    times: StageTimes,
    recorded: Recorded,
}

impl<'a> PipelineState<'a> {
    pub fn new(spec: &'a ScenarioSpec, geometry: &'a VotingGeometry, method: Method, dumps: DumpSelection) -> Self {
        Self {
            spec,
            geometry,
            method,
            dumps,
            frontend: Frontend::new(spec.layout.len(), spec.params.kappa),
            fused: VecDeque::with_capacity(spec.params.window_w),
            clutter: VecDeque::with_capacity(spec.params.clutter_history_v),
            associator: Associator::new(),
            element: StructuringElement::cross7(),
            q: 0,
            baseline_scans: BTreeMap::new(),
            times: StageTimes::default(),
            recorded: Recorded::default(),
        }
    }

    /// Feeds target-free profiles to the MTI history only.
    pub fn prime(&mut self, profiles: Vec<RangeProfile>) {
        self.frontend.prime(profiles);
    }

    pub fn times_mut(&mut self) -> &mut StageTimes {
        &mut self.times
    }

    /// Processes the profiles of the next scan; returns the window output
    /// when a window completes at this scan.
    pub fn step(&mut self, profiles: Vec<RangeProfile>) -> Result<Option<WindowOutput>> {
        let scan = profiles.first().map(|p| p.scan).ok_or(Error::LengthMismatch {
            expected: self.spec.layout.len(),
            actual: 0,
        })?;
        if profiles.len() != self.spec.layout.len() {
            return Err(Error::LengthMismatch {
                expected: self.spec.layout.len(),
                actual: profiles.len(),
            });
        }
        let ctx = |e: Error| e.at_scan(scan.max(0) as usize);
        if self.dumps.profiles {
            self.recorded.profiles.extend(profiles.iter().cloned());
        }
        let mut times = self.times;
        let m = timed(&mut times.frontend, || self.frontend.process(profiles)).map_err(ctx)?;
        let fused = timed(&mut times.voting, || self.vote(&m)).map_err(ctx)?;
        if self.fused.len() == self.spec.params.window_w {
            self.fused.pop_front();
        }
        self.fused.push_back(fused);
        self.times = times;

        let w = self.spec.params.window_w as i64;
        let s = self.spec.params.stride_s as i64;
        if scan < w || (scan - w) % s != 0 || self.fused.len() < self.spec.params.window_w {
            return Ok(None);
        }
        let out = self.window().map_err(ctx)?;
        self.q += 1;
        Ok(Some(out))
    }

    fn vote(&mut self, m: &[RangeProfile]) -> Result<FusedScan> {
        let p = &self.spec.params;
        let per_sensor = m
            .par_iter()
            .map(|prof| self.geometry.sensor_score_map(prof, p.alpha))
            .collect::<Result<Vec<_>>>()?;
        let raw = fuse(&per_sensor)?;
        let th = threshold(&raw, p.beta, MapKind::FusedThresholded);
        let raw_mean = raw.mean();
        let (map, eta) = if p.clutter_suppression {
            let out = if self.clutter.is_empty() {
                (th.map.clone(), th.eta)
            } else {
                let hist: Vec<ScoreMap> = self.clutter.iter().cloned().collect();
                let density = clutter_density_map(&hist)?;
                let sup = suppress_clutter(&th.map, &density, p.clutter_floor)?;
                let again = threshold(&sup, p.beta, MapKind::ClutterSuppressed);
                (again.map, again.eta)
            };
            if self.clutter.len() == p.clutter_history_v {
                self.clutter.pop_front();
            }
            self.clutter.push_back(th.map.clone());
            out
        } else {
            (th.map, th.eta)
        };
        if self.dumps.maps {
            self.recorded.maps.extend(per_sensor);
            self.recorded.maps.push(raw);
            self.recorded.maps.push(map.clone());
        }
        Ok(FusedScan { map, eta, raw_mean })
    }

    fn window(&mut self) -> Result<WindowOutput> {
        let spec = self.spec;
        let p = &spec.params;
        let q = self.q;
        let mut times = self.times;

        let (regions, volume) = timed(&mut times.volume, || -> Result<_> {
            let maps: Vec<&ScoreMap> = self.fused.iter().map(|f| &f.map).collect();
            let vol = stack_window(&maps, p.window_w)?;
            let gamma_score = match p.gamma_score {
                GammaScore::Eta => self.fused.back().map_or(0.0, |f| f.eta),
                GammaScore::Fixed(v) => v,
            };
            let seeds = seed_cells(&vol, p.seed_spacing);
            let (grown, cleaned) = region_grow(&vol, &seeds, gamma_score, p.gamma_num);
            Ok(open_regions(&grown, &cleaned, &self.element))
        })?;
        let base_scan = volume.base_scan;

        if self.dumps.volumes {
            for r in &regions {
                for &(x, y, k) in &r.cells {
                    self.recorded.voxels.push(VoxelRecord {
                        run: 0,
                        window: q,
                        i_x: x as usize + 1,
                        i_y: y as usize + 1,
                        scan: base_scan + k as i64,
                        score: volume.get((x, y, k)),
                        region: r.id,
                    });
                }
            }
        }

        let mut points = vec![Vec::new(); p.window_w];
        let mut tracklets = Vec::new();
        if self.method.proposed() {
            let floors: Vec<f64> = self
                .fused
                .iter()
                .map(|f| match p.measurement_score_floor {
                    ScoreFloor::Fixed(v) => v,
                    ScoreFloor::FusedMean => f.raw_mean,
                })
                .collect();
            let found = timed(&mut times.points, || {
                region_points(&regions, &volume, &spec.grid, p.smooth_w, p.segment_n, &floors)
            });
            for rp in &found {
                points[rp.layer].push(rp.measurement);
                if self.dumps.points {
                    self.recorded.points.push(PointRecord {
                        run: 0,
                        window: q,
                        region: rp.region,
                        scan: rp.measurement.scan,
                        x: rp.measurement.x,
                        y: rp.measurement.y,
                        p: rp.measurement.score,
                    });
                }
            }
            tracklets = timed(&mut times.tracking, || -> Result<_> {
                let t = enumerate_tracklets(&points, &TrackletLimits::from_params(p))?;
                self.associator.push_window(q, &t, &association(spec));
                Ok(t)
            })?;
        }
        if self.method.baseline() {
            timed(&mut times.baseline, || {
                for (k, c) in region_centroids(&regions, p.window_w, &spec.grid)
                    .into_iter()
                    .enumerate()
                {
                    self.baseline_scans.insert(base_scan + k as i64, c);
                }
            });
        }
        self.times = times;
        Ok(WindowOutput {
            q,
            base_scan,
            regions,
            points,
            tracklets,
        })
    }

    /// Final trajectories of both trackers.
    pub fn finish(mut self) -> Result<RunOutput> {
        let p = &self.spec.params;
        let mut times = self.times;
        let (proposed, proposed_raw) = timed(&mut times.tracking, || -> Result<_> {
            let mut smooth = Vec::new();
            let mut raw = Vec::new();
            for t in self.associator.confirmed(p.confirm_windows) {
                let pts = t.points();
                let cleaned = remove_outliers(&pts, p.nu, p.window_w, p.fit_error_floor)?;
                let smoothed = smooth_trajectory(&cleaned, p.window_w)?;
                raw.push(Track { id: t.id, points: pts });
                smooth.push(Track {
                    id: t.id,
                    points: fill_gaps(&smoothed),
                });
            }
            Ok((smooth, raw))
        })?;
        let baseline = timed(&mut times.baseline, || -> Result<_> {
            link_nearest(&self.baseline_scans, p.bridge_distance, p.stride_s as i64, p.window_w)
                .into_iter()
                .enumerate()
                .map(|(id, pts)| {
                    Ok(Track {
                        id,
                        points: fill_gaps(&smooth_trajectory(&pts, p.window_w)?),
                    })
                })
                .collect()
        })?;
        self.times = times;
        Ok(RunOutput {
            proposed,
            proposed_raw,
            baseline,
            times: self.times,
            recorded: std::mem::take(&mut self.recorded),
            windows: self.q,
        })
    }
}

fn association(spec: &ScenarioSpec) -> AssociationParams {
    AssociationParams {
        tolerance: spec.params.association_tolerance,
        bridge_distance: spec.params.bridge_distance,
    }
}

/// Voting geometry of a scenario; build once and share across runs.
pub fn geometry_for(spec: &ScenarioSpec) -> VotingGeometry {
    VotingGeometry::from_params(&spec.layout, &spec.grid, &spec.params)
}

/// Synthesises and processes all `K` scans of one run.
pub fn run(
    spec: &ScenarioSpec,
    geometry: &VotingGeometry,
    seed: u64,
    method: Method,
    dumps: DumpSelection,
) -> Result<RunOutput> {
    let synth = Synthesizer::new(spec, &spec.echo)?;
    let mut state = PipelineState::new(spec, geometry, method, dumps);
    let pre = spec.params.preroll_scans as i64;
    for scan in (1 - pre)..=0 {
        let start = Instant::now();
        let profiles = synth.empty_scan(scan, &mut scan_rng(seed, scan));
        state.times_mut().synth += start.elapsed().as_secs_f64();
        state.prime(profiles);
    }
    for scan in 1..=spec.truth.scan_count {
        let start = Instant::now();
        let profiles = synth.scan(scan, &mut scan_rng(seed, scan as i64))?;
        state.times_mut().synth += start.elapsed().as_secs_f64();
        state.step(profiles)?;
    }
    state.finish()
}

/// Processes a recorded profile stream; profiles with scan `<= 0` only prime
/// the MTI history.
pub fn replay(
    spec: &ScenarioSpec,
    geometry: &VotingGeometry,
    profiles: Vec<RangeProfile>,
    method: Method,
) -> Result<RunOutput> {
    let mut by_scan: BTreeMap<i64, Vec<RangeProfile>> = BTreeMap::new();
    for p in profiles {
        by_scan.entry(p.scan).or_default().push(p);
    }
    let mut state = PipelineState::new(spec, geometry, method, DumpSelection::default());
    for (scan, mut ps) in by_scan {
        ps.sort_by_key(|p| p.sensor);
        if scan <= 0 {
            state.prime(ps);
        } else {
            state.step(ps)?;
        }
    }
    state.finish()
}
