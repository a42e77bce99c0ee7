//! Surveillance geometry, sensor layout, ground truth and processing
//! parameters, loaded from a TOML scenario document.
//!
//! Indices in the document and in [`SurveillanceGrid::cell_center`] are
//! 1-based. Lengths are meters, times seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position, Rect};
use crate::synth::EchoModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveillanceGrid {
    pub n_x: usize,
    pub n_y: usize,
    pub delta_x: f64,
    pub delta_y: f64,
}

impl SurveillanceGrid {
    pub fn new(n_x: usize, n_y: usize, delta_x: f64, delta_y: f64) -> Self {
        Self {
            n_x,
            n_y,
            delta_x,
            delta_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.n_x as f64 * self.delta_x
    }

    pub fn height(&self) -> f64 {
        self.n_y as f64 * self.delta_y
    }

    pub fn cell_count(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width() && p.y <= self.height()
    }

    /// Center of cell `(i_x, i_y)`, 1-based.
    pub fn cell_center(&self, i_x: usize, i_y: usize) -> Result<Position> {
        if i_x == 0 || i_y == 0 || i_x > self.n_x || i_y > self.n_y {
            return Err(Error::CellOutOfRange {
                i_x,
                i_y,
                n_x: self.n_x,
                n_y: self.n_y,
            });
        }
        Ok(self.center0(i_x - 1, i_y - 1))
    }

    /// 1-based cell containing `p`; points on the outer boundary map to the
    /// last cell.
    pub fn cell_of(&self, p: &Position) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i_x = ((p.x / self.delta_x).floor() as usize).min(self.n_x - 1);
        let i_y = ((p.y / self.delta_y).floor() as usize).min(self.n_y - 1);
        Some((i_x + 1, i_y + 1))
    }

    /// Center of the 0-based cell `(c_x, c_y)`.
    pub(crate) fn center0(&self, c_x: usize, c_y: usize) -> Position {
        Position::new((c_x as f64 + 0.5) * self.delta_x, (c_y as f64 + 0.5) * self.delta_y)
    }

    /// Closed square of the 0-based cell `(c_x, c_y)`.
    pub(crate) fn cell_rect0(&self, c_x: usize, c_y: usize) -> Rect {
        Rect {
            x0: c_x as f64 * self.delta_x,
            y0: c_y as f64 * self.delta_y,
            x1: (c_x + 1) as f64 * self.delta_x,
            y1: (c_y + 1) as f64 * self.delta_y,
        }
    }

    /// Same area, cells of size `delta`.
    pub fn with_cell_size(&self, delta: f64) -> Self {
        Self {
            n_x: ((self.width() / delta).round() as usize).max(1),
            n_y: ((self.height() / delta).round() as usize).max(1),
            delta_x: delta,
            delta_y: delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    Monostatic,
    Multistatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout {
    pub mode: NetworkMode,
    pub sensors: Vec<Position>,
    pub transmitter: Option<Position>,
}

impl SensorLayout {
    pub fn monostatic(sensors: Vec<Position>) -> Self {
        Self {
            mode: NetworkMode::Monostatic,
            sensors,
            transmitter: None,
        }
    }

    pub fn multistatic(transmitter: Position, sensors: Vec<Position>) -> Self {
        Self {
            mode: NetworkMode::Multistatic,
            sensors,
            transmitter: Some(transmitter),
        }
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Transmitter-to-sensor distance `L_n`; zero in monostatic mode.
    pub fn baseline_length(&self, sensor: usize) -> f64 {
        match (self.mode, self.transmitter) {
            (NetworkMode::Multistatic, Some(tx)) => tx.distance(&self.sensors[sensor]),
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sensors.len() < 3 {
            return Err(Error::Validation(format!(
                "sensor count N_R = {} but at least 3 are required",
                self.sensors.len()
            )));
        }
        if self.mode == NetworkMode::Multistatic && self.transmitter.is_none() {
            return Err(Error::Validation("multistatic layout requires a transmitter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub scan: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPath {
    pub waypoints: Vec<Waypoint>,
}

impl TargetPath {
    /// Position at `scan`, linearly interpolated; `None` outside the
    /// waypoint span.
    pub fn position_at(&self, scan: usize) -> Option<Position> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if scan < first.scan || scan > last.scan {
            return None;
        }
        let idx = self.waypoints.partition_point(|w| w.scan < scan);
        let b = &self.waypoints[idx];
        if b.scan == scan {
            return Some(Position::new(b.x, b.y));
        }
        let a = &self.waypoints[idx - 1];
        let frac = (scan - a.scan) as f64 / (b.scan - a.scan) as f64;
        Some(Position::new(a.x, a.y).lerp(&Position::new(b.x, b.y), frac))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub targets: Vec<TargetPath>,
    pub scan_count: usize,
    pub scan_period: f64,
}

impl GroundTruth {
    /// `(target index, position)` for every target alive at `scan`.
    pub fn at(&self, scan: usize) -> Result<Vec<(usize, Position)>> {
        if scan == 0 || scan > self.scan_count {
            return Err(Error::ScanOutOfRange {
                scan,
                scan_count: self.scan_count,
            });
        }
        Ok(self
            .targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.position_at(scan).map(|p| (i, p)))
            .collect())
    }

    fn validate(&self, grid: &SurveillanceGrid) -> Result<()> {
        if self.scan_count == 0 {
            return Err(Error::Validation("scan_count must be at least 1".into()));
        }
        if !(self.scan_period > 0.0) {
            return Err(Error::Validation("scan_period must be positive".into()));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.waypoints.is_empty() {
                return Err(Error::Validation(format!("target {} has no waypoints", i + 1)));
            }
            for pair in t.waypoints.windows(2) {
                if pair[1].scan <= pair[0].scan {
                    return Err(Error::Validation(format!(
                        "target {}: waypoint scans must strictly increase ({} then {})",
                        i + 1,
                        pair[0].scan,
                        pair[1].scan
                    )));
                }
            }
            for w in &t.waypoints {
                if w.scan == 0 || w.scan > self.scan_count {
                    return Err(Error::Validation(format!(
                        "target {}: waypoint scan {} outside 1..={}",
                        i + 1,
                        w.scan,
                        self.scan_count
                    )));
                }
                if !grid.contains(&Position::new(w.x, w.y)) {
                    return Err(Error::Validation(format!(
                        "target {}: waypoint ({}, {}) outside the surveillance area",
                        i + 1,
                        w.x,
                        w.y
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpacing {
    pub d_x: usize,
    pub d_y: usize,
    pub d_t: usize,
}

/// Region score threshold `γ_score`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaScore {
    /// Equal to the adaptive fused-map threshold of the newest window scan.
    Eta,
    Fixed(f64),
}

/// Floor below which point measurements are pruned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFloor {
    Fixed(f64),
    /// Mean fused score of the measurement's scan.
    FusedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Vote exponent.
    pub alpha: f64,
    /// Fused-map threshold multiplier.
    pub beta: f64,
    /// MTI lag; the reference averages `2κ` scans ending `κ + 1` scans back.
    pub kappa: usize,
    pub window_w: usize,
    pub stride_s: usize,
    pub seed_spacing: SeedSpacing,
    pub gamma_num: usize,
    pub gamma_score: GammaScore,
    /// Smoothing half-width.
    pub smooth_w: usize,
    /// Segment subdivisions for the cluster test.
    pub segment_n: usize,
    /// Outlier factor.
    pub nu: f64,
    pub n_c: usize,
    /// Pulse integration factor.
    pub n_s: usize,
    /// Range-bin sampling period, s.
    pub sample_period: f64,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
    pub max_tracklets_per_window: usize,
    /// Per-point fraction of the best tracklet score in a window; a tracklet
    /// of `W` points is dropped below this raised to the `W` times the best.
    pub tracklet_relative_threshold: f64,
    /// Enumeration budget; beyond it each scan keeps only its best points.
    pub max_tracklet_combinations: usize,
    pub measurement_score_floor: ScoreFloor,
    /// Floor on per-point fit error, m.
    pub fit_error_floor: f64,
    pub clutter_suppression: bool,
    /// Clutter-density history depth `V`.
    pub clutter_history_v: usize,
    pub clutter_floor: f64,
    /// Detection matching radius for evaluation, m.
    pub gating_distance: f64,
    /// Max distance at which two windows' points count as the same point, m.
    pub association_tolerance: f64,
    /// Max distance to bridge a trajectory across one missed window, m.
    pub bridge_distance: f64,
    /// Windows a trajectory must span before it is reported.
    pub confirm_windows: usize,
    /// Target-free scans fed to the MTI filter before scan 1.
    pub preroll_scans: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            beta: 2.0,
            kappa: 10,
            window_w: 4,
            stride_s: 2,
            seed_spacing: SeedSpacing { d_x: 5, d_y: 5, d_t: 1 },
            gamma_num: 150,
            gamma_score: GammaScore::Eta,
            smooth_w: 3,
            segment_n: 10,
            nu: 3.0,
            n_c: 1500,
            n_s: 4096,
            sample_period: 61e-12,
            ospa_cutoff: 0.7,
            ospa_order: 1.0,
            max_tracklets_per_window: 5,
            tracklet_relative_threshold: 0.01,
            max_tracklet_combinations: 200_000,
            measurement_score_floor: ScoreFloor::Fixed(0.0),
            fit_error_floor: 1e-3,
            clutter_suppression: false,
            clutter_history_v: 10,
            clutter_floor: 1e-6,
            gating_distance: 0.7,
            association_tolerance: 0.2,
            bridge_distance: 0.6,
            confirm_windows: 2,
            preroll_scans: 0,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Validation(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)");
        }
        if !(self.beta > 0.0) {
            return fail("beta must be positive");
        }
        if self.window_w < 3 {
            return fail("window_w must be at least 3 (leave-one-out line fits)");
        }
        if self.stride_s < 1 || self.stride_s > self.window_w {
            return fail("stride_s must satisfy 1 <= s <= W");
        }
        if !(self.nu > 0.0) {
            return fail("nu must be positive");
        }
        if self.segment_n < 2 {
            return fail("segment_n must be at least 2");
        }
        let counts = [
            ("kappa", self.kappa),
            ("seed_spacing.d_x", self.seed_spacing.d_x),
            ("seed_spacing.d_y", self.seed_spacing.d_y),
            ("seed_spacing.d_t", self.seed_spacing.d_t),
            ("gamma_num", self.gamma_num),
            ("n_c", self.n_c),
            ("n_s", self.n_s),
            ("max_tracklets_per_window", self.max_tracklets_per_window),
            ("max_tracklet_combinations", self.max_tracklet_combinations),
            ("clutter_history_v", self.clutter_history_v),
            ("confirm_windows", self.confirm_windows),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v < 1) {
            return Err(Error::Validation(format!("{name} must be at least 1")));
        }
        let positive = [
            ("sample_period", self.sample_period),
            ("ospa_cutoff", self.ospa_cutoff),
            ("fit_error_floor", self.fit_error_floor),
            ("clutter_floor", self.clutter_floor),
            ("gating_distance", self.gating_distance),
            ("association_tolerance", self.association_tolerance),
            ("bridge_distance", self.bridge_distance),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Validation(format!("{name} must be positive")));
        }
        if !(self.ospa_order >= 1.0) {
            return fail("ospa_order must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tracklet_relative_threshold) {
            return fail("tracklet_relative_threshold must lie in [0, 1]");
        }
        if let GammaScore::Fixed(v) = self.gamma_score {
            if !(v >= 0.0) {
                return fail("gamma_score must be non-negative");
            }
        }
        if let ScoreFloor::Fixed(v) = self.measurement_score_floor {
            if !(v >= 0.0) {
                return fail("measurement_score_floor must be non-negative");
            }
        }
        Ok(())
    }
}

/// Validated, immutable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub grid: SurveillanceGrid,
    pub layout: SensorLayout,
    pub truth: GroundTruth,
    pub params: PipelineParams,
    pub echo: EchoModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorsSection {
    mode: NetworkMode,
    positions: Vec<Position>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransmitterSection {
    position: Position,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    #[serde(default)]
    name: String,
    scan_count: usize,
    scan_period: f64,
    grid: SurveillanceGrid,
    sensors: SensorsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transmitter: Option<TransmitterSection>,
    #[serde(default)]
    targets: Vec<TargetPath>,
    #[serde(default)]
    params: PipelineParams,
    #[serde(default)]
    echo: EchoModel,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.n_x < 1 || self.grid.n_y < 1 {
            return Err(Error::Validation("grid needs n_x, n_y >= 1".into()));
        }
        if !(self.grid.delta_x > 0.0 && self.grid.delta_y > 0.0) {
            return Err(Error::Validation("grid cell sizes must be positive".into()));
        }
        self.layout.validate()?;
        self.truth.validate(&self.grid)?;
        self.params.validate()?;
        self.echo.validate()?;
        Ok(())
    }

    /// Same scenario on a grid of square cells of size `delta` covering the
    /// same area.
    pub fn with_cell_size(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Validation("cell size override must be positive".into()));
        }
        let mut spec = self.clone();
        spec.grid = self.grid.with_cell_size(delta);
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        let doc = ScenarioDocument {
            name: self.name.clone(),
            scan_count: self.truth.scan_count,
            scan_period: self.truth.scan_period,
            grid: self.grid,
            sensors: SensorsSection {
                mode: self.layout.mode,
                positions: self.layout.sensors.clone(),
            },
            transmitter: self.layout.transmitter.map(|position| TransmitterSection { position }),
            targets: self.truth.targets.clone(),
            params: self.params.clone(),
            echo: self.echo.clone(),
        };
        toml::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parses and validates a scenario document; unspecified parameters take
/// their default values.
pub fn load_scenario(document: &str) -> Result<ScenarioSpec> {
    let doc: ScenarioDocument = toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    let spec = ScenarioSpec {
        name: doc.name,
        grid: doc.grid,
        layout: SensorLayout {
            mode: doc.sensors.mode,
            sensors: doc.sensors.positions,
            transmitter: doc.transmitter.map(|t| t.position),
        },
        truth: GroundTruth {
            targets: doc.targets,
            scan_count: doc.scan_count,
            scan_period: doc.scan_period,
        },
        params: doc.params,
        echo: doc.echo,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_scenario_file(path: &std::path::Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}
