//! OSPA, detection accounting and Monte Carlo aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::Position;
use crate::pipeline::{run, DumpSelection, Method, RunOutput, StageTimes, Track};
use crate::scenario::{GroundTruth, ScenarioSpec};
use crate::synth::mix;
use crate::voting::VotingGeometry;

/// Minimum-cost assignment of every row to a distinct column, rows `<=`
/// columns. Returns the column of each row and the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // shortest augmenting paths with potentials; 1-based with a dummy 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assign, total)
}

/// OSPA distance with cutoff `c` and order `p`; zero when both sets are empty.
pub fn ospa(estimates: &[Position], truth: &[Position], c: f64, p: f64) -> f64 {
    let (small, large) = if estimates.len() <= truth.len() {
        (estimates, truth)
    } else {
        (truth, estimates)
    };
    let n = large.len();
    if n == 0 {
        return 0.0;
    }
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| a.distance(b).min(c).powf(p)).collect())
        .collect();
    let (_, total) = hungarian(&cost);
    let penalty = (n - small.len()) as f64 * c.powf(p);
    ((total + penalty) / n as f64).powf(1.0 / p).min(c)
}

/// Detection bookkeeping of one target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TargetStats {
    pub present_scans: usize,
    pub detected_scans: usize,
    pub error_sum: f64,
}

impl TargetStats {
    pub fn detection_rate(&self) -> f64 {
        if self.present_scans == 0 {
            0.0
        } else {
            self.detected_scans as f64 / self.present_scans as f64
        }
    }

    /// Mean error over detected scans only.
    pub fn mean_error(&self) -> Option<f64> {
        (self.detected_scans > 0).then(|| self.error_sum / self.detected_scans as f64)
    }
}

/// Detection, error and false-track accounting of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub targets: Vec<TargetStats>,
    /// Most frequently matched target of each track, by track order.
    pub labels: Vec<Option<usize>>,
    pub false_tracks: usize,
    pub false_track_points: usize,
    pub scans: usize,
    /// Scans at which every present target was detected.
    pub all_detected_scans: usize,
}

impl MatchResult {
    /// False-track points per scan.
    pub fn false_alarms_per_scan(&self) -> f64 {
        self.false_track_points as f64 / self.scans.max(1) as f64
    }
}

/// Per scan, pairs truth targets with track points greedily by distance
/// within `gating`. Detection and error come from these pairs; a track
/// paired with no target over its whole life is a false track.
pub fn match_and_score(tracks: &[Track], truth: &GroundTruth, gating: f64) -> Result<MatchResult> {
    let mut targets = vec![TargetStats::default(); truth.targets.len()];
    let mut votes: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); tracks.len()];
    let mut all_detected_scans = 0;
    for scan in 1..=truth.scan_count {
        let present = truth.at(scan)?;
        let pts: Vec<(usize, Position)> = tracks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.at(scan as i64).map(|p| (i, p.position())))
            .collect();
        let mut pairs = Vec::new();
        for (ti, (target, pos)) in present.iter().enumerate() {
            targets[*target].present_scans += 1;
            for (pi, (_, q)) in pts.iter().enumerate() {
                let d = pos.distance(q);
                if d <= gating {
                    pairs.push((d, ti, pi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut used_t = vec![false; present.len()];
        let mut used_p = vec![false; pts.len()];
        let mut hits = 0;
        for (d, ti, pi) in pairs {
            if used_t[ti] || used_p[pi] {
                continue;
            }
            used_t[ti] = true;
            used_p[pi] = true;
            hits += 1;
            let target = present[ti].0;
            targets[target].detected_scans += 1;
            targets[target].error_sum += d;
            *votes[pts[pi].0].entry(target).or_default() += 1;
        }
        if hits == present.len() {
            all_detected_scans += 1;
        }
    }
    let labels: Vec<Option<usize>> = votes
        .iter()
        .map(|v| v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(t, _)| *t))
        .collect();
    let mut false_tracks = 0;
    let mut false_track_points = 0;
    for (t, l) in tracks.iter().zip(&labels) {
        if l.is_none() {
            false_tracks += 1;
            false_track_points += t
                .points
                .iter()
                .filter(|p| (1..=truth.scan_count as i64).contains(&p.scan))
                .count();
        }
    }
    Ok(MatchResult {
        targets,
        labels,
        false_tracks,
        false_track_points,
        scans: truth.scan_count,
        all_detected_scans,
    })
}

/// OSPA of every scan between the tracks' points and the truth.
pub fn ospa_series(tracks: &[Track], truth: &GroundTruth, c: f64, p: f64) -> Result<Vec<f64>> {
    (1..=truth.scan_count)
        .map(|scan| {
            let est: Vec<Position> = tracks
                .iter()
                .filter_map(|t| t.at(scan as i64).map(|q| q.position()))
                .collect();
            let tru: Vec<Position> = truth.at(scan)?.into_iter().map(|(_, q)| q).collect();
            Ok(ospa(&est, &tru, c, p))
        })
        .collect()
}

/// Metrics of one tracker on one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub detection_rate: Vec<f64>,
    /// Mean positional error per target over detected scans.
    pub mean_error: Vec<Option<f64>>,
    pub false_alarms_per_scan: f64,
    pub false_tracks: usize,
    /// Fraction of scans with every present target detected.
    pub all_detected_fraction: f64,
    pub ospa_series: Vec<f64>,
    pub mean_ospa: f64,
    pub tracks: usize,
}

pub fn score_tracks(tracks: &[Track], spec: &ScenarioSpec) -> Result<MethodMetrics> {
    let p = &spec.params;
    let m = match_and_score(tracks, &spec.truth, p.gating_distance)?;
    let series = ospa_series(tracks, &spec.truth, p.ospa_cutoff, p.ospa_order)?;
    let mean_ospa = series.iter().sum::<f64>() / series.len().max(1) as f64;
    Ok(MethodMetrics {
        detection_rate: m.targets.iter().map(TargetStats::detection_rate).collect(),
        mean_error: m.targets.iter().map(TargetStats::mean_error).collect(),
        false_alarms_per_scan: m.false_alarms_per_scan(),
        false_tracks: m.false_tracks,
        all_detected_fraction: m.all_detected_scans as f64 / m.scans.max(1) as f64,
        ospa_series: series,
        mean_ospa,
        tracks: tracks.len(),
    })
}

/// Everything measured on one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub proposed: Option<MethodMetrics>,
    pub baseline: Option<MethodMetrics>,
    // Timings vary between identical invocations, so they stay out of the
    // serialized metrics and are reported separately.
    #[serde(skip)]
    pub times: StageTimes,
    #[serde(skip)]
    pub wall_time: f64,
}

/// Means over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub detection_rate: Vec<f64>,
    /// Per target: mean of the per-run error means (runs without any
    /// detection of the target are skipped).
    pub mean_error: Vec<Option<f64>>,
    pub false_alarms_per_scan: f64,
    pub all_detected_fraction: f64,
    pub mean_ospa: f64,
    /// Standard error of the per-run mean OSPA.
    pub ospa_std_error: f64,
    pub ospa_series: Vec<f64>,
}

impl MethodSummary {
    pub fn from_runs(runs: &[&MethodMetrics]) -> Self {
        let n = runs.len().max(1) as f64;
        let targets = runs.first().map_or(0, |r| r.detection_rate.len());
        let scans = runs.first().map_or(0, |r| r.ospa_series.len());
        let mean = |f: &dyn Fn(&MethodMetrics) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
        let detection_rate = (0..targets).map(|i| mean(&|r| r.detection_rate[i])).collect();
        let mean_error = (0..targets)
            .map(|i| {
                let e: Vec<f64> = runs.iter().filter_map(|r| r.mean_error[i]).collect();
                (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64)
            })
            .collect();
        let mean_ospa = mean(&|r| r.mean_ospa);
        let var = if runs.len() > 1 {
            runs.iter().map(|r| (r.mean_ospa - mean_ospa).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            detection_rate,
            mean_error,
            false_alarms_per_scan: mean(&|r| r.false_alarms_per_scan),
            all_detected_fraction: mean(&|r| r.all_detected_fraction),
            mean_ospa,
            ospa_std_error: (var / n).sqrt(),
            ospa_series: (0..scans).map(|k| mean(&|r| r.ospa_series[k])).collect(),
        }
    }
}

/// Aggregate of a Monte Carlo batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub runs: usize,
    pub base_seed: u64,
    pub proposed: Option<MethodSummary>,
    pub baseline: Option<MethodSummary>,
    /// Runs where the proposed mean OSPA is strictly below the baseline's.
    pub proposed_wins: Option<usize>,
    #[serde(skip)]
    pub mean_times: StageTimes,
    #[serde(skip)]
    pub mean_wall_time: f64,
    pub per_run: Vec<RunMetrics>,
}

impl MonteCarloReport {
    /// Pretty JSON of everything except timings; identical inputs give
    /// identical bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seed of run `r` of a batch.
pub fn run_seed(base_seed: u64, r: usize) -> u64 {
    mix(base_seed, r as u64)
}

/// One run plus its metrics; `sink` sees the raw output (for dumps).
pub fn evaluate_run(
    spec: &ScenarioSpec,
    geometry: &VotingGeometry,
    r: usize,
    base_seed: u64,
    method: Method,
    dumps: DumpSelection,
) -> Result<(RunMetrics, RunOutput)> {
    let seed = run_seed(base_seed, r);
    let start = Instant::now();
    let out = run(spec, geometry, seed, method, dumps)?;
    let wall_time = start.elapsed().as_secs_f64();
    let proposed = method
        .proposed()
        .then(|| score_tracks(&out.proposed, spec))
        .transpose()?;
    let baseline = method
        .baseline()
        .then(|| score_tracks(&out.baseline, spec))
        .transpose()?;
    Ok((
        RunMetrics {
            run: r,
            seed,
            proposed,
            baseline,
            times: out.times,
            wall_time,
        },
        out,
    ))
}

/// Independent runs in parallel, aggregated in run order.
pub fn monte_carlo(spec: &ScenarioSpec, runs: usize, base_seed: u64, method: Method) -> Result<MonteCarloReport> {
    let geometry = crate::pipeline::geometry_for(spec);
    let per_run = (0..runs)
        .into_par_iter()
        .map(|r| evaluate_run(spec, &geometry, r, base_seed, method, DumpSelection::default()).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec, base_seed, per_run))
}

pub fn summarize(spec: &ScenarioSpec, base_seed: u64, per_run: Vec<RunMetrics>) -> MonteCarloReport {
    let n = per_run.len().max(1) as f64;
    let prop: Vec<&MethodMetrics> = per_run.iter().filter_map(|r| r.proposed.as_ref()).collect();
    let base: Vec<&MethodMetrics> = per_run.iter().filter_map(|r| r.baseline.as_ref()).collect();
    let proposed_wins = (!prop.is_empty() && prop.len() == base.len()).then(|| {
        prop.iter()
            .zip(&base)
            .filter(|(a, b)| a.mean_ospa < b.mean_ospa)
            .count()
    });
    let mut times = StageTimes::default();
    for r in &per_run {
        times.accumulate(&r.times);
    }
    MonteCarloReport {
        scenario: spec.name.clone(),
        runs: per_run.len(),
        base_seed,
        proposed: (!prop.is_empty()).then(|| MethodSummary::from_runs(&prop)),
        baseline: (!base.is_empty()).then(|| MethodSummary::from_runs(&base)),
        proposed_wins,
        mean_times: times.scaled(1.0 / n),
        mean_wall_time: per_run.iter().map(|r| r.wall_time).sum::<f64>() / n,
        per_run,
    }
}
