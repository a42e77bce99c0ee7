//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uwb_tbd::eval::{self, MethodSummary, MonteCarloReport};
use uwb_tbd::frontend::Frontend;
use uwb_tbd::pipeline::Method;
use uwb_tbd::points::{grow_cluster, interp, local_maxima, segment_test, smooth_layer, Layer, Measurement};
use uwb_tbd::scenario::{load_scenario_file, PipelineParams, ScenarioSpec, SurveillanceGrid};
use uwb_tbd::synth::{scan_rng, AmplitudeLaw, EchoModel, RangeProfile, StaticClutter, Synthesizer};
use uwb_tbd::tracking::{enumerate_tracklets, TrackletLimits};
use uwb_tbd::volume::{dilate, erode, open, region_grow, ScoreVolume, StructuringElement, Voxel};
use uwb_tbd::voting::votes_from_profile;
use uwb_tbd::Position;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xacce_0000 + tag)
}

fn random_set(r: &mut ChaCha8Rng, n: i32, layers: i32, density: f64) -> BTreeSet<Voxel> {
    let mut s = BTreeSet::new();
    for k in 0..layers {
        for y in 0..n {
            for x in 0..n {
                if r.random_bool(density) {
                    s.insert((x, y, k));
                }
            }
        }
    }
    s
}

fn morphology() -> Outcome {
    let start = Instant::now();
    let b = StructuringElement::cross7();
    let mut r = rng(1);
    let mut voxels = 0;
    for i in 0..200 {
        let density = 0.3 + 0.6 * (i as f64 / 200.0);
        let a = random_set(&mut r, 30, 4, density);
        let extra = random_set(&mut r, 30, 4, 0.1);
        let bigger: BTreeSet<Voxel> = a.union(&extra).copied().collect();
        voxels += a.len();

        let o = open(&a, &b);
        if !o.is_subset(&a) {
            return Err(format!("volume {i}: opening is not anti-extensive"));
        }
        if open(&o, &b) != o {
            return Err(format!("volume {i}: opening is not idempotent"));
        }
        if !erode(&a, &b).is_subset(&erode(&bigger, &b)) {
            return Err(format!("volume {i}: erosion is not monotone"));
        }
        if !dilate(&a, &b).is_subset(&dilate(&bigger, &b)) {
            return Err(format!("volume {i}: dilation is not monotone"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs < 10.0,
        format!("200 volumes of 30x30x4 ({voxels} voxels) in {secs:.2} s"),
    )
}

fn random_volume(r: &mut ChaCha8Rng) -> ScoreVolume {
    let mut v = ScoreVolume::zeros(30, 30, 4, 1);
    let density = r.random_range(0.05..0.35);
    for x in v.values.iter_mut() {
        if r.random_bool(density) {
            *x = r.random_range(0.1..5.0);
        }
    }
    v
}

fn seed_order() -> Outcome {
    let mut r = rng(2);
    let mut regions = 0;
    for i in 0..50 {
        let vol = random_volume(&mut r);
        let mut seeds: Vec<Voxel> = (0..60)
            .map(|_| (r.random_range(0..30), r.random_range(0..30), r.random_range(0..4)))
            .collect();
        let gamma_num = r.random_range(1..40);
        let gamma_score = r.random_range(0.0..40.0);
        let reference = region_grow(&vol, &seeds, gamma_score, gamma_num);
        regions += reference.0.len();
        for _ in 0..10 {
            seeds.shuffle(&mut r);
            if region_grow(&vol, &seeds, gamma_score, gamma_num) != reference {
                return Err(format!("volume {i}: seed order changed the result"));
            }
        }
    }
    Ok(format!("50 volumes x 10 orderings, {regions} accepted regions"))
}

fn mti_cancellation() -> Outcome {
    let mut r = rng(3);
    // hand-made constant profiles
    let kappa = 10;
    let mut fe = Frontend::new(3, kappa);
    let base: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..500).map(|_| r.random_range(0.0..30.0)).collect())
        .collect();
    for scan in 1..=4 * kappa as i64 {
        let ps = base
            .iter()
            .enumerate()
            .map(|(n, v)| RangeProfile::new(v.clone(), scan, n))
            .collect();
        for m in fe.process(ps).map_err(|e| e.to_string())? {
            if m.samples.iter().any(|&s| s != 0.0) {
                return Err(format!("nonzero output at scan {scan}, sensor {}", m.sensor));
            }
        }
    }

    // synthesized static scene: clutter and constant background, no targets
    let path = scenarios().join("exp1_test1.toml");
    let mut spec = load_scenario_file(&path).map_err(|e| e.to_string())?;
    spec.truth.targets.clear();
    spec.echo = EchoModel {
        background_law: AmplitudeLaw::Constant { value: 0.7 },
        static_clutter: StaticClutter::Random {
            reflectors: 30,
            amplitude: 25.0,
            seed: 9,
        },
        nonstatic_clutter_rate: 0.0,
        ..EchoModel::default()
    };
    let synth = Synthesizer::new(&spec, &spec.echo).map_err(|e| e.to_string())?;
    let mut fe = Frontend::new(spec.layout.len(), spec.params.kappa);
    let mut bins = 0;
    for scan in 1..=40 {
        let ps = synth
            .scan(scan, &mut scan_rng(5, scan as i64))
            .map_err(|e| e.to_string())?;
        for m in fe.process(ps).map_err(|e| e.to_string())? {
            bins += m.len();
            if m.samples.iter().any(|&s| s != 0.0) {
                return Err(format!("synthetic static scene leaks at scan {scan}"));
            }
        }
    }
    Ok(format!(
        "hand-made and synthesized static scenes, {bins} synthesized bins all exactly 0"
    ))
}

fn vote_scale() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let len = r.random_range(10..2000);
        let m: Vec<f64> = (0..len).map(|_| r.random_range(0.0..50.0)).collect();
        let alpha = if r.random_bool(0.5) {
            0.75
        } else {
            r.random_range(0.2..3.0)
        };
        let v = votes_from_profile(&RangeProfile::new(m.clone(), 1, 0), alpha).map_err(|e| e.to_string())?;
        for c in [1e-3, 1.0, 1e3] {
            let scaled: Vec<f64> = m.iter().map(|x| c * x).collect();
            let w = votes_from_profile(&RangeProfile::new(scaled, 1, 0), alpha).map_err(|e| e.to_string())?;
            for (a, b) in v.iter().zip(&w) {
                if *a != 0.0 {
                    worst = worst.max((a - b).abs() / a.abs());
                } else if *b != 0.0 {
                    return Err("zero vote became nonzero after scaling".into());
                }
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("200 profiles x 3 scales, worst relative deviation {worst:.2e}"),
    )
}

fn bilinear_exactness() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut cells = 0;
    for _ in 0..100 {
        let (nx, ny) = (r.random_range(1..40), r.random_range(1..40));
        let (dx, dy) = (r.random_range(0.01..0.5), r.random_range(0.01..0.5));
        let grid = SurveillanceGrid::new(nx, ny, dx, dy);
        let layer = Layer::from_values(nx, ny, (0..nx * ny).map(|_| r.random_range(0.0..100.0)).collect());
        for y in 0..ny {
            for x in 0..nx {
                let v = interp(&layer, &grid, (x as f64 + 0.5) * dx, (y as f64 + 0.5) * dy);
                worst = worst.max((v - layer.get(x, y)).abs());
                cells += 1;
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("{cells} cell centers, worst absolute deviation {worst:.2e}"),
    )
}

/// Every positive cell that passes the segment test, then the 8-connected
/// part of that set reachable from the peak, by repeated sweeps.
fn closure_oracle(layer: &Layer, grid: &SurveillanceGrid, peak: (usize, usize), n: usize) -> BTreeSet<(usize, usize)> {
    let mut pass = BTreeSet::new();
    for y in 0..layer.n_y {
        for x in 0..layer.n_x {
            if layer.get(x, y) > 0.0 && segment_test(layer, grid, peak, (x, y), n) {
                pass.insert((x, y));
            }
        }
    }
    let mut set = BTreeSet::from([peak]);
    loop {
        let grown: Vec<_> = pass
            .iter()
            .filter(|c| !set.contains(*c))
            .filter(|&&(x, y)| set.iter().any(|&(u, v)| x.abs_diff(u) <= 1 && y.abs_diff(v) <= 1))
            .copied()
            .collect();
        if grown.is_empty() {
            return set;
        }
        set.extend(grown);
    }
}

fn cluster_closure() -> Outcome {
    let mut r = rng(6);
    let mut peaks = 0;
    for i in 0..120 {
        let (nx, ny) = (r.random_range(3..=20), r.random_range(3..=20));
        let grid = SurveillanceGrid::new(nx, ny, 0.1, 0.1);
        let density = r.random_range(0.05..0.5);
        let raw = Layer::from_values(
            nx,
            ny,
            (0..nx * ny)
                .map(|_| {
                    if r.random_bool(density) {
                        r.random_range(0.5..10.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        let layer = smooth_layer(&raw, r.random_range(1..=3));
        let n = if r.random_bool(0.5) { 10 } else { r.random_range(2..16) };
        for peak in local_maxima(&layer) {
            peaks += 1;
            let got = grow_cluster(&layer, &grid, peak, n).cells;
            if got != closure_oracle(&layer, &grid, peak, n) {
                return Err(format!("layer {i}, peak {peak:?}: cluster differs from the closure"));
            }
        }
    }
    check(peaks >= 100, format!("120 smoothed layers up to 20x20, {peaks} peaks"))
}

/// Minimum over every injective map of the smaller set into the larger.
fn ospa_brute(a: &[Position], b: &[Position], c: f64, p: f64) -> f64 {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if l.is_empty() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..l.len()).collect();
    permutations(&mut perm, 0, &mut |perm| {
        let cost: f64 = s.iter().zip(perm).map(|(x, &j)| x.distance(&l[j]).min(c).powf(p)).sum();
        best = best.min(cost);
    });
    ((best + (l.len() - s.len()) as f64 * c.powf(p)) / l.len() as f64).powf(1.0 / p)
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

fn random_points(r: &mut ChaCha8Rng, max: usize) -> Vec<Position> {
    (0..r.random_range(0..=max))
        .map(|_| Position::new(r.random_range(0.0..3.0), r.random_range(0.0..3.0)))
        .collect()
}

fn ospa_oracle() -> Outcome {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1500 {
        let (a, b) = (random_points(&mut r, 5), random_points(&mut r, 5));
        let c = r.random_range(0.1..2.0);
        let p = [1.0, 2.0, r.random_range(1.0..4.0)][r.random_range(0..3)];
        worst = worst.max((eval::ospa(&a, &b, c, p) - ospa_brute(&a, &b, c, p)).abs());
    }
    if worst > 1e-9 {
        return Err(format!("worst deviation from brute force {worst:.2e}"));
    }
    for i in 0..1000 {
        let (x, y, z) = (
            random_points(&mut r, 5),
            random_points(&mut r, 5),
            random_points(&mut r, 5),
        );
        let d = |a: &[Position], b: &[Position]| eval::ospa(a, b, 0.7, 1.0);
        if d(&x, &x) != 0.0 || (d(&x, &y) - d(&y, &x)).abs() > 1e-12 || d(&x, &z) > d(&x, &y) + d(&y, &z) + 1e-12 {
            return Err(format!("metric axiom broken on triple {i}"));
        }
    }
    Ok(format!(
        "1500 pairs up to 5 points, worst deviation {worst:.2e}; 1000 triples satisfy the axioms"
    ))
}

/// Leave-one-out distance to the least-squares line through the other
/// points, solved from the raw normal equations.
fn loo_error(pts: &[Measurement], k: usize, floor: f64) -> f64 {
    let others: Vec<&Measurement> = pts
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, m)| m)
        .collect();
    let n = others.len() as f64;
    let st: f64 = others.iter().map(|m| m.scan as f64).sum();
    let stt: f64 = others.iter().map(|m| (m.scan as f64).powi(2)).sum();
    let det = n * stt - st * st;
    let solve = |val: &dyn Fn(&Measurement) -> f64| {
        let sv: f64 = others.iter().map(|m| val(m)).sum();
        let stv: f64 = others.iter().map(|m| m.scan as f64 * val(m)).sum();
        let slope = (n * stv - st * sv) / det;
        let icpt = (sv - slope * st) / n;
        icpt + slope * pts[k].scan as f64
    };
    let (fx, fy) = (solve(&|m| m.x), solve(&|m| m.y));
    (fx - pts[k].x).hypot(fy - pts[k].y).max(floor)
}

fn tracklet_oracle() -> Outcome {
    let params = PipelineParams::default();
    let limits = TrackletLimits::from_params(&params);
    let mut r = rng(8);
    let mut kept_total = 0;
    for i in 0..400 {
        let window: Vec<Vec<Measurement>> = (0..4)
            .map(|k| {
                (0..r.random_range(1..=4))
                    .map(|_| Measurement {
                        x: r.random_range(0.0..3.0),
                        y: r.random_range(0.0..3.0),
                        scan: 11 + k,
                        score: if r.random_bool(0.1) {
                            0.0
                        } else {
                            r.random_range(0.01..20.0)
                        },
                    })
                    .collect()
            })
            .collect();
        let mut all = Vec::new();
        for a in 0..window[0].len() {
            for b in 0..window[1].len() {
                for c in 0..window[2].len() {
                    for d in 0..window[3].len() {
                        let idx = [a, b, c, d];
                        let pts: Vec<Measurement> = idx.iter().zip(&window).map(|(&j, s)| s[j]).collect();
                        let num: f64 = pts.iter().map(|m| m.score).product();
                        let den: f64 = (0..4).map(|k| loo_error(&pts, k, params.fit_error_floor)).product();
                        all.push((num / den, idx.to_vec()));
                    }
                }
            }
        }
        all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let floor = all[0].0 * limits.relative_threshold.powi(4);
        let want: Vec<_> = all
            .into_iter()
            .filter(|(s, _)| *s > 0.0 && *s >= floor)
            .take(limits.cap)
            .collect();

        let got = enumerate_tracklets(&window, &limits).map_err(|e| e.to_string())?;
        if got.len() != want.len() {
            return Err(format!(
                "window {i}: kept {} tracklets, oracle keeps {}",
                got.len(),
                want.len()
            ));
        }
        for (t, (score, idx)) in got.iter().zip(&want) {
            let got_idx: Vec<usize> = t
                .points
                .iter()
                .zip(&window)
                .map(|(p, s)| s.iter().position(|q| q == p).unwrap())
                .collect();
            if &got_idx != idx || (t.score - score).abs() > 1e-9 * score.abs() {
                return Err(format!(
                    "window {i}: kept {got_idx:?} ({}) vs oracle {idx:?} ({score})",
                    t.score
                ));
            }
        }
        kept_total += got.len();
    }
    Ok(format!(
        "400 windows with up to 4 points per scan, {kept_total} kept tracklets match"
    ))
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Result<ScenarioSpec, String> {
    load_scenario_file(&scenarios().join(format!("{name}.toml"))).map_err(|e| e.to_string())
}

const SEED: u64 = 20240917;

/// Per-target detection, error, false alarm, OSPA and runtime limits.
fn desk_scale_limits(s: &MethodSummary, report: &MonteCarloReport) -> (bool, String) {
    let worst_wall = report.per_run.iter().map(|r| r.wall_time).fold(0.0, f64::max);
    let pd_ok = s.detection_rate.iter().all(|&d| d >= 0.85);
    let err_ok = s.mean_error.iter().all(|e| e.is_some_and(|e| e <= 0.20));
    let ok = pd_ok && err_ok && s.false_alarms_per_scan <= 0.05 && s.mean_ospa <= 0.30 && worst_wall <= 60.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    let errs: Vec<f64> = s.mean_error.iter().map(|e| e.unwrap_or(f64::NAN)).collect();
    (
        ok,
        format!(
            "P_d {}, error {} m, FA/scan {:.4}, OSPA {:.3} m, slowest run {:.1} s",
            fmt(&s.detection_rate),
            fmt(&errs),
            s.false_alarms_per_scan,
            s.mean_ospa,
            worst_wall
        ),
    )
}

struct DeskScale {
    spec: ScenarioSpec,
    report: MonteCarloReport,
}

fn desk_scale() -> Result<DeskScale, String> {
    let spec = load("exp1_test1")?;
    let report = eval::monte_carlo(&spec, 25, SEED, Method::Both).map_err(|e| e.to_string())?;
    Ok(DeskScale { spec, report })
}

fn end_to_end(d: &Result<DeskScale, String>) -> Outcome {
    let d = d.as_ref().map_err(Clone::clone)?;
    let echo = &d.spec.echo;
    let target_median = echo.target_law.median() * echo.target_gain(d.spec.params.n_s);
    let ratio = target_median / echo.background_law.median();
    if ratio < 3.0 {
        return Err(format!("target bins only {ratio:.2}x the background median"));
    }
    let s = d.report.proposed.as_ref().ok_or("no proposed metrics")?;
    let (ok, detail) = desk_scale_limits(s, &d.report);
    check(ok, format!("25 runs, target/background median {ratio:.1}x: {detail}"))
}

fn ablation(d: &Result<DeskScale, String>) -> Outcome {
    let d = d.as_ref().map_err(Clone::clone)?;
    let wins = d.report.proposed_wins.ok_or("baseline not run")?;
    let base = d.report.baseline.as_ref().ok_or("baseline not run")?;
    let prop = d.report.proposed.as_ref().ok_or("proposed not run")?;
    check(
        wins * 5 >= d.report.runs * 4,
        format!(
            "proposed below baseline in {wins}/{} runs (mean OSPA {:.3} vs {:.3} m)",
            d.report.runs, prop.mean_ospa, base.mean_ospa
        ),
    )
}

fn delta_tradeoff(d: &Result<DeskScale, String>) -> Outcome {
    let d = d.as_ref().map_err(Clone::clone)?;
    let coarse_spec = d.spec.with_cell_size(0.2).map_err(|e| e.to_string())?;
    let coarse = eval::monte_carlo(&coarse_spec, d.report.runs, SEED, Method::Both).map_err(|e| e.to_string())?;
    let ospa = |r: &MonteCarloReport| {
        r.per_run
            .iter()
            .map(|m| m.proposed.as_ref().unwrap().mean_ospa)
            .collect::<Vec<_>>()
    };
    let (fine_o, coarse_o) = (ospa(&d.report), ospa(&coarse));
    // seed-paired differences
    let diffs: Vec<f64> = fine_o.iter().zip(&coarse_o).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let se = (diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let faster = coarse.mean_wall_time < d.report.mean_wall_time;
    check(
        faster && mean <= se,
        format!(
            "wall time {:.2} s at 0.2 m vs {:.2} s at 0.1 m; OSPA {:.3} vs {:.3} m, paired difference {mean:+.3} (se {se:.3})",
            coarse.mean_wall_time,
            d.report.mean_wall_time,
            coarse_o.iter().sum::<f64>() / n,
            fine_o.iter().sum::<f64>() / n
        ),
    )
}

fn multistatic() -> Outcome {
    let spec = load("exp2_test1")?;
    let report = eval::monte_carlo(&spec, 10, SEED, Method::Proposed).map_err(|e| e.to_string())?;
    let s = report.proposed.as_ref().ok_or("no proposed metrics")?;
    let (ok, detail) = desk_scale_limits(s, &report);
    check(
        ok && s.all_detected_fraction >= 0.8 && s.detection_rate.len() == 2,
        format!(
            "10 runs, both targets in {:.1}% of scans; {detail}",
            100.0 * s.all_detected_fraction
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {detail}");
    };
    report(1, "morphology", morphology());
    report(2, "seed-order invariance", seed_order());
    report(3, "MTI static cancellation", mti_cancellation());
    report(4, "vote scale invariance", vote_scale());
    report(5, "bilinear exactness", bilinear_exactness());
    report(6, "cluster closure", cluster_closure());
    report(7, "OSPA oracle", ospa_oracle());
    report(8, "tracklet enumeration", tracklet_oracle());
    let d = desk_scale();
    report(9, "desk-scale end to end", end_to_end(&d));
    report(10, "ablation ordering", ablation(&d));
    report(11, "cell size trade-off", delta_tradeoff(&d));
    report(12, "multistatic smoke test", multistatic());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
