use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use log::info;
use rayon::prelude::*;
use uwb_tbd::dump::{self, PointRecord, TrajectoryRecord, VoxelRecord};
use uwb_tbd::eval::{self, MonteCarloReport, RunMetrics};
use uwb_tbd::pipeline::{self, DumpSelection, Method, Recorded, Track};
use uwb_tbd::scenario::{load_scenario, ScenarioSpec};

const BUNDLED: &[(&str, &str)] = &[
    ("exp1_test1", include_str!("../../../scenarios/exp1_test1.toml")),
    ("exp1_test2", include_str!("../../../scenarios/exp1_test2.toml")),
    ("exp2_test1", include_str!("../../../scenarios/exp2_test1.toml")),
    ("exp2_test2", include_str!("../../../scenarios/exp2_test2.toml")),
];

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Proposed,
    SimpleBaseline,
    Both,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::SimpleBaseline => Method::SimpleBaseline,
            MethodArg::Both => Method::Both,
        }
    }
}

/// Track-before-detect runs over simulated UWB radar sensor networks.
#[derive(Debug, Parser)]
#[command(name = "uwb-tbd", version)]
struct Args {
    /// Scenario file, or one of the bundled names (exp1_test1, exp1_test2,
    /// exp2_test1, exp2_test2).
    #[arg(long)]
    scenario: String,

    /// Monte Carlo runs.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,

    /// Base seed; run r uses a seed derived from (seed, r).
    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,

    /// Override the grid cell size (m); the grid keeps its physical extent.
    #[arg(long)]
    delta: Option<f64>,

    /// Worker threads; defaults to the number of available cores.
    #[arg(long)]
    workers: Option<usize>,

    /// Write raw range profiles (binary, one header line per record).
    #[arg(long)]
    dump_profiles: bool,

    /// Write per-sensor, fused and thresholded score maps.
    #[arg(long)]
    dump_maps: bool,

    /// Write the opened window volumes as voxel lists.
    #[arg(long)]
    dump_volumes: bool,

    /// Write extracted point measurements.
    #[arg(long)]
    dump_points: bool,

    /// Disable score-map clutter suppression even if the scenario enables it.
    #[arg(long)]
    no_clutter_suppression: bool,
}

fn resolve_scenario(arg: &str) -> Result<ScenarioSpec> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?
    } else if let Some((_, text)) = BUNDLED.iter().find(|(name, _)| *name == arg) {
        text.to_string()
    } else {
        bail!("scenario {arg:?} is neither a readable file nor a bundled scenario");
    };
    load_scenario(&text).with_context(|| format!("loading scenario {arg}"))
}

struct RunResult {
    metrics: RunMetrics,
    proposed: Vec<Track>,
    proposed_raw: Vec<Track>,
    baseline: Vec<Track>,
    recorded: Recorded,
}

fn trajectory_records(results: &[RunResult]) -> Vec<TrajectoryRecord> {
    let mut out = Vec::new();
    for r in results {
        let run = r.metrics.run;
        let sets: [(&str, &[Track], bool); 3] = [
            ("proposed", &r.proposed, true),
            ("proposed-raw", &r.proposed_raw, false),
            ("simple-baseline", &r.baseline, true),
        ];
        for (method, tracks, smoothed) in sets {
            for t in tracks {
                out.extend(t.points.iter().map(|p| TrajectoryRecord {
                    run,
                    method: method.to_string(),
                    track_id: t.id,
                    scan: p.scan,
                    x: p.x,
                    y: p.y,
                    smoothed,
                }));
            }
        }
    }
    out
}

fn ospa_csv(report: &MonteCarloReport, scan_count: usize) -> String {
    let mut s = String::from("run,scan,proposed,simple_baseline\n");
    let cell = |m: Option<&Vec<f64>>, k: usize| m.map(|v| v[k].to_string()).unwrap_or_default();
    for r in &report.per_run {
        let prop = r.proposed.as_ref().map(|m| &m.ospa_series);
        let base = r.baseline.as_ref().map(|m| &m.ospa_series);
        for k in 0..scan_count {
            let _ = writeln!(s, "{},{},{},{}", r.run, k + 1, cell(prop, k), cell(base, k));
        }
    }
    s
}

fn timing_table(report: &MonteCarloReport) -> String {
    let mut s = format!(
        "{:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "run", "synth", "frontend", "voting", "volume", "points", "tracking", "baseline", "wall"
    );
    let mut row = |label: String, t: &pipeline::StageTimes, wall: f64| {
        let _ = writeln!(
            s,
            "{label:>5} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            t.synth, t.frontend, t.voting, t.volume, t.points, t.tracking, t.baseline, wall
        );
    };
    for r in &report.per_run {
        row(r.run.to_string(), &r.times, r.wall_time);
    }
    row("mean".into(), &report.mean_times, report.mean_wall_time);
    s
}

fn summary_table(report: &MonteCarloReport) -> String {
    let mut s = format!(
        "scenario {} ({} runs, seed {})\n",
        report.scenario, report.runs, report.base_seed
    );
    let _ = writeln!(
        s,
        "{:<16} {:>24} {:>24} {:>8} {:>10} {:>8}",
        "method", "P_d per target", "mean error (m)", "FA/scan", "mean OSPA", "std err"
    );
    for (name, m) in [("proposed", &report.proposed), ("simple-baseline", &report.baseline)] {
        let Some(m) = m else { continue };
        let pd = m
            .detection_rate
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
            .join(" ");
        let err = m
            .mean_error
            .iter()
            .map(|v| v.map_or("-".into(), |e| format!("{e:.3}")))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            s,
            "{name:<16} {pd:>24} {err:>24} {:>8.3} {:>10.3} {:>8.3}",
            m.false_alarms_per_scan, m.mean_ospa, m.ospa_std_error
        );
    }
    if let Some(w) = report.proposed_wins {
        let _ = writeln!(s, "proposed OSPA below baseline in {w}/{} runs", report.runs);
    }
    s
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let mut spec = resolve_scenario(&args.scenario)?;
    if let Some(delta) = args.delta {
        spec = spec.with_cell_size(delta).context("applying --delta")?;
    }
    if args.no_clutter_suppression {
        spec.params.clutter_suppression = false;
    }
    let method = Method::from(args.method);
    let dumps = DumpSelection {
        profiles: args.dump_profiles,
        maps: args.dump_maps,
        volumes: args.dump_volumes,
        points: args.dump_points,
    };

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating output directory {}", args.out_dir.display()))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building worker pool")?;

    info!(
        "scenario {} ({}x{} cells of {} m), {} runs, method {:?}",
        spec.name, spec.grid.n_x, spec.grid.n_y, spec.grid.delta_x, args.runs, method
    );
    let start = Instant::now();
    let geometry = pipeline::geometry_for(&spec);
    let results: Vec<RunResult> = pool.install(|| {
        (0..args.runs as usize)
            .into_par_iter()
            .map(|r| {
                let (metrics, out) = eval::evaluate_run(&spec, &geometry, r, args.seed, method, dumps)?;
                info!("run {r} done in {:.2} s", metrics.wall_time);
                Ok(RunResult {
                    metrics,
                    proposed: out.proposed,
                    proposed_raw: out.proposed_raw,
                    baseline: out.baseline,
                    recorded: out.recorded,
                })
            })
            .collect::<uwb_tbd::Result<_>>()
    })?;
    info!("batch finished in {:.2} s", start.elapsed().as_secs_f64());

    let out = |name: &str| args.out_dir.join(name);
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        dump::write_atomic(&out(name), bytes).with_context(|| format!("writing {}", out(name).display()))
    };

    write(
        "trajectories.csv",
        dump::trajectories_csv(&trajectory_records(&results)).as_bytes(),
    )?;
    if dumps.profiles {
        let recs: Vec<_> = results
            .iter()
            .flat_map(|r| r.recorded.profiles.iter().map(move |p| (r.metrics.run, p.clone())))
            .collect();
        write("profiles.bin", &dump::encode_profiles(&recs, spec.params.sample_period))?;
    }
    if dumps.maps {
        let recs: Vec<_> = results
            .iter()
            .flat_map(|r| r.recorded.maps.iter().map(move |m| (r.metrics.run, m.clone())))
            .collect();
        write("maps.bin", &dump::encode_score_maps(&recs))?;
    }
    if dumps.volumes {
        let recs: Vec<_> = results
            .iter()
            .flat_map(|r| {
                r.recorded.voxels.iter().map(|v| VoxelRecord {
                    run: r.metrics.run,
                    ..*v
                })
            })
            .collect();
        write("volumes.csv", dump::voxels_csv(&recs).as_bytes())?;
    }
    if dumps.points {
        let recs: Vec<_> = results
            .iter()
            .flat_map(|r| {
                r.recorded.points.iter().map(|p| PointRecord {
                    run: r.metrics.run,
                    ..*p
                })
            })
            .collect();
        write("points.csv", dump::points_csv(&recs).as_bytes())?;
    }

    let report = eval::summarize(&spec, args.seed, results.into_iter().map(|r| r.metrics).collect());
    write("metrics.json", report.to_json()?.as_bytes())?;
    write("ospa.csv", ospa_csv(&report, spec.truth.scan_count).as_bytes())?;
    let timing = timing_table(&report);
    write("timing.txt", timing.as_bytes())?;

    print!("{}", summary_table(&report));
    print!("{timing}");
    Ok(())
}
