use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ROOM: &str = r#"
name = "room"
scan_count = 12
scan_period = 0.45

[grid]
n_x = 60
n_y = 60
delta_x = 0.1
delta_y = 0.1

[sensors]
mode = "monostatic"
positions = [[3.0, 0.0], [6.0, 3.0], [3.0, 6.0], [0.0, 3.0]]

[[targets]]
waypoints = [{ scan = 1, x = 1.5, y = 2.0 }, { scan = 12, x = 4.0, y = 3.5 }]

[params]
preroll_scans = 30
"#;

fn uwb_tbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwb-tbd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn room_file(dir: &Path) -> String {
    let path = dir.join("room.toml");
    fs::write(&path, ROOM).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_room(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let scenario = room_file(dir);
    let out = dir.join(out);
    let mut args = vec![
        "--scenario",
        &scenario,
        "--out-dir",
        out.to_str().unwrap(),
        "--runs",
        "2",
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    uwb_tbd(&args)
}

#[test]
fn writes_the_standard_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_room(dir.path(), "out", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trajectories.csv", "metrics.json", "ospa.csv", "timing.txt"] {
        assert!(dir.path().join("out").join(name).is_file(), "{name} missing");
    }
    for name in ["profiles.bin", "maps.bin", "volumes.csv", "points.csv"] {
        assert!(!dir.path().join("out").join(name).exists(), "{name} written unasked");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("proposed") && stdout.contains("simple-baseline"));

    let ospa = fs::read_to_string(dir.path().join("out/ospa.csv")).unwrap();
    assert_eq!(ospa.lines().next(), Some("run,scan,proposed,simple_baseline"));
    assert_eq!(ospa.lines().count(), 1 + 2 * 12);
    let metrics = fs::read_to_string(dir.path().join("out/metrics.json")).unwrap();
    assert!(metrics.contains("\"scenario\": \"room\""));
    assert!(!metrics.contains("wall_time"));
}

#[test]
fn dump_flags_add_files() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["--dump-profiles", "--dump-maps", "--dump-volumes", "--dump-points"];
    let out = run_room(dir.path(), "out", &flags);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["profiles.bin", "maps.bin", "volumes.csv", "points.csv"] {
        let meta = fs::metadata(dir.path().join("out").join(name)).unwrap();
        assert!(meta.len() > 0, "{name} empty");
    }
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_room(dir.path(), "a", &["--workers", "1"]).status.success());
    assert!(run_room(dir.path(), "b", &["--workers", "2"]).status.success());
    for name in ["metrics.json", "trajectories.csv", "ospa.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn method_selection_limits_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_room(dir.path(), "out", &["--method", "proposed"]);
    assert!(out.status.success());
    let metrics = fs::read_to_string(dir.path().join("out/metrics.json")).unwrap();
    assert!(metrics.contains("\"baseline\": null"));
    assert!(metrics.contains("\"proposed_wins\": null"));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_dir = out_dir.to_str().unwrap();

    let missing = uwb_tbd(&["--scenario", "no_such_scenario", "--out-dir", out_dir]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no_such_scenario"));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, ROOM.replace("n_x = 60", "n_x = \"sixty\"")).unwrap();
    let out = uwb_tbd(&["--scenario", broken.to_str().unwrap(), "--out-dir", out_dir]);
    assert!(!out.status.success());

    let scenario = room_file(dir.path());
    for extra in [["--runs", "0"], ["--workers", "0"], ["--delta", "-0.1"]] {
        let mut args = vec!["--scenario", scenario.as_str(), "--out-dir", out_dir];
        args.extend_from_slice(&extra);
        assert!(!uwb_tbd(&args).status.success(), "{extra:?} accepted");
    }
}

#[test]
fn bundled_scenario_runs_at_a_coarser_cell_size() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = uwb_tbd(&[
        "--scenario",
        "exp1_test1",
        "--delta",
        "0.2",
        "--runs",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--dump-maps",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let maps = fs::read(out_dir.join("maps.bin")).unwrap();
    let header_end = maps.iter().position(|&b| b == b'\n').unwrap();
    let header = String::from_utf8_lossy(&maps[..header_end]);
    assert!(header.contains("n_x=75") && header.contains("n_y=75"), "{header}");
}
