use std::path::Path;
use std::process::{Command, Output};

use photoba::graph::parse_graph_dump;
use photoba::io::parse_basin_grid;

fn photoba(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photoba"))
        .args(args)
        .env_remove("PHOTOBA_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = photoba(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    photoba(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--builtin", "box-room", "-o", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn refine_reduces_ate_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = tmp.path().join("out");
    synth(
        &ds,
        &[
            "--sigma-t",
            "0.05",
            "--sigma-r-deg",
            "2",
            "--seed",
            "1",
            "--sensors",
            "rgbd",
        ],
    );
    let stdout = ok(&["refine", p(&ds.join("manifest.toml")), "-o", p(&out)]);
    assert!(stdout.contains("ate "));
    for f in ["trajectory_refined.txt", "report.txt", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let r = report(&out);
    let (a, b) = (r["initial_ate"].as_f64().unwrap(), r["final_ate"].as_f64().unwrap());
    assert!(b <= 0.1 * a, "{a} -> {b}");
    assert!(r["edges"].as_u64().unwrap() > 0);
    for level in r["levels"].as_array().unwrap() {
        let trace: Vec<f64> = level["trace"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("initial_ate") && text.contains("# config"));
    let eval = ok(&[
        "evaluate",
        p(&out.join("trajectory_refined.txt")),
        p(&ds.join("groundtruth.txt")),
    ]);
    assert!(eval.starts_with("ate_rmse "));
}

#[test]
fn coarse_to_fine_rescues_a_bad_guess() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth(
        &ds,
        &[
            "--sigma-t",
            "0.1",
            "--sigma-r-deg",
            "3.4377467707849396",
            "--seed",
            "2",
            "--sensors",
            "rgbd",
        ],
    );
    let m = ds.join("manifest.toml");
    let ratio = |levels: &str| {
        let out = tmp.path().join(format!("out{levels}"));
        ok(&["refine", p(&m), "-o", p(&out), "--levels", levels]);
        let r = report(&out);
        r["final_ate"].as_f64().unwrap() / r["initial_ate"].as_f64().unwrap()
    };
    let three = ratio("3");
    let one = ratio("1");
    assert!(three < 0.2, "3 levels: {three}");
    assert!(one > 0.5, "finest only: {one}");
}

#[test]
fn single_frame_is_under_constrained() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth(&ds, &["--poses", "2", "--sensors", "rgbd"]);
    for name in ["trajectory.txt", "groundtruth.txt"] {
        let path = ds.join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut kept: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
        kept.extend(text.lines().find(|l| !l.starts_with('#')));
        std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    }
    let out = tmp.path().join("out");
    assert_eq!(code(&["refine", p(&ds.join("manifest.toml")), "-o", p(&out)]), 5);
    assert!(!out.join("report.txt").exists());
}

#[test]
fn error_families_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&["refine", p(&missing)]), 3);

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "trajectory = \"t.txt\"\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&["refine", p(&bad)]), 4);

    let ds = tmp.path().join("ds");
    synth(&ds, &["--poses", "3", "--sensors", "rgbd"]);
    let m = ds.join("manifest.toml");
    assert_eq!(code(&["refine", p(&m), "--omega", "1,2"]), 2);
    assert_eq!(code(&["refine", p(&m), "--huber-delta", "-1"]), 2);
    assert_eq!(
        code(&[
            "selfalign",
            p(&m),
            "-o",
            p(&tmp.path().join("g")),
            "--max-rotation",
            "3.5"
        ]),
        2
    );

    let traj = tmp.path().join("t.txt");
    std::fs::write(&traj, "0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n").unwrap();
    assert_eq!(code(&["evaluate", p(&traj), p(&ds.join("groundtruth.txt"))]), 4);
    let far = tmp.path().join("far.txt");
    std::fs::write(&far, "100 0 0 0 0 0 0 1\n").unwrap();
    assert_eq!(code(&["evaluate", p(&far), p(&ds.join("groundtruth.txt"))]), 6);

    std::fs::remove_file(ds.join("rgbd/depth").join(photoba::io::image_file_name(0.1))).unwrap();
    assert_eq!(code(&["refine", p(&m)]), 3);
}

#[test]
fn evaluate_identical_trajectories_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth(&ds, &["--poses", "4", "--sensors", "rgbd"]);
    let gt = ds.join("groundtruth.txt");
    let v: serde_json::Value = serde_json::from_str(&ok(&["evaluate", p(&gt), p(&gt), "--json"])).unwrap();
    assert!(v["ate_rmse"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["pairs"].as_u64(), Some(4));
}

#[test]
fn graph_dump_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth(&ds, &["--poses", "5"]);
    let text = ok(&["graph-dump", p(&ds.join("manifest.toml"))]);
    assert!(text.contains("# sensor rgbd") && text.contains("# sensor lidar"));
    let edges = parse_graph_dump(&text).unwrap();
    assert!(edges.len() >= 8);
    let strict = ok(&[
        "graph-dump",
        p(&ds.join("manifest.toml")),
        "--max-translation",
        "0.05",
        "--no-sequential",
    ]);
    assert!(parse_graph_dump(&strict).unwrap().is_empty());
}

#[test]
fn selfalign_writes_a_reproducible_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth(&ds, &["--poses", "3"]);
    let m = ds.join("manifest.toml");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "selfalign",
            p(&m),
            "-o",
            p(&out),
            "--frame",
            "1",
            "--grid",
            "2",
            "--max-translation",
            "0.05",
            "--max-rotation",
            "0.05",
            "--seed",
            "3",
        ]);
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.txt");
    assert_eq!(a, run("b.txt"));
    let grid = parse_basin_grid(&a).unwrap();
    assert_eq!(grid.panels.len(), 4);
    for panel in &grid.panels {
        // zero perturbation
        assert!(panel.values[0][0] <= -6.0, "{}: {}", panel.mode, panel.values[0][0]);
    }
}

#[test]
fn refine_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth(
        &ds,
        &["--poses", "5", "--sigma-t", "0.03", "--sigma-r-deg", "1", "--seed", "4"],
    );
    let m = ds.join("manifest.toml");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&["--threads", "4", "refine", p(&m), "-o", p(&out), "--fusion", "coupled"]);
        std::fs::read(out.join("trajectory_refined.txt")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
