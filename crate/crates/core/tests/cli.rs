use std::path::Path;
use std::process::{Command, Output};

use mctrack::geometry::{GroundGrid, ImageSize};
use mctrack::metrics::MotReport;
use mctrack::sim::{ring_rig, AgentScript, NoiseModel, RigSpec, Scenario};
use mctrack::Point2;

fn mctrack(args: &[&str], data_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mctrack"))
        .args(args)
        .env("MCTRACK_DATA_DIR", data_dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two walkers seen by two small cameras; cheap enough to record to disk.
fn tiny_scenario(dir: &Path) -> String {
    let s = Scenario {
        name: "tiny".into(),
        fps: 15.0,
        duration: 40,
        seed: 5,
        grid: GroundGrid::new(Point2::new(0.0, 0.0), 0.05, 60, 60).unwrap(),
        rig: RigSpec::Cameras(ring_rig(2, [1.5, 1.5], 4.0, 2.5, 120.0, ImageSize::new(160, 120))),
        agents: vec![
            AgentScript {
                id: 1,
                waypoints: vec![[0.5, 0.5], [2.5, 0.5], [2.5, 2.5]],
                speed: 1.0,
                looped: true,
                enter: 0,
                exit: None,
                offset: 0.0,
                color: [200, 40, 40],
            },
            AgentScript {
                id: 2,
                waypoints: vec![[0.5, 2.5], [2.5, 2.5]],
                speed: 0.8,
                looped: false,
                enter: 5,
                exit: None,
                offset: 0.0,
                color: [40, 40, 200],
            },
        ],
        noise: NoiseModel::default(),
        disk_radius: 0.2,
        max_speed: 4.0,
        base_dir: None,
    };
    let path = dir.join("tiny.json");
    s.save(&path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mctrack(&["--help"], tmp.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["simulate", "train-glimpse", "track", "eval", "bench", "all", "scenarios"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let tmp = tempfile::tempdir().unwrap();
    // argument errors and invalid overrides are configuration failures
    assert_eq!(code(&mctrack(&["track", "--fusion", "median"], tmp.path())), 2);
    let o = mctrack(&["track", "--scenario", "clean_4cam", "--gate-radius", "-1"], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = mctrack(&["track", "--scenario", "no_such_scenario"], tmp.path());
    assert!(matches!(code(&o), 2 | 3), "{}", stderr(&o));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = \"clean_4cam\"\n[tracker]\ngate = 1.0\n").unwrap();
    let o = mctrack(&["--config", cfg.to_str().unwrap(), "track"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("gate"), "{}", stderr(&o));

    // missing and malformed inputs are data failures
    let missing = tmp.path().join("missing.csv");
    let o = mctrack(
        &["eval", "--gt", missing.to_str().unwrap(), "--tracks", missing.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "frame,id,x_m,y_m,matched\n0,1,zero,0,1\n").unwrap();
    let o = mctrack(
        &["eval", "--gt", bad.to_str().unwrap(), "--tracks", bad.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(tmp.path());
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, format!("scenario = {scenario:?}\nframes = 10\n[eval]\niou_threshold = 2.0\n")).unwrap();
    let out = tmp.path().join("run");
    let args = ["--config", cfg.to_str().unwrap(), "track", "--out", out.to_str().unwrap()];
    assert_eq!(code(&mctrack(&args, tmp.path())), 2, "file value is invalid");
    let mut fixed = args.to_vec();
    fixed.extend(["--iou-threshold", "0.5"]);
    let o = mctrack(&fixed, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // the file's frame limit still applies
    let tracks = std::fs::read_to_string(out.join("tracks.csv")).unwrap();
    assert!(tracks
        .lines()
        .skip(1)
        .all(|l| l.split(',').next().unwrap().parse::<u64>().unwrap() < 10));
}

#[test]
fn data_dir_env_sets_default_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(tmp.path());
    let o = mctrack(&["track", "--scenario", &scenario, "--frames", "5"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "tracks.csv",
        "detections.csv",
        "ground_truth.csv",
        "report.json",
        "report.txt",
        "timing.json",
        "tidy.csv",
    ] {
        assert!(tmp.path().join("track").join(f).exists(), "missing {f}");
    }
}

#[test]
fn recorded_frames_track_like_the_live_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(tmp.path());
    let rec = tmp.path().join("rec");
    let o = mctrack(
        &["simulate", "--scenario", &scenario, "--out", rec.to_str().unwrap(), "--rgb"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(rec.join("heatmaps").join("000000_0.omap").exists());
    let ppm = std::fs::read(rec.join("rgb").join("000039_1.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n160 120"), "not a binary PPM");

    let live = tmp.path().join("live");
    let replay = tmp.path().join("replay");
    let o = mctrack(
        &["track", "--scenario", &scenario, "--color", "on", "--out", live.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = mctrack(
        &[
            "track",
            "--frames-dir",
            rec.to_str().unwrap(),
            "--color",
            "on",
            "--out",
            replay.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = |d: &Path| -> MotReport { serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap() };
    let (a, b) = (report(&live), report(&replay));
    // heatmaps are stored as f32, so only the outcome must agree
    assert_eq!((a.ids, a.fp, a.fn_), (b.ids, b.fp, b.fn_));
    assert!((a.mota - b.mota).abs() < 1e-9);
    assert_eq!(
        std::fs::read_to_string(live.join("ground_truth.csv")).unwrap(),
        std::fs::read_to_string(replay.join("ground_truth.csv")).unwrap()
    );

    // eval on the written CSVs reproduces the report
    let o = mctrack(
        &[
            "eval",
            "--gt",
            live.join("ground_truth.csv").to_str().unwrap(),
            "--tracks",
            live.join("tracks.csv").to_str().unwrap(),
            "--json",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again: MotReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(again, a);
}

#[test]
fn scenarios_subcommand_exports_builtins() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mctrack(&["scenarios"], tmp.path());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).lines().collect::<Vec<_>>(),
        ["clean_4cam", "noisy_4cam", "bench_4cam"]
    );
    let o = mctrack(&["scenarios", "clean_4cam"], tmp.path());
    let s = Scenario::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(s, mctrack::sim::builtin("clean_4cam").unwrap());
}

#[test]
fn train_glimpse_writes_a_loadable_model() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.json");
    let o = mctrack(
        &[
            "train-glimpse",
            "--scenario",
            "noisy_4cam",
            "--frames",
            "60",
            "--epochs",
            "20",
            "--out",
            model.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = mctrack::glimpse::GlimpseClassifier::load(&model).unwrap();
    assert_eq!(m.weights.len(), m.config.feature_len());
    let report: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stdout).split("\nwrote").next().unwrap()).unwrap();
    assert!(report["test_samples"].as_u64().unwrap() > 0);
}
