use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use serde_json::Value;
use uavsense::identifier::preprocess::{Label, Segment};
use uavsense::io;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavsense"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("UAVSENSE_CONFIG")
        .env_remove("UAVSENSE_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates `name` into `dir` and returns the frame file.
fn simulate(name: &str, dir: &Path, extra: &[&str]) -> PathBuf {
    let path = scenario(name);
    let mut args = vec!["simulate", "--scenario", s(&path)];
    args.extend_from_slice(extra);
    ok(&args, dir);
    dir.join("frames.bin")
}

#[test]
fn hover_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let (cap, bg) = (tmp.path().join("cap"), tmp.path().join("bg"));
    let frames = simulate("hover48.toml", &cap, &[]);
    let background = simulate("empty.toml", &bg, &[]);
    let truth = cap.join("truth.csv");

    let rows = io::read_truth(&truth).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.range_m == 48.0 && r.velocity_m_per_s == 0.0));

    ok(
        &["track", "--frames", s(&frames), "--background", s(&background), "--truth", s(&truth)],
        &cap,
    );
    let summary = json(&cap.join("summary.json"));
    assert_eq!(summary["frames"], 40);
    assert_eq!(summary["low_confidence"], false);
    assert!(summary["truth"]["mean_abs_error_bins"].as_f64().unwrap() <= 1.0, "{summary}");

    let o = ok(&["evaluate", "--track", s(&cap.join("track.csv")), "--truth", s(&truth)], &cap);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report, json(&cap.join("evaluation.json")));
    assert_eq!(report["budget"], 0.02);
    assert_eq!(report["within_budget"], true);
}

#[test]
fn ascent_truth_is_linear() {
    let tmp = tempfile::tempdir().unwrap();
    simulate("ascent.toml", tmp.path(), &["--frames", "12"]);
    let rows = io::read_truth(&tmp.path().join("truth.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    for w in rows.windows(2) {
        let dt = w[1].time_s - w[0].time_s;
        assert!((dt - 0.09).abs() < 1e-12);
        assert!((w[1].range_m - w[0].range_m - 1.5 * dt).abs() < 1e-9);
    }
    assert!(rows.iter().all(|r| r.velocity_m_per_s == 1.5));
}

#[test]
fn evaluate_identical_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    simulate("ascent.toml", tmp.path(), &["--frames", "5"]);
    let truth = io::read_truth(&tmp.path().join("truth.csv")).unwrap();
    let track = uavsense::tracker::Track {
        frame_indices: (0..5).collect(),
        timestamps_s: truth.iter().map(|r| r.time_s).collect(),
        range_bins: vec![0; 5],
        ranges_m: truth.iter().map(|r| r.range_m).collect(),
        filtered_ranges_m: vec![],
        scores: vec![0.0; 5],
    };
    let path = tmp.path().join("track.csv");
    io::write_track(&path, &track).unwrap();
    let o = ok(&["evaluate", "--track", s(&path), "--truth", s(&tmp.path().join("truth.csv"))], tmp.path());
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["mean_relative_error"], 0.0);
}

#[test]
fn noise_only_track_is_low_confidence() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = simulate("empty.toml", tmp.path(), &[]);
    ok(&["track", "--frames", s(&frames)], tmp.path());
    assert_eq!(json(&tmp.path().join("summary.json"))["low_confidence"], true);
}

#[test]
fn invalid_scenario_key_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("hover48.toml")).unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, text.replacen("frames = 40", "frames = 40\nframe_count = 40", 1)).unwrap();
    let o = run(&["simulate", "--scenario", s(&bad)], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame_count"));
}

#[test]
fn corrupt_or_missing_capture_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = simulate("empty.toml", tmp.path(), &["--frames", "2"]);
    let mut bytes = std::fs::read(&frames).unwrap();
    bytes[3] ^= 0xff;
    let corrupt = tmp.path().join("corrupt.bin");
    std::fs::write(&corrupt, &bytes).unwrap();
    let o = run(&["track", "--frames", s(&corrupt)], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["track", "--frames", s(&tmp.path().join("absent.bin"))], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["dataset", "split", "--dataset", s(&frames), "--train-fraction", "1.5"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip(["7", "7", "8"]) {
        let frames = simulate("hover48.toml", dir, &["--frames", "12", "--seed", seed]);
        ok(&["track", "--frames", s(&frames), "--seed", seed], dir);
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    for f in ["frames.bin", "truth.csv", "track.csv", "summary.json"] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f}");
    }
    assert_ne!(read(&dirs[0], "frames.bin"), read(&dirs[2], "frames.bin"));
}

#[test]
fn dataset_train_identify() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("small.toml");
    std::fs::write(
        &config,
        "schema_version = 1\n[dataset]\nnoise_captures = 4\nbackground_frames = 6\n[train]\nepochs = 2\n",
    )
    .unwrap();
    let data = root.join("data");
    ok(&["dataset", "gen", "--uav", "5", "--other", "5", "--config", s(&config), "--seed", "3"], &data);
    let meta = json(&data.join("meta.json"));
    assert_eq!(meta["train"]["total"], 7);
    assert_eq!(meta["test"]["total"], 3);

    let o = ok(&["dataset", "stats", "--dataset", s(&data.join("train.bin"))], root);
    let train_stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(train_stats["total"], 7);
    let all = root.join("all.bin");
    let mut segs = io::read_dataset(&data.join("train.bin")).unwrap();
    segs.extend(io::read_dataset(&data.join("test.bin")).unwrap());
    io::write_dataset(&all, &segs).unwrap();
    let o = ok(&["dataset", "stats", "--dataset", s(&all)], root);
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap()["uav_fraction"], 0.5);

    let model_dir = root.join("model");
    ok(
        &["train", "--dataset", s(&data.join("train.bin")), "--hidden", "6", "--config", s(&config)],
        &model_dir,
    );
    let model = model_dir.join("model.bin");
    let loss = std::fs::read_to_string(model_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let out = root.join("id");
    ok(&["identify", "--model", s(&model), "--dataset", s(&data.join("test.bin"))], &out);
    let metrics = json(&out.join("metrics.json"));
    for k in ["accuracy", "precision", "recall", "f1"] {
        assert!(metrics["metrics"][k].is_number(), "{k}: {metrics}");
    }
    assert_eq!(metrics["classified"], 3);
    let labels = std::fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 4);

    // Segments narrower than the model's input.
    let narrow: Vec<Segment> = (0..2)
        .map(|i| Segment {
            data: Array2::zeros((40, 64)),
            label: if i == 0 { Label::Uav } else { Label::Other },
            max_folding_result: 0.0,
            passed_filter: true,
            start_frame: 0,
            provenance: String::new(),
        })
        .collect();
    let narrow_path = root.join("narrow.bin");
    io::write_dataset(&narrow_path, &narrow).unwrap();
    let o = run(&["identify", "--model", s(&model), "--dataset", s(&narrow_path)], &out);
    assert_eq!(o.status.code(), Some(1));

    // Nothing survives an unreachable threshold.
    let noise = simulate("empty.toml", &root.join("noise"), &["--frames", "40"]);
    ok(&["identify", "--model", s(&model), "--frames", s(&noise), "--threshold", "1e12"], &out);
    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["verdict"], "no-detection");
    assert_eq!(metrics["classified"], 0);
}
