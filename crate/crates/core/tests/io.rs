use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use uavsense::echo::{synthesize_capture, Emitter, Frame, SceneSpec};
use uavsense::identifier::preprocess::{Label, Segment, Threshold};
use uavsense::identifier::{LstmDetector, TrainConfig};
use uavsense::io::{self, ModelManifest, ScenarioFile, TruthRow, FRAME_HEADER_BYTES};
use uavsense::tracker::Track;
use uavsense::{Error, RadarConfig, TrajectorySpec, UavConfig};

fn small_radar() -> RadarConfig {
    RadarConfig {
        chirps_per_frame: 16,
        samples_per_chirp: 32,
        adc_rate_hz: 6.25e6 / 8.0,
        frames_per_capture: 3,
        ..RadarConfig::default()
    }
}

fn capture(radar: &RadarConfig) -> Vec<Frame> {
    let scene = SceneSpec::new(
        vec![Emitter::Uav {
            uav: UavConfig::default(),
            trajectory: TrajectorySpec::hover(6.0, 1.0),
        }],
        0.3,
        9,
    );
    synthesize_capture(&scene, radar, 3).unwrap()
}

#[test]
fn frames_roundtrip_at_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let radar = small_radar();
    let frames = capture(&radar);
    io::write_frames(&path, &radar, &frames).unwrap();

    let len = std::fs::metadata(&path).unwrap().len() as usize;
    assert_eq!(len, FRAME_HEADER_BYTES + 3 * 16 * 32 * 8);

    let (header, back) = io::read_frames(&path).unwrap();
    assert_eq!(header.frames, 3);
    assert_eq!(header.radar().unwrap().chirps_per_frame, 16);
    assert_eq!(back.len(), frames.len());
    for (a, b) in frames.iter().zip(&back) {
        assert_eq!(a.frame_index, b.frame_index);
        assert!((a.start_time_s - b.start_time_s).abs() < 1e-12);
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            assert!((x - y).norm() <= 1e-6 * x.norm().max(1.0));
        }
    }
}

#[test]
fn corrupt_header_and_truncated_payload_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let radar = small_radar();
    let frames = capture(&radar);
    let good = dir.path().join("good.bin");
    io::write_frames(&good, &radar, &frames).unwrap();
    let bytes = std::fs::read(&good).unwrap();

    let bad_magic = dir.path().join("magic.bin");
    let mut b = bytes.clone();
    b[10] = b'X';
    std::fs::write(&bad_magic, &b).unwrap();
    let err = io::read_frames(&bad_magic).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");

    let short = dir.path().join("short.bin");
    std::fs::write(&short, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(io::read_frames(&short).unwrap_err(), Error::Format { .. }));

    let stub = dir.path().join("stub.bin");
    std::fs::write(&stub, b"{}").unwrap();
    assert!(io::read_frames(&stub).unwrap_err().is_validation());

    let missing = dir.path().join("nope.bin");
    assert!(matches!(io::read_frames(&missing).unwrap_err(), Error::Io { .. }));
}

#[test]
fn schema_version_checked() {
    let dir = tempfile::tempdir().unwrap();
    let radar = small_radar();
    let path = dir.path().join("v2.bin");
    io::write_frames(&path, &radar, &capture(&radar)).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let head = String::from_utf8(bytes[..FRAME_HEADER_BYTES].to_vec()).unwrap();
    let patched = head.replacen("\"schema_version\":1", "\"schema_version\":2", 1);
    assert_ne!(head, patched);
    bytes[..FRAME_HEADER_BYTES].copy_from_slice(patched.as_bytes());
    std::fs::write(&path, &bytes).unwrap();
    let msg = io::read_frames(&path).unwrap_err().to_string();
    assert!(msg.contains("schema_version 2"), "{msg}");
}

#[test]
fn int16_capture_layout() {
    let dir = tempfile::tempdir().unwrap();
    let radar = small_radar();
    let path = dir.path().join("raw.bin");
    let n = radar.chirps_per_frame * radar.samples_per_chirp;
    let mut f = std::fs::File::create(&path).unwrap();
    for frame in 0..2i16 {
        for i in 0..n {
            let re = (i % 1000) as i16 - 500;
            let im = frame * 100 - 7;
            f.write_all(&re.to_le_bytes()).unwrap();
            f.write_all(&im.to_le_bytes()).unwrap();
        }
    }
    drop(f);
    let frames = io::read_int16_frames(&path, &radar).unwrap();
    assert_eq!(frames.len(), 2);
    let s = radar.samples_per_chirp;
    assert_eq!(frames[1].samples[[2, 3]], Complex64::new(((2 * s + 3) % 1000) as f64 - 500.0, 93.0));
    assert!((frames[1].start_time_s - radar.frame_duration_s()).abs() < 1e-12);

    let partial = dir.path().join("partial.bin");
    std::fs::write(&partial, vec![0u8; 4 * n + 4]).unwrap();
    assert!(io::read_int16_frames(&partial, &radar).is_err());
}

#[test]
fn radar_and_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let radar = small_radar();
    let rpath = dir.path().join("radar.toml");
    io::save_radar_config(&rpath, &radar).unwrap();
    assert_eq!(io::load_radar_config(&rpath).unwrap(), radar);

    let scenario = ScenarioFile {
        schema_version: 1,
        frames: Some(12),
        snr_db: Some(3.0),
        scene: SceneSpec::new(
            vec![Emitter::Uav {
                uav: UavConfig::default(),
                trajectory: TrajectorySpec::constant_velocity(30.0, -1.5, 2.0),
            }],
            0.0,
            4,
        ),
    };
    let spath = dir.path().join("scene.toml");
    io::save_scenario(&spath, &scenario).unwrap();
    assert_eq!(io::load_scenario(&spath).unwrap(), scenario);

    let text = std::fs::read_to_string(&spath).unwrap();
    std::fs::write(&spath, text.replacen("frames = 12", "frames = 12\nframe_count = 3", 1)).unwrap();
    let err = io::load_scenario(&spath).unwrap_err();
    assert!(err.is_validation() && err.to_string().contains("frame_count"), "{err}");
}

#[test]
fn track_and_truth_csv() {
    let dir = tempfile::tempdir().unwrap();
    let track = Track {
        frame_indices: vec![0, 1, 2],
        timestamps_s: vec![0.0, 0.09, 0.18],
        range_bins: vec![131, 131, 132],
        ranges_m: vec![48.0, 48.0, 48.4],
        filtered_ranges_m: vec![],
        scores: vec![1.5, 2.25, 0.75],
    };
    let tpath = dir.path().join("track.csv");
    io::write_track(&tpath, &track).unwrap();
    let rows = io::read_track(&tpath).unwrap();
    assert_eq!(rows, io::track_rows(&track));
    // Unfiltered tracks repeat the DP range.
    assert_eq!(rows[2].filtered_range_m, 48.4);
    let header = std::fs::read_to_string(&tpath).unwrap();
    assert!(header.starts_with("frame_index,time_s,range_bin,range_m,filtered_range_m,score"));

    let truth = vec![
        TruthRow { time_s: 0.045, range_m: 40.0, velocity_m_per_s: 1.5 },
        TruthRow { time_s: 0.135, range_m: 40.135, velocity_m_per_s: 1.5 },
    ];
    let gpath = dir.path().join("truth.csv");
    io::write_truth(&gpath, &truth).unwrap();
    assert_eq!(io::read_truth(&gpath).unwrap(), truth);
}

fn segment(label: Label, seed: f64) -> Segment {
    Segment {
        data: Array2::from_shape_fn((4, 6), |(i, j)| (seed + i as f64 * 0.25 + j as f64 * 0.125).sin().abs()),
        label,
        max_folding_result: 2.5 + seed,
        passed_filter: seed > 0.5,
        start_frame: 40,
        provenance: format!("fixture {seed}"),
    }
}

#[test]
fn dataset_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    let segs = vec![segment(Label::Uav, 0.0), segment(Label::Other, 1.0), segment(Label::Unlabeled, 2.0)];
    io::write_dataset(&path, &segs).unwrap();
    let back = io::read_dataset(&path).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in segs.iter().zip(&back) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.passed_filter, b.passed_filter);
        assert_eq!(a.provenance, b.provenance);
        assert_eq!(a.start_frame, b.start_frame);
        assert_eq!(a.max_folding_result, b.max_folding_result);
        assert_eq!(a.data.dim(), b.data.dim());
        assert!(a.data.iter().zip(b.data.iter()).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(io::read_dataset(&path).unwrap_err().to_string().contains("truncated"));
}

#[test]
fn model_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let model = LstmDetector::new(6, 5, 2, 17).unwrap();
    let manifest = ModelManifest {
        schema_version: 1,
        input_dim: 6,
        hidden: 5,
        layers: 2,
        segment_frames: 4,
        normalize: true,
        seed: 17,
        train: Some(TrainConfig::default()),
        threshold: Some(Threshold::Fixed { value: 2.0 }),
        tensors: model.layout().to_vec(),
    };
    io::write_model(&path, &model, &manifest).unwrap();
    let (back, m) = io::read_model(&path).unwrap();
    assert_eq!(m, manifest);
    assert_eq!(back.params, model.params);
    let x = segment(Label::Uav, 0.3).data;
    assert_eq!(back.forward(x.view()).unwrap(), model.forward(x.view()).unwrap());

    // A manifest that disagrees with the blob is refused.
    let wrong = ModelManifest { hidden: 4, ..manifest };
    io::write_model(&path, &model, &wrong).unwrap();
    assert!(io::read_model(&path).is_err());
}
