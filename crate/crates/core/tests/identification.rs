mod common;

use common::*;
use uavsense::dataset::{self, DatasetConfig};
use uavsense::echo::{synthesize_capture, SceneSpec};
use uavsense::identifier::preprocess::{extract_doppler_time, Label};
use uavsense::pipeline::{calibrate_threshold, extract_segments, run_tracking, Background, SegmentConfig, TrackingConfig};
use uavsense::rd::{comb_spacing, has_comb};
use uavsense::tracker::Track;
use uavsense::{DerivedParams, RadarConfig, TrajectorySpec};

fn no_filter() -> TrackingConfig {
    TrackingConfig {
        particle_filter: false,
        ..TrackingConfig::default()
    }
}

#[test]
fn hover_doppler_time_shows_comb_in_every_frame() {
    let radar = RadarConfig::default();
    let scene = at_snr(uav_scene(TrajectorySpec::hover(48.0, 2.0), 55.6, 1), &radar, 5.0);
    let frames = synthesize_capture(&scene, &radar, 12).unwrap();
    let bg = noise_capture(&radar, scene.noise_std, 10, 2);
    let run = run_tracking(&frames, Background::Frames(&bg), &radar, &no_filter(), 0).unwrap();
    let diagram = extract_doppler_time(&run.maps, &run.track).unwrap();
    assert_eq!(diagram.frames(), 12);
    for (t, col) in diagram.columns.rows().into_iter().enumerate() {
        // Lines 5 bins apart; in some frames every other line is weaker and
        // the autocorrelation locks onto the 10-bin harmonic.
        let (spacing, _) = comb_spacing(col, 20).unwrap();
        assert!(spacing % 5 == 0, "frame {t}: spacing {spacing}");
    }
}

#[test]
fn off_by_one_bin_keeps_a_weaker_comb() {
    let radar = RadarConfig::default();
    let derived = DerivedParams::derive(&radar, 4.0).unwrap();
    // Between bin centres so the neighbour sees sidelobe leakage.
    let range = 131.3 * derived.range_bin_size_m;
    let scene = uav_scene(TrajectorySpec::hover(range, 1.0), 55.6, 0);
    let frames = synthesize_capture(&scene, &radar, 4).unwrap();
    let maps = uavsense::rd::RdProcessor::new(100, 256).process_all(&frames).unwrap();
    let track_at = |bin: usize| Track {
        frame_indices: (0..4).collect(),
        timestamps_s: (0..4).map(|k| k as f64 * derived.frame_duration_s).collect(),
        range_bins: vec![bin; 4],
        ranges_m: vec![derived.bin_to_range_m(bin); 4],
        filtered_ranges_m: vec![],
        scores: vec![0.0; 4],
    };
    let on = extract_doppler_time(&maps, &track_at(131)).unwrap();
    let off = extract_doppler_time(&maps, &track_at(132)).unwrap();
    for t in 0..4 {
        let (a, b) = (on.columns.row(t), off.columns.row(t));
        assert!(has_comb(b, 20, 0.3), "frame {t}");
        assert_eq!(comb_spacing(a, 20).unwrap().0, comb_spacing(b, 20).unwrap().0);
        assert!(b.sum() < a.sum());
    }
}

#[test]
fn calibrated_threshold_rejects_noise_and_keeps_uav() {
    let radar = RadarConfig::default();
    let derived = DerivedParams::derive(&radar, 4.0).unwrap();
    let cfg = SegmentConfig::default();
    let w = derived.segment_frames(cfg.segment_s);
    assert_eq!(w, 40);
    let bg = noise_capture(&radar, 1.0, 20, 100);

    let noise_segments = |seed: u64, threshold: f64| {
        let frames = noise_capture(&radar, 1.0, w, seed);
        let run = run_tracking(&frames, Background::Frames(&bg), &radar, &no_filter(), seed).unwrap();
        extract_segments(&run.maps, &run.track, &derived, &cfg, threshold, Label::Other).unwrap().0
    };
    let calibration: Vec<_> = (0..20).flat_map(|s| noise_segments(s, f64::INFINITY)).collect();
    let threshold = calibrate_threshold(&calibration, 5.0).unwrap().value();
    let fresh: Vec<_> = (50..60).flat_map(|s| noise_segments(s, threshold)).collect();
    assert_eq!(fresh.len(), 10);
    assert!(fresh.iter().all(|s| !s.passed_filter));

    let scene = at_snr(uav_scene(TrajectorySpec::hover(48.0, 7.3), 55.6, 5), &radar, 0.0);
    let scene = unit_noise(scene);
    let frames = synthesize_capture(&scene, &radar, 2 * w).unwrap();
    let run = run_tracking(&frames, Background::Frames(&bg), &radar, &no_filter(), 0).unwrap();
    let (segs, _) = extract_segments(&run.maps, &run.track, &derived, &cfg, threshold, Label::Uav).unwrap();
    assert_eq!(segs.len(), 2);
    assert!(segs.iter().all(|s| s.passed_filter), "threshold {threshold}");
}

/// Same SNR at unit noise, the level the background was captured at.
fn unit_noise(mut scene: SceneSpec) -> SceneSpec {
    let g = 1.0 / scene.noise_std;
    scene.emitters.iter_mut().for_each(|e| e.scale_reflectivity(g));
    scene.noise_std = 1.0;
    scene
}

#[test]
fn small_dataset_is_balanced_and_reproducible() {
    let radar = RadarConfig::default();
    let cfg = DatasetConfig {
        uav_segments: 4,
        other_segments: 4,
        noise_captures: 4,
        background_frames: 6,
        ..DatasetConfig::default()
    };
    let a = dataset::generate(&radar, &cfg, 9).unwrap();
    let b = dataset::generate(&radar, &cfg, 9).unwrap();
    assert_eq!(a.threshold, b.threshold);
    assert_eq!(a.segments, b.segments);

    let st = dataset::stats(&a.segments);
    assert_eq!((st.total, st.uav, st.other), (8, 4, 4));
    assert_eq!(st.uav_fraction, 0.5);
    assert_eq!(st.frames_per_segment, Some(40));
    assert_eq!(st.doppler_bins, Some(100));
    assert!(a.segments.iter().all(|s| !s.provenance.is_empty()));
    // Normalised segments peak at 1.
    for s in &a.segments {
        let m = s.data.iter().copied().fold(0.0, f64::max);
        assert!((m - 1.0).abs() < 1e-12);
    }
}

#[test]
fn split_partitions_indices() {
    let (train, test) = dataset::train_test_split(400, 0.7, 3);
    assert_eq!((train.len(), test.len()), (280, 120));
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..400).collect::<Vec<_>>());
    assert_eq!(dataset::train_test_split(400, 0.7, 3), (train, test.clone()));
    assert_ne!(dataset::train_test_split(400, 0.7, 4).1, test);
}

#[test]
fn invalid_dataset_config_rejected() {
    let bad = DatasetConfig {
        snr_db: [10.0, 0.0],
        ..DatasetConfig::default()
    };
    assert!(bad.validate().unwrap_err().is_validation());
    let bad = DatasetConfig {
        train_fraction: 1.0,
        ..DatasetConfig::default()
    };
    assert!(bad.validate().is_err());
}
