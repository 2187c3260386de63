mod common;

use std::f64::consts::PI;

use common::*;
use rand::Rng;
use uavsense::echo::{synthesize_capture, synthesize_distractor_frames, DistractorKind, DistractorParams, Emitter, SceneSpec};
use uavsense::rd::RdProcessor;
use uavsense::seed::{derive_seed, rng, substream};
use uavsense::{RadarConfig, TrajectorySpec, UavConfig};

#[test]
fn static_blob_energy_sits_at_dc() {
    let radar = RadarConfig::default();
    let params = DistractorParams {
        range_m: 25.0,
        ..DistractorParams::default()
    };
    let frames = synthesize_distractor_frames(DistractorKind::StaticBlob, &params, &radar, 2, 0).unwrap();
    let proc = RdProcessor::new(radar.chirps_per_frame, radar.samples_per_chirp);
    for f in &frames {
        let map = proc.process(f).unwrap();
        let dc = map.dc_bin();
        let total: f64 = map.magnitudes.iter().map(|v| v * v).sum();
        let at_dc: f64 = map.magnitudes.column(dc).iter().map(|v| v * v).sum();
        assert!(at_dc / total > 0.999_999, "{}", at_dc / total);
    }
}

#[test]
fn flapper_stream_is_seeded() {
    let radar = RadarConfig {
        chirps_per_frame: 32,
        samples_per_chirp: 64,
        ..RadarConfig::default()
    };
    let params = DistractorParams {
        range_m: 10.0,
        radial_velocity_m_per_s: 0.7,
        ..DistractorParams::default()
    };
    let a = synthesize_distractor_frames(DistractorKind::AperiodicFlapper, &params, &radar, 3, 12).unwrap();
    let b = synthesize_distractor_frames(DistractorKind::AperiodicFlapper, &params, &radar, 3, 12).unwrap();
    let c = synthesize_distractor_frames(DistractorKind::AperiodicFlapper, &params, &radar, 3, 13).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

// Does not hold: the oscillator keeps its energy in a few bins near DC and
// folds higher than the rotor comb, which spreads the same power over ~40
// lines (0/50 trials at 5 dB). Kept as a record of the measurement.
#[test]
#[ignore = "folding rewards concentrated energy; slow oscillators out-fold the rotor comb"]
fn drifting_oscillator_folds_below_uav_at_equal_power() {
    let radar = RadarConfig::default();
    let frames = 8;
    let duration = frames as f64 * radar.frame_duration_s();
    let master = derive_seed(1, "test/distractor-calibration");
    let mut below = 0;
    for trial in 0..50u64 {
        let s = substream(master, trial);
        let mut r = rng(s);
        let mut uav = UavConfig::hexacopter(35.0 + 75.0 * r.random::<f64>());
        let spin = 2.0 * PI * r.random::<f64>();
        uav.initial_phases_rad.iter_mut().for_each(|p| *p += spin);
        let params = DistractorParams {
            range_m: 30.0,
            displacement_amplitude_m: 0.02 + 0.13 * r.random::<f64>(),
            base_frequency_hz: 0.5 + 4.5 * r.random::<f64>(),
            drift_per_frame: 0.3 + 0.2 * r.random::<f64>(),
            ..DistractorParams::default()
        };
        let mut other = Emitter::Distractor {
            kind: DistractorKind::SlowOscillator,
            params: params.clone(),
        };
        other.scale_reflectivity((uav.total_power() / params.total_power()).sqrt());

        let uav_scene = at_snr(
            SceneSpec::new(
                vec![Emitter::Uav {
                    uav,
                    trajectory: TrajectorySpec::hover(30.0, duration),
                }],
                0.0,
                substream(s, 1),
            ),
            &radar,
            5.0,
        );
        let other_scene = SceneSpec::new(vec![other], uav_scene.noise_std, substream(s, 2));
        let best = |scene: &SceneSpec| {
            let rpmm = rpmm_of(&synthesize_capture(scene, &radar, frames).unwrap(), &radar);
            rpmm.values.iter().copied().fold(0.0, f64::max)
        };
        if best(&other_scene) < best(&uav_scene) {
            below += 1;
        }
    }
    assert!(below >= 45, "oscillator folded below the UAV in {below}/50 trials");
}
