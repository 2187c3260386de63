//! Scenario helpers shared by the simulation-driven test targets.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use uavsense::echo::{synthesize_capture, Emitter, Frame, SceneSpec};
use uavsense::pipeline::{noise_std_for_line_snr, Background, TrackingConfig, TrackingRun};
use uavsense::pmm::{build_rpmm, RPmmDiagram, DEFAULT_J_MAX, DEFAULT_J_MIN};
use uavsense::rd::RdProcessor;
use uavsense::seed::rng;
use uavsense::{RadarConfig, TrajectorySpec, UavConfig};

pub fn uav_scene(trajectory: TrajectorySpec, rotation_hz: f64, seed: u64) -> SceneSpec {
    SceneSpec::new(
        vec![Emitter::Uav {
            uav: UavConfig::hexacopter(rotation_hz),
            trajectory,
        }],
        0.0,
        seed,
    )
}

/// `scene` with its noise set for the requested per-line SNR.
pub fn at_snr(mut scene: SceneSpec, radar: &RadarConfig, snr_db: f64) -> SceneSpec {
    scene.noise_std = noise_std_for_line_snr(&scene, radar, snr_db).unwrap();
    scene
}

pub fn noise_capture(radar: &RadarConfig, noise_std: f64, frames: usize, seed: u64) -> Vec<Frame> {
    synthesize_capture(&SceneSpec::new(Vec::new(), noise_std, seed), radar, frames).unwrap()
}

pub fn rpmm_of(frames: &[Frame], radar: &RadarConfig) -> RPmmDiagram {
    let maps = RdProcessor::new(radar.chirps_per_frame, radar.samples_per_chirp)
        .process_all(frames)
        .unwrap();
    build_rpmm(&maps, DEFAULT_J_MIN, DEFAULT_J_MAX).unwrap()
}

pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub fn column_argmax(values: &Array2<f64>) -> Vec<usize> {
    values.columns().into_iter().map(argmax).collect()
}

/// Tracks a UAV scenario at `snr_db` against a target-free background
/// capture at the same noise level.
pub fn track_scenario(
    trajectory: TrajectorySpec,
    snr_db: f64,
    frames: usize,
    seed: u64,
    cfg: &TrackingConfig,
) -> (TrackingRun, SceneSpec) {
    let radar = RadarConfig::default();
    let scene = at_snr(uav_scene(trajectory, 55.6, seed), &radar, snr_db);
    let capture = synthesize_capture(&scene, &radar, frames).unwrap();
    let bg = noise_capture(&radar, scene.noise_std, 20, seed ^ 0xb6);
    let run = uavsense::pipeline::run_tracking(&capture, Background::Frames(&bg), &radar, cfg, seed).unwrap();
    (run, scene)
}

/// R-PMM of a UAV capture with a strong range ramp added on top, plus the
/// background diagram (ramp over receiver noise, no target) the profile is
/// estimated from. Ramp gain varies per frame by ±20%.
pub struct RampFixture {
    pub noisy: RPmmDiagram,
    pub background: RPmmDiagram,
    pub uav_bin: usize,
    pub ramp_max_bin: usize,
}

pub fn ramp_fixture(seed: u64) -> RampFixture {
    let radar = RadarConfig::default();
    let frames = 40;
    let scene = at_snr(uav_scene(TrajectorySpec::hover(48.0, 4.0), 55.6, seed), &radar, 0.0);
    let uav = rpmm_of(&synthesize_capture(&scene, &radar, frames).unwrap(), &radar);
    let floor = rpmm_of(&noise_capture(&radar, scene.noise_std, 20, seed ^ 0x5a), &radar);

    let r_bins = uav.range_bins();
    let peak = uav.values.iter().copied().fold(0.0, f64::max);
    let amplitude = 3.0 * peak;
    let ramp: Vec<f64> = (0..r_bins).map(|r| amplitude * (r + 1) as f64 / r_bins as f64).collect();
    let mut g = rng(seed ^ 0x3c);
    let mut add_ramp = |d: &RPmmDiagram| {
        let mut v = d.values.clone();
        for mut col in v.columns_mut() {
            let gain = 0.8 + 0.4 * g.random::<f64>();
            col.iter_mut().zip(&ramp).for_each(|(x, n)| *x += gain * n);
        }
        d.with_values(v)
    };
    RampFixture {
        noisy: add_ramp(&uav),
        background: add_ramp(&floor),
        uav_bin: 131,
        ramp_max_bin: r_bins - 1,
    }
}

/// Root-mean-square difference.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
