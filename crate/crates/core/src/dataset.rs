//! Seeded synthetic segment datasets: UAV captures against distractor
//! captures, run through the same tracking and preprocessing chain as real
//! data.
//!
//! The receiver noise floor is fixed at unit standard deviation and target
//! reflectivities are scaled to hit a drawn per-line SNR, so the folding
//! threshold calibrated on noise-only captures applies to every record.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DerivedParams, RadarConfig, TrajectorySpec, UavConfig};
use crate::echo::{synthesize_capture, DistractorKind, DistractorParams, Emitter, SceneSpec};
use crate::error::{Error, Result};
use crate::identifier::preprocess::{Label, Segment, Threshold};
use crate::pipeline::{
    background_profile, calibrate_threshold, extract_segments, noise_std_for_line_snr, run_tracking, Background,
    SegmentConfig, TrackingConfig,
};
use crate::seed::{derive_seed, rng, substream};
use crate::tracker::NoiseProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub uav_segments: usize,
    pub other_segments: usize,
    /// Per-line SNR range in dB, drawn uniformly.
    pub snr_db: [f64; 2],
    /// Rotor rotation frequency `ω/2π` range.
    pub rotation_hz: [f64; 2],
    pub velocity_m_per_s: [f64; 2],
    /// Every emitter stays inside this range interval for the whole capture.
    pub range_m: [f64; 2],
    /// Noise-only captures used to calibrate the folding threshold.
    pub noise_captures: usize,
    pub threshold_sigmas: f64,
    pub background_frames: usize,
    pub train_fraction: f64,
    pub tracking: TrackingConfig,
    pub segments: SegmentConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            uav_segments: 200,
            other_segments: 200,
            snr_db: [0.0, 10.0],
            rotation_hz: [35.0, 110.0],
            velocity_m_per_s: [-4.0, 4.0],
            range_m: [10.0, 85.0],
            noise_captures: 30,
            threshold_sigmas: 5.0,
            background_frames: 20,
            train_fraction: 0.7,
            tracking: TrackingConfig {
                particle_filter: false,
                ..TrackingConfig::default()
            },
            segments: SegmentConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(self) -> Result<Self> {
        for (field, [lo, hi]) in [
            ("snr_db", self.snr_db),
            ("rotation_hz", self.rotation_hz),
            ("velocity_m_per_s", self.velocity_m_per_s),
            ("range_m", self.range_m),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(field, format!("need lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if !(self.rotation_hz[0] > 0.0 && self.range_m[0] > 0.0) {
            return Err(Error::invalid("rotation_hz/range_m", "lower bounds must be > 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction", "must lie in (0, 1)"));
        }
        if self.noise_captures < 2 {
            return Err(Error::invalid("noise_captures", "need at least 2 for a spread"));
        }
        if self.background_frames == 0 {
            return Err(Error::invalid("background_frames", "must be >= 1"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub segments: Vec<Segment>,
    pub threshold: Threshold,
}

fn uniform(r: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

/// Velocity and a start range that keep the whole capture inside `bounds`.
fn motion(r: &mut impl Rng, cfg: &DatasetConfig, duration_s: f64) -> (f64, f64) {
    let v = uniform(r, cfg.velocity_m_per_s);
    let travel = v * duration_s;
    let lo = cfg.range_m[0] + (-travel).max(0.0);
    let hi = (cfg.range_m[1] - travel.max(0.0)).max(lo);
    (uniform(r, [lo, hi]), v)
}

/// A UAV scene drawn from `cfg`, with unit noise and reflectivities scaled
/// to the drawn SNR. Returns the scene and a provenance note.
pub fn random_uav_scene(radar: &RadarConfig, cfg: &DatasetConfig, frames: usize, seed: u64) -> Result<(SceneSpec, String)> {
    let mut r = rng(seed);
    let duration = frames as f64 * radar.frame_duration_s();
    let rot = uniform(&mut r, cfg.rotation_hz);
    let (r0, v) = motion(&mut r, cfg, duration);
    let snr = uniform(&mut r, cfg.snr_db);
    let mut uav = UavConfig::hexacopter(rot);
    let spin = r.random::<f64>() * 2.0 * PI;
    uav.initial_phases_rad.iter_mut().for_each(|p| *p += spin);
    let trajectory = if v == 0.0 {
        TrajectorySpec::hover(r0, duration)
    } else {
        TrajectorySpec::constant_velocity(r0, v, duration)
    };
    let scene = SceneSpec::new(vec![Emitter::Uav { uav, trajectory }], 0.0, substream(seed, 1));
    let note = format!("uav rotation_hz={rot:.3} range_m={r0:.3} velocity_m_per_s={v:.3} snr_db={snr:.2} seed={seed}");
    Ok((at_unit_noise(scene, radar, snr)?, note))
}

pub fn random_distractor_scene(
    radar: &RadarConfig,
    cfg: &DatasetConfig,
    frames: usize,
    seed: u64,
) -> Result<(SceneSpec, String)> {
    let mut r = rng(seed);
    let duration = frames as f64 * radar.frame_duration_s();
    let kind = DistractorKind::ALL[r.random_range(0..DistractorKind::ALL.len())];
    let (r0, v) = motion(&mut r, cfg, duration);
    let v = if kind == DistractorKind::StaticBlob { 0.0 } else { v };
    let snr = uniform(&mut r, cfg.snr_db);
    let params = DistractorParams {
        range_m: r0,
        radial_velocity_m_per_s: v,
        body_reflectivity: 1.0,
        part_reflectivity: uniform(&mut r, [0.3, 1.0]),
        displacement_amplitude_m: uniform(&mut r, [0.02, 0.15]),
        base_frequency_hz: match kind {
            DistractorKind::SlowOscillator => uniform(&mut r, [0.5, 5.0]),
            _ => uniform(&mut r, [2.0, 15.0]),
        },
        drift_per_frame: uniform(&mut r, [0.1, 0.4]),
        phase_step_std_rad: uniform(&mut r, [0.2, 1.0]),
    }
    .validate(kind)?;
    let scene = SceneSpec::new(vec![Emitter::Distractor { kind, params }], 0.0, substream(seed, 1));
    let note = format!(
        "distractor kind={} range_m={r0:.3} velocity_m_per_s={v:.3} snr_db={snr:.2} seed={seed}",
        kind.as_str()
    );
    Ok((at_unit_noise(scene, radar, snr)?, note))
}

fn at_unit_noise(mut scene: SceneSpec, radar: &RadarConfig, snr_db: f64) -> Result<SceneSpec> {
    let std = noise_std_for_line_snr(&scene, radar, snr_db)?;
    scene.emitters.iter_mut().for_each(|e| e.scale_reflectivity(1.0 / std));
    scene.noise_std = 1.0;
    Ok(scene)
}

/// Tracks one capture and cuts it into segments.
fn capture_segments(
    scene: &SceneSpec,
    radar: &RadarConfig,
    derived: &DerivedParams,
    cfg: &DatasetConfig,
    noise: &NoiseProfile,
    threshold: f64,
    label: Label,
    frames: usize,
) -> Result<Vec<Segment>> {
    let capture = synthesize_capture(scene, radar, frames)?;
    let run = run_tracking(&capture, Background::Profile(noise), radar, &cfg.tracking, scene.rng_seed)?;
    let (segments, _) = extract_segments(&run.maps, &run.track, derived, &cfg.segments, threshold, label)?;
    Ok(segments)
}

/// Balanced UAV / distractor segments, one segment per capture. The
/// threshold is calibrated first on noise-only captures; every segment is
/// kept and carries its `passed_filter` flag.
pub fn generate(radar: &RadarConfig, cfg: &DatasetConfig, seed: u64) -> Result<GeneratedDataset> {
    let cfg = cfg.clone().validate()?;
    let derived = DerivedParams::derive(radar, cfg.tracking.v_max_m_per_s)?;
    let w = derived.segment_frames(cfg.segments.segment_s);
    if w < 2 {
        return Err(Error::invalid("segment_s", "shorter than two frames"));
    }

    let bg_scene = SceneSpec::new(Vec::new(), 1.0, derive_seed(seed, "dataset/background"));
    let noise = background_profile(&synthesize_capture(&bg_scene, radar, cfg.background_frames)?, radar, &cfg.tracking)?;

    let noise_seed = derive_seed(seed, "dataset/noise");
    let noise_segments: Vec<Segment> = (0..cfg.noise_captures)
        .into_par_iter()
        .map(|i| {
            let scene = SceneSpec::new(Vec::new(), 1.0, substream(noise_seed, i as u64));
            capture_segments(&scene, radar, &derived, &cfg, &noise, f64::INFINITY, Label::Unlabeled, w)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let threshold = calibrate_threshold(&noise_segments, cfg.threshold_sigmas)?;
    log::info!("calibrated folding threshold {:.4}", threshold.value());

    let uav_seed = derive_seed(seed, "dataset/uav");
    let other_seed = derive_seed(seed, "dataset/distractor");
    let jobs: Vec<(Label, u64)> = (0..cfg.uav_segments)
        .map(|i| (Label::Uav, substream(uav_seed, i as u64)))
        .chain((0..cfg.other_segments).map(|i| (Label::Other, substream(other_seed, i as u64))))
        .collect();
    let segments = jobs
        .into_par_iter()
        .map(|(label, s)| {
            let (scene, note) = match label {
                Label::Uav => random_uav_scene(radar, &cfg, w, s)?,
                _ => random_distractor_scene(radar, &cfg, w, s)?,
            };
            let mut segs = capture_segments(&scene, radar, &derived, &cfg, &noise, threshold.value(), label, w)?;
            let mut seg = segs.pop().ok_or(Error::Empty("segments from capture"))?;
            seg.provenance = note;
            Ok(seg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedDataset { segments, threshold })
}

/// Seeded random split; the first `round(fraction · n)` shuffled indices
/// form the training set. Both lists come back sorted.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(derive_seed(seed, "dataset/split")));
    let cut = ((n as f64) * train_fraction).round() as usize;
    let (mut train, mut test) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub uav: usize,
    pub other: usize,
    pub unlabeled: usize,
    /// Share of labeled segments that are UAV.
    pub uav_fraction: f64,
    pub passed_filter: usize,
    pub frames_per_segment: Option<usize>,
    pub doppler_bins: Option<usize>,
}

pub fn stats(segments: &[Segment]) -> DatasetStats {
    let count = |l: Label| segments.iter().filter(|s| s.label == l).count();
    let (uav, other) = (count(Label::Uav), count(Label::Other));
    let labeled = uav + other;
    DatasetStats {
        total: segments.len(),
        uav,
        other,
        unlabeled: count(Label::Unlabeled),
        uav_fraction: if labeled == 0 { 0.0 } else { uav as f64 / labeled as f64 },
        passed_filter: segments.iter().filter(|s| s.passed_filter).count(),
        frames_per_segment: segments.first().map(|s| s.data.nrows()),
        doppler_bins: segments.first().map(|s| s.data.ncols()),
    }
}
