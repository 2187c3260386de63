//! End-to-end glue: frames → Range-Doppler maps → R-PMM → spectral
//! subtraction → constrained path → particle filter, and the segment
//! preprocessing chain in front of the classifier.

use serde::{Deserialize, Serialize};

use crate::config::{DerivedParams, RadarConfig};
use crate::echo::{Emitter, Frame, SceneSpec};
use crate::error::{Error, Result};
use crate::identifier::preprocess::{
    dc_removal, extract_doppler_time, feature_alignment, normalize_segment, segment_split_filter, DcRemoval, Label,
    Segment, Threshold, DEFAULT_DC_GUARD_BINS,
};
use crate::io::TruthRow;
use crate::pmm::{build_rpmm, RPmmDiagram, DEFAULT_J_MAX, DEFAULT_J_MIN};
use crate::rd::{RangeDopplerMap, RdProcessor, Window};
use crate::seed::derive_seed;
use crate::tracker::{
    dp_max_path, estimate_noise_profile, filter_ranges, median_noise_profile, spectral_subtract, FilterOutput,
    NoiseProfile, ParticleFilterConfig, Track,
};

pub const DEFAULT_V_MAX_M_PER_S: f64 = 4.0;
pub const DEFAULT_SEGMENT_S: f64 = 3.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub v_max_m_per_s: f64,
    pub j_min: usize,
    pub j_max: usize,
    /// Overrides the motion constraint derived from `v_max`.
    pub k_bins: Option<usize>,
    pub range_window: Window,
    pub doppler_window: Window,
    pub particle_filter: bool,
    pub particle_count: usize,
    /// A track whose mean raw folding result stays below
    /// `median + sigmas · 1.4826 · MAD` of all R-PMM cells is flagged.
    pub confidence_sigmas: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            v_max_m_per_s: DEFAULT_V_MAX_M_PER_S,
            j_min: DEFAULT_J_MIN,
            j_max: DEFAULT_J_MAX,
            k_bins: None,
            range_window: Window::Rectangular,
            doppler_window: Window::Rectangular,
            particle_filter: true,
            particle_count: 5000,
            confidence_sigmas: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    /// Mean raw folding result along the chosen path.
    pub path_mean: f64,
    pub noise_median: f64,
    /// Robust spread, `1.4826 · MAD`.
    pub noise_spread: f64,
    pub threshold: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub derived: DerivedParams,
    pub k_bins: usize,
    pub maps: Vec<RangeDopplerMap>,
    pub rpmm: RPmmDiagram,
    pub subtracted: RPmmDiagram,
    pub noise: NoiseProfile,
    pub track: Track,
    pub filter: Option<FilterOutput>,
    pub confidence: Confidence,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Median and MAD over every cell of the raw diagram; a single target
/// occupies too few cells to move either.
fn confidence(raw: &RPmmDiagram, track: &Track, sigmas: f64) -> Confidence {
    let mut cells: Vec<f64> = raw.values.iter().copied().collect();
    let noise_median = median(&mut cells);
    let mut dev: Vec<f64> = cells.iter().map(|v| (v - noise_median).abs()).collect();
    let noise_spread = 1.4826 * median(&mut dev);
    let path_mean = track
        .range_bins
        .iter()
        .enumerate()
        .map(|(t, &b)| raw.values[[b, t]])
        .sum::<f64>()
        / track.len().max(1) as f64;
    let threshold = noise_median + sigmas * noise_spread;
    Confidence {
        path_mean,
        noise_median,
        noise_spread,
        threshold,
        low_confidence: path_mean < threshold,
    }
}

/// Source of the noise profile used for spectral subtraction.
#[derive(Debug, Clone, Copy)]
pub enum Background<'a> {
    /// Per-range median over the capture itself.
    None,
    /// A separate capture with no target present.
    Frames(&'a [Frame]),
    /// A profile estimated earlier. Subtraction rescales the profile per
    /// frame, so one profile serves captures at any noise level.
    Profile(&'a NoiseProfile),
}

/// Tracks the strongest periodic reflector through a capture.
pub fn run_tracking(
    frames: &[Frame],
    background: Background<'_>,
    radar: &RadarConfig,
    cfg: &TrackingConfig,
    seed: u64,
) -> Result<TrackingRun> {
    if frames.is_empty() {
        return Err(Error::Empty("capture"));
    }
    let derived = DerivedParams::derive(radar, cfg.v_max_m_per_s)?;
    let k_bins = cfg.k_bins.unwrap_or(derived.dp_constraint_bins);
    let proc = processor(radar, cfg);
    let maps = proc.process_all(frames)?;
    let rpmm = build_rpmm(&maps, cfg.j_min, cfg.j_max)?;
    let noise = match background {
        Background::Frames(bg) if !bg.is_empty() => background_profile(bg, radar, cfg)?,
        Background::Profile(p) => p.clone(),
        _ => {
            log::info!("no background capture; using per-range median noise profile");
            median_noise_profile(&rpmm)?
        }
    };
    let subtracted = spectral_subtract(&rpmm, &noise)?;
    let path = dp_max_path(&subtracted.values, k_bins)?;
    let mut track = Track::from_path(&path, &subtracted, &derived);
    let filter = if cfg.particle_filter {
        let pf = ParticleFilterConfig {
            particle_count: cfg.particle_count,
            ..ParticleFilterConfig::for_radar(&derived, derive_seed(seed, "tracker/particle-filter"))
        };
        let out = filter_ranges(&track.ranges_m, &pf, &derived)?;
        track.filtered_ranges_m = out.ranges_m.clone();
        Some(out)
    } else {
        None
    };
    let confidence = confidence(&rpmm, &track, cfg.confidence_sigmas);
    if confidence.low_confidence {
        log::warn!(
            "low-confidence track: path mean {:.3} below noise threshold {:.3}",
            confidence.path_mean,
            confidence.threshold
        );
    }
    Ok(TrackingRun {
        derived,
        k_bins,
        maps,
        rpmm,
        subtracted,
        noise,
        track,
        filter,
        confidence,
    })
}

fn processor(radar: &RadarConfig, cfg: &TrackingConfig) -> RdProcessor {
    RdProcessor::with_windows(
        radar.chirps_per_frame,
        radar.samples_per_chirp,
        cfg.range_window,
        cfg.doppler_window,
    )
}

/// Time-averaged R-PMM of a target-free capture.
pub fn background_profile(frames: &[Frame], radar: &RadarConfig, cfg: &TrackingConfig) -> Result<NoiseProfile> {
    let maps = processor(radar, cfg).process_all(frames)?;
    estimate_noise_profile(&build_rpmm(&maps, cfg.j_min, cfg.j_max)?)
}

/// Ground truth of the first UAV in the scene at each frame's mid-time.
pub fn truth_series(scene: &SceneSpec, radar: &RadarConfig, n_frames: usize) -> Result<Vec<TruthRow>> {
    let traj = scene
        .emitters
        .iter()
        .find_map(|e| match e {
            Emitter::Uav { trajectory, .. } => Some(trajectory),
            _ => None,
        })
        .ok_or(Error::Empty("UAV emitters in scene"))?;
    let td = radar.frame_duration_s();
    (0..n_frames)
        .map(|k| {
            let t = (k as f64 + 0.5) * td;
            Ok(TruthRow {
                time_s: t,
                range_m: traj.range_at(t)?,
                velocity_m_per_s: traj.velocity_at(t)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub segment_s: f64,
    pub dc_guard_bins: usize,
    pub j_min: usize,
    pub j_max: usize,
    /// Divide each segment by its maximum before classification.
    pub normalize: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            segment_s: DEFAULT_SEGMENT_S,
            dc_guard_bins: DEFAULT_DC_GUARD_BINS,
            j_min: DEFAULT_J_MIN,
            j_max: DEFAULT_J_MAX,
            normalize: true,
        }
    }
}

/// Doppler-Time diagram along the track, DC removal, feature alignment,
/// then fixed-length segments checked against `threshold`. The folding
/// filter sees unnormalized data; normalization, if enabled, comes last.
pub fn extract_segments(
    maps: &[RangeDopplerMap],
    track: &Track,
    derived: &DerivedParams,
    cfg: &SegmentConfig,
    threshold: f64,
    label: Label,
) -> Result<(Vec<Segment>, DcRemoval)> {
    let diagram = extract_doppler_time(maps, track)?;
    let (diagram, dc) = dc_removal(&diagram, cfg.dc_guard_bins)?;
    let aligned = feature_alignment(&diagram);
    let w = derived.segment_frames(cfg.segment_s);
    let mut segments = segment_split_filter(&aligned, w, threshold, cfg.j_min, cfg.j_max, label)?;
    if cfg.normalize {
        for s in &mut segments {
            s.data = normalize_segment(&s.data);
        }
    }
    Ok((segments, dc))
}

/// Threshold for synthetic data: `mean + sigmas·std` of the largest
/// folding result of noise-only segments.
pub fn calibrate_threshold(noise_segments: &[Segment], sigmas: f64) -> Result<Threshold> {
    let maxima: Vec<f64> = noise_segments.iter().map(|s| s.max_folding_result).collect();
    Threshold::calibrate(&maxima, sigmas)
}

/// Noise standard deviation that puts the scene's Doppler lines at
/// `snr_db` per-line SNR.
///
/// Per-line SNR is measured on slow-time samples at the strongest range
/// bin, after the Range-FFT and before Doppler integration: the mean power
/// of the 20 largest Doppler bins of a noise-free frame, divided by `L`,
/// over the per-sample noise power. Coherent Doppler integration adds
/// `10·log10(L)` dB on top in the map.
pub fn noise_std_for_line_snr(scene: &SceneSpec, radar: &RadarConfig, snr_db: f64) -> Result<f64> {
    let clean = SceneSpec {
        noise_std: 0.0,
        ..scene.clone()
    };
    let frame = crate::echo::synthesize_frame(&clean, radar, 0)?;
    let map = RdProcessor::new(radar.chirps_per_frame, radar.samples_per_chirp).process(&frame)?;
    let (best, _) = map
        .magnitudes
        .rows()
        .into_iter()
        .enumerate()
        .map(|(r, row)| (r, row.iter().map(|v| v * v).sum::<f64>()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::Empty("Range-Doppler map"))?;
    let mut powers: Vec<f64> = map.magnitudes.row(best).iter().map(|v| v * v).collect();
    powers.sort_by(|a, b| b.total_cmp(a));
    let top = &powers[..powers.len().min(20)];
    let line_power = top.iter().sum::<f64>() / top.len() as f64 / radar.chirps_per_frame as f64;
    if !(line_power > 0.0) {
        return Err(Error::Degenerate("scene has no signal power".into()));
    }
    Ok((line_power / 10f64.powf(snr_db / 10.0)).sqrt())
}
