//! Radar, target and trajectory configuration plus the quantities derived
//! from them.
//!
//! All values are SI. `RadarConfig::default()` is a 60 GHz board with a
//! 9.994 MHz/µs slope, 900 µs chirps, 100 chirps per frame and a 6.25 MHz
//! ADC, sampled with 256 points per chirp.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Propagation speed. 3e8 rather than 299 792 458 so derived ranges match the
/// board documentation (93.8 m maximum range for the default radar).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Current version of the on-disk configuration schema.
pub const SCHEMA_VERSION: u32 = 1;

fn default_speed_of_light() -> f64 {
    SPEED_OF_LIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    pub carrier_freq_hz: f64,
    /// FMCW frequency slope in Hz/s.
    pub chirp_slope_hz_per_s: f64,
    pub chirp_duration_s: f64,
    /// Chirps per frame, which is also the number of Doppler bins.
    pub chirps_per_frame: usize,
    pub adc_rate_hz: f64,
    /// Complex ADC samples per chirp. Must be a power of two.
    pub samples_per_chirp: usize,
    pub frames_per_capture: usize,
    #[serde(default = "default_speed_of_light")]
    pub speed_of_light_m_per_s: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 60.25e9,
            chirp_slope_hz_per_s: 9.994e12,
            chirp_duration_s: 900e-6,
            chirps_per_frame: 100,
            adc_rate_hz: 6.25e6,
            samples_per_chirp: 256,
            frames_per_capture: 40,
            speed_of_light_m_per_s: SPEED_OF_LIGHT,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

impl RadarConfig {
    pub fn validate(self) -> Result<Self> {
        positive("carrier_freq_hz", self.carrier_freq_hz)?;
        positive("chirp_slope_hz_per_s", self.chirp_slope_hz_per_s)?;
        positive("chirp_duration_s", self.chirp_duration_s)?;
        positive("adc_rate_hz", self.adc_rate_hz)?;
        positive("speed_of_light_m_per_s", self.speed_of_light_m_per_s)?;
        if self.chirps_per_frame < 2 {
            return Err(Error::invalid(
                "chirps_per_frame",
                format!("Doppler FFT needs at least 2 chirps, got {}", self.chirps_per_frame),
            ));
        }
        if !self.samples_per_chirp.is_power_of_two() || self.samples_per_chirp < 2 {
            return Err(Error::invalid(
                "samples_per_chirp",
                format!("must be a power of two >= 2, got {}", self.samples_per_chirp),
            ));
        }
        if self.frames_per_capture == 0 {
            return Err(Error::invalid("frames_per_capture", "must be >= 1"));
        }
        let window = self.samples_per_chirp as f64 / self.adc_rate_hz;
        if window > self.chirp_duration_s * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "samples_per_chirp",
                format!(
                    "sampling window {window:.3e} s exceeds chirp duration {:.3e} s",
                    self.chirp_duration_s
                ),
            ));
        }
        Ok(self)
    }

    pub fn wavelength_m(&self) -> f64 {
        self.speed_of_light_m_per_s / self.carrier_freq_hz
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.chirps_per_frame as f64 * self.chirp_duration_s
    }

    pub fn max_range_m(&self) -> f64 {
        self.speed_of_light_m_per_s * self.adc_rate_hz / (2.0 * self.chirp_slope_hz_per_s)
    }

    pub fn range_bin_size_m(&self) -> f64 {
        self.max_range_m() / self.samples_per_chirp as f64
    }

    /// Zero-Doppler index after the centre shift.
    pub fn dc_bin(&self) -> usize {
        self.chirps_per_frame / 2
    }
}

/// `ceil(v_max · T_d / R_res)`, never below 1.
pub fn constraint_bins(v_max_m_per_s: f64, frame_duration_s: f64, range_bin_size_m: f64) -> usize {
    let ratio = v_max_m_per_s * frame_duration_s / range_bin_size_m;
    // 2.0000000000000004 must not become 3.
    ((ratio - 1e-9).ceil().max(1.0)) as usize
}

/// Quantities computed once from a validated [`RadarConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub max_range_m: f64,
    /// Width of one Range-FFT bin, from the sampled bandwidth `K·N_s/f_s`.
    pub range_bin_size_m: f64,
    pub frame_duration_s: f64,
    pub doppler_bin_hz: f64,
    pub doppler_bin_m_per_s: f64,
    pub prf_hz: f64,
    pub dc_bin: usize,
    pub v_max_m_per_s: f64,
    /// Largest range-bin change between consecutive frames,
    /// `ceil(v_max · T_d / R_res)`, at least 1. Not to be confused with the
    /// chirp slope.
    pub dp_constraint_bins: usize,
}

impl DerivedParams {
    pub fn derive(radar: &RadarConfig, v_max_m_per_s: f64) -> Result<Self> {
        let radar = radar.clone().validate()?;
        positive("v_max_m_per_s", v_max_m_per_s)?;
        let max_range_m = radar.max_range_m();
        let range_bin_size_m = radar.range_bin_size_m();
        let frame_duration_s = radar.frame_duration_s();
        let doppler_bin_hz = 1.0 / frame_duration_s;
        let dp_constraint_bins =
            constraint_bins(v_max_m_per_s, frame_duration_s, range_bin_size_m);
        Ok(Self {
            max_range_m,
            range_bin_size_m,
            frame_duration_s,
            doppler_bin_hz,
            doppler_bin_m_per_s: doppler_bin_hz * radar.wavelength_m() / 2.0,
            prf_hz: 1.0 / radar.chirp_duration_s,
            dc_bin: radar.dc_bin(),
            v_max_m_per_s,
            dp_constraint_bins,
        })
    }

    /// Range of the centre of `bin`.
    pub fn bin_to_range_m(&self, bin: usize) -> f64 {
        bin as f64 * self.range_bin_size_m
    }

    pub fn range_to_bin(&self, range_m: f64) -> usize {
        (range_m / self.range_bin_size_m).round().max(0.0) as usize
    }

    /// Frames per identification segment for a segment length in seconds.
    pub fn segment_frames(&self, segment_s: f64) -> usize {
        ((segment_s / self.frame_duration_s).round() as usize).max(2)
    }
}

/// Rotor and blade-scatterer geometry of a multirotor.
///
/// Per-scatterer vectors are indexed `q * P + p` for rotor `q` and scatterer
/// `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavConfig {
    pub rotor_count: usize,
    pub scatterers_per_blade_assembly: usize,
    pub scatterer_radii_m: Vec<f64>,
    pub rotor_angular_velocity_rad_per_s: f64,
    pub initial_phases_rad: Vec<f64>,
    /// Angle between the blade plane and the radial direction.
    pub blade_plane_angle_rad: Vec<f64>,
    pub body_reflectivity: f64,
    pub scatterer_reflectivities: Vec<f64>,
    /// Radial offset of each rotor hub from the body. Empty means all zero.
    #[serde(default)]
    pub rotor_offsets_m: Vec<f64>,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self::hexacopter(55.6)
    }
}

impl UavConfig {
    /// Six rotors seen from below with blades tilted 2° off the
    /// perpendicular. Each rotor carries a tip scatterer and a mid-blade
    /// scatterer on a different blade, so the assembly is not rotationally
    /// symmetric and the comb keeps its fundamental spacing.
    pub fn hexacopter(rotation_hz: f64) -> Self {
        let q_count = 6;
        let mut radii = Vec::new();
        let mut phases = Vec::new();
        let mut angles = Vec::new();
        let mut refl = Vec::new();
        for q in 0..q_count {
            let hub_phase = q as f64 * 2.0 * PI / q_count as f64 * 1.37;
            radii.extend([0.25, 0.13]);
            phases.extend([hub_phase, hub_phase + 2.0 * PI / 3.0]);
            angles.extend([88f64.to_radians(); 2]);
            refl.extend([0.5, 0.3]);
        }
        Self {
            rotor_count: q_count,
            scatterers_per_blade_assembly: 2,
            scatterer_radii_m: radii,
            rotor_angular_velocity_rad_per_s: 2.0 * PI * rotation_hz,
            initial_phases_rad: phases,
            blade_plane_angle_rad: angles,
            body_reflectivity: 1.0,
            scatterer_reflectivities: refl,
            rotor_offsets_m: Vec::new(),
        }
    }

    pub fn scatterer_count(&self) -> usize {
        self.rotor_count * self.scatterers_per_blade_assembly
    }

    pub fn rotation_hz(&self) -> f64 {
        self.rotor_angular_velocity_rad_per_s / (2.0 * PI)
    }

    pub fn rotor_offset_m(&self, q: usize) -> f64 {
        self.rotor_offsets_m.get(q).copied().unwrap_or(0.0)
    }

    /// Sum of squared reflectivities of body and blades.
    pub fn total_power(&self) -> f64 {
        self.body_reflectivity.powi(2)
            + self
                .scatterer_reflectivities
                .iter()
                .map(|b| b * b)
                .sum::<f64>()
    }

    pub fn validate(self) -> Result<Self> {
        if self.rotor_count < 1 {
            return Err(Error::invalid("rotor_count", "must be >= 1"));
        }
        if self.scatterers_per_blade_assembly < 1 {
            return Err(Error::invalid("scatterers_per_blade_assembly", "must be >= 1"));
        }
        positive(
            "rotor_angular_velocity_rad_per_s",
            self.rotor_angular_velocity_rad_per_s,
        )?;
        nonnegative("body_reflectivity", self.body_reflectivity)?;
        let n = self.scatterer_count();
        for (field, v) in [
            ("scatterer_radii_m", &self.scatterer_radii_m),
            ("initial_phases_rad", &self.initial_phases_rad),
            ("blade_plane_angle_rad", &self.blade_plane_angle_rad),
            ("scatterer_reflectivities", &self.scatterer_reflectivities),
        ] {
            if v.len() != n {
                return Err(Error::invalid(
                    field,
                    format!("expected {n} entries (rotor_count * scatterers_per_blade_assembly), got {}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(field, "entries must be finite"));
            }
        }
        if self.scatterer_radii_m.iter().any(|&r| r < 0.0) {
            return Err(Error::invalid("scatterer_radii_m", "radii must be >= 0"));
        }
        if self.scatterer_reflectivities.iter().any(|&b| b < 0.0) {
            return Err(Error::invalid("scatterer_reflectivities", "must be >= 0"));
        }
        if !self.rotor_offsets_m.is_empty() && self.rotor_offsets_m.len() != self.rotor_count {
            return Err(Error::invalid(
                "rotor_offsets_m",
                format!("expected 0 or {} entries", self.rotor_count),
            ));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Hover,
    Ascent,
    Descent,
    /// Any other constant radial velocity.
    Cruise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySegment {
    pub kind: MotionKind,
    pub start_time_s: f64,
    pub duration_s: f64,
    pub start_range_m: f64,
    #[serde(default)]
    pub radial_velocity_m_per_s: f64,
}

impl TrajectorySegment {
    fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s
    }

    pub(crate) fn range_at(&self, t: f64) -> f64 {
        self.start_range_m + self.radial_velocity_m_per_s * (t - self.start_time_s)
    }
}

/// Piecewise constant-velocity radial motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub segments: Vec<TrajectorySegment>,
}

impl TrajectorySpec {
    pub fn hover(range_m: f64, duration_s: f64) -> Self {
        Self {
            segments: vec![TrajectorySegment {
                kind: MotionKind::Hover,
                start_time_s: 0.0,
                duration_s,
                start_range_m: range_m,
                radial_velocity_m_per_s: 0.0,
            }],
        }
    }

    /// Positive velocity moves away from the radar (ascent for an
    /// upward-looking radar).
    pub fn constant_velocity(start_range_m: f64, velocity_m_per_s: f64, duration_s: f64) -> Self {
        let kind = if velocity_m_per_s > 0.0 {
            MotionKind::Ascent
        } else if velocity_m_per_s < 0.0 {
            MotionKind::Descent
        } else {
            MotionKind::Hover
        };
        Self {
            segments: vec![TrajectorySegment {
                kind,
                start_time_s: 0.0,
                duration_s,
                start_range_m,
                radial_velocity_m_per_s: velocity_m_per_s,
            }],
        }
    }

    pub fn start_time_s(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.start_time_s)
    }

    pub fn end_time_s(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end_time_s())
    }

    pub(crate) fn segment_at(&self, t: f64) -> Result<&TrajectorySegment> {
        const SLACK: f64 = 1e-9;
        if t < self.start_time_s() - SLACK || t > self.end_time_s() + SLACK {
            return Err(Error::OutOfRange {
                what: "time",
                detail: format!(
                    "t = {t} s outside trajectory span [{}, {}]",
                    self.start_time_s(),
                    self.end_time_s()
                ),
            });
        }
        Ok(self
            .segments
            .iter()
            .find(|s| t < s.end_time_s())
            .unwrap_or_else(|| self.segments.last().expect("validated trajectory")))
    }

    pub fn range_at(&self, t: f64) -> Result<f64> {
        Ok(self.segment_at(t)?.range_at(t))
    }

    pub fn velocity_at(&self, t: f64) -> Result<f64> {
        Ok(self.segment_at(t)?.radial_velocity_m_per_s)
    }

    /// Checks time contiguity, motion kinds and that the range stays inside
    /// `(0, max_range_m)`.
    pub fn validate(self, max_range_m: f64) -> Result<Self> {
        if self.segments.is_empty() {
            return Err(Error::invalid("segments", "trajectory needs at least one segment"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let field = |name: &str| format!("segments[{i}].{name}");
            positive(&field("duration_s"), seg.duration_s)?;
            if !seg.start_time_s.is_finite() || !seg.radial_velocity_m_per_s.is_finite() {
                return Err(Error::invalid(field("start_time_s"), "must be finite"));
            }
            let v = seg.radial_velocity_m_per_s;
            let ok = match seg.kind {
                MotionKind::Hover => v == 0.0,
                MotionKind::Ascent => v > 0.0,
                MotionKind::Descent => v < 0.0,
                MotionKind::Cruise => true,
            };
            if !ok {
                return Err(Error::invalid(
                    field("radial_velocity_m_per_s"),
                    format!("{v} m/s is inconsistent with kind {:?}", seg.kind),
                ));
            }
            if i > 0 {
                let prev_end = self.segments[i - 1].end_time_s();
                if (seg.start_time_s - prev_end).abs() > 1e-9 {
                    return Err(Error::invalid(
                        field("start_time_s"),
                        format!("segments must be contiguous: previous ends at {prev_end}"),
                    ));
                }
            }
            for r in [seg.start_range_m, seg.range_at(seg.end_time_s())] {
                if !(r > 0.0 && r < max_range_m) {
                    return Err(Error::invalid(
                        field("start_range_m"),
                        format!("range {r:.3} m leaves (0, {max_range_m:.3}) m"),
                    ));
                }
            }
        }
        Ok(self)
    }
}
