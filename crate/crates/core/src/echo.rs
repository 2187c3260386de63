//! Beat-signal synthesis for rotor-carrying targets, static clutter and
//! non-UAV distractors.
//!
//! Every reflector contributes `a · exp(j·4π·(f_c + K·τ)·R(t)/c)` to sample
//! `(l, n)`, where `τ = n/f_s` is fast time and `R(t)` is evaluated at the
//! sample's absolute time `t = t_frame + l·T_c + n/f_s`. Blade motion inside
//! a chirp is therefore simulated, not assumed away.
//!
//! Slow-time sampling runs at the chirp rate (1111 Hz for the default radar),
//! so body and blade Doppler beyond ±PRF/2 wraps around. Comb spacing in bins
//! survives the wrap modulo the chirp count, which is all folding needs.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

use crate::config::{RadarConfig, TrajectorySpec, UavConfig};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, substream};

/// One radar frame of complex beat samples, `[chirps × samples_per_chirp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_index: usize,
    pub start_time_s: f64,
    pub samples: Array2<Complex64>,
}

impl Frame {
    pub fn chirps(&self) -> usize {
        self.samples.nrows()
    }

    pub fn samples_per_chirp(&self) -> usize {
        self.samples.ncols()
    }
}

/// Amplitude law applied to every reflectivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Propagation {
    /// Reflectivities are used as given.
    #[default]
    Constant,
    /// Amplitude scaled by `(reference_range_m / R)²`.
    InverseSquare { reference_range_m: f64 },
}

impl Propagation {
    fn gain(&self, range_m: f64) -> f64 {
        match *self {
            Propagation::Constant => 1.0,
            Propagation::InverseSquare { reference_range_m } => {
                (reference_range_m / range_m).powi(2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistractorKind {
    /// Flapping part whose oscillation phase is a random walk: no fixed
    /// rotation rate.
    AperiodicFlapper,
    /// Motionless reflector.
    StaticBlob,
    /// Oscillating part whose frequency drifts by a set fraction per frame.
    SlowOscillator,
}

impl DistractorKind {
    pub const ALL: [DistractorKind; 3] = [
        DistractorKind::AperiodicFlapper,
        DistractorKind::StaticBlob,
        DistractorKind::SlowOscillator,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistractorKind::AperiodicFlapper => "aperiodic-flapper",
            DistractorKind::StaticBlob => "static-blob",
            DistractorKind::SlowOscillator => "slow-oscillator",
        }
    }
}

impl FromStr for DistractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("kind", format!("unknown distractor kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistractorParams {
    pub range_m: f64,
    /// Bulk radial velocity. Ignored for static blobs.
    pub radial_velocity_m_per_s: f64,
    pub body_reflectivity: f64,
    /// Reflectivity of the moving part (wing, branch, tail).
    pub part_reflectivity: f64,
    /// Peak radial displacement of the moving part.
    pub displacement_amplitude_m: f64,
    /// Mean oscillation frequency of the moving part.
    pub base_frequency_hz: f64,
    /// Slow oscillator: relative frequency change per frame.
    pub drift_per_frame: f64,
    /// Flapper: standard deviation of the per-chirp phase increment.
    pub phase_step_std_rad: f64,
}

impl Default for DistractorParams {
    fn default() -> Self {
        Self {
            range_m: 30.0,
            radial_velocity_m_per_s: 0.0,
            body_reflectivity: 1.0,
            part_reflectivity: 0.8,
            displacement_amplitude_m: 0.05,
            base_frequency_hz: 8.0,
            drift_per_frame: 0.3,
            phase_step_std_rad: 0.5,
        }
    }
}

impl DistractorParams {
    pub fn total_power(&self) -> f64 {
        self.body_reflectivity.powi(2) + self.part_reflectivity.powi(2)
    }

    pub fn validate(self, kind: DistractorKind) -> Result<Self> {
        let nonneg = [
            ("body_reflectivity", self.body_reflectivity),
            ("part_reflectivity", self.part_reflectivity),
            ("displacement_amplitude_m", self.displacement_amplitude_m),
            ("phase_step_std_rad", self.phase_step_std_rad),
            ("drift_per_frame", self.drift_per_frame),
        ];
        for (field, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.range_m.is_finite() && self.range_m > 0.0) {
            return Err(Error::invalid("range_m", "must be > 0"));
        }
        if kind != DistractorKind::StaticBlob && !(self.base_frequency_hz > 0.0) {
            return Err(Error::invalid("base_frequency_hz", "must be > 0"));
        }
        if kind == DistractorKind::SlowOscillator && self.drift_per_frame >= 1.0 {
            return Err(Error::invalid("drift_per_frame", "must be < 1"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Emitter {
    Uav {
        #[serde(default)]
        uav: UavConfig,
        trajectory: TrajectorySpec,
    },
    StaticClutter {
        range_m: f64,
        reflectivity: f64,
    },
    Distractor {
        kind: DistractorKind,
        #[serde(default)]
        params: DistractorParams,
    },
}

impl Emitter {
    /// Multiplies every reflectivity of the emitter by `gain`.
    pub fn scale_reflectivity(&mut self, gain: f64) {
        match self {
            Emitter::Uav { uav, .. } => {
                uav.body_reflectivity *= gain;
                uav.scatterer_reflectivities.iter_mut().for_each(|b| *b *= gain);
            }
            Emitter::StaticClutter { reflectivity, .. } => *reflectivity *= gain,
            Emitter::Distractor { params, .. } => {
                params.body_reflectivity *= gain;
                params.part_reflectivity *= gain;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub emitters: Vec<Emitter>,
    /// Standard deviation of the complex AWGN per sample (`E|n|² = σ²`).
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub propagation: Propagation,
}

impl SceneSpec {
    pub fn new(emitters: Vec<Emitter>, noise_std: f64, rng_seed: u64) -> Self {
        Self {
            emitters,
            noise_std,
            rng_seed,
            propagation: Propagation::Constant,
        }
    }

    pub fn validate(self, radar: &RadarConfig) -> Result<Self> {
        let max_range = radar.max_range_m();
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std", "must be finite and >= 0"));
        }
        if let Propagation::InverseSquare { reference_range_m } = self.propagation {
            if !(reference_range_m > 0.0) {
                return Err(Error::invalid("reference_range_m", "must be > 0"));
            }
        }
        let emitters = self
            .emitters
            .into_iter()
            .map(|e| -> Result<Emitter> {
                Ok(match e {
                    Emitter::Uav { uav, trajectory } => Emitter::Uav {
                        uav: uav.validate()?,
                        trajectory: trajectory.validate(max_range)?,
                    },
                    Emitter::StaticClutter {
                        range_m,
                        reflectivity,
                    } => {
                        if !(range_m > 0.0 && range_m < max_range) {
                            return Err(Error::invalid(
                                "range_m",
                                format!("clutter range {range_m} outside (0, {max_range:.3})"),
                            ));
                        }
                        if !(reflectivity >= 0.0) {
                            return Err(Error::invalid("reflectivity", "must be >= 0"));
                        }
                        Emitter::StaticClutter {
                            range_m,
                            reflectivity,
                        }
                    }
                    Emitter::Distractor { kind, params } => {
                        let params = params.validate(kind)?;
                        if params.range_m >= max_range {
                            return Err(Error::invalid(
                                "range_m",
                                format!("distractor range {} beyond {max_range:.3}", params.range_m),
                            ));
                        }
                        Emitter::Distractor { kind, params }
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { emitters, ..self })
    }
}

/// `R_q(t) + r_pq · cos(ωt + φ_pq) · cos(θ_pq)` for scatterer `p` of rotor
/// `q`.
pub fn scatterer_range(
    uav: &UavConfig,
    traj: &TrajectorySpec,
    p: usize,
    q: usize,
    t: f64,
) -> Result<f64> {
    let per = uav.scatterers_per_blade_assembly;
    if p >= per || q >= uav.rotor_count {
        return Err(Error::OutOfRange {
            what: "scatterer index",
            detail: format!("(p={p}, q={q}) with P={per}, Q={}", uav.rotor_count),
        });
    }
    let i = q * per + p;
    let hub = traj.range_at(t)? + uav.rotor_offset_m(q);
    Ok(hub + blade_term(uav, i, t))
}

fn blade_term(uav: &UavConfig, i: usize, t: f64) -> f64 {
    uav.scatterer_radii_m[i]
        * (uav.rotor_angular_velocity_rad_per_s * t + uav.initial_phases_rad[i]).cos()
        * uav.blade_plane_angle_rad[i].cos()
}

/// Phase of an oscillating part sampled at every chirp boundary.
#[derive(Debug, Clone)]
struct PhaseTable {
    step_s: f64,
    phases: Vec<f64>,
}

impl PhaseTable {
    fn at(&self, t: f64) -> f64 {
        let x = (t / self.step_s).max(0.0);
        let i = (x.floor() as usize).min(self.phases.len() - 2);
        let frac = x - i as f64;
        self.phases[i] + frac * (self.phases[i + 1] - self.phases[i])
    }

    /// Random-walk phase: mean advance `2π f T_c` plus Gaussian steps.
    fn random_walk(radar: &RadarConfig, n_chirps: usize, freq_hz: f64, step_std: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let step = Normal::new(0.0, step_std.max(0.0)).expect("finite std");
        let mean = 2.0 * PI * freq_hz * radar.chirp_duration_s;
        let mut phases = Vec::with_capacity(n_chirps + 2);
        let mut psi = r.random::<f64>() * 2.0 * PI;
        for _ in 0..n_chirps + 2 {
            phases.push(psi);
            psi += mean + step.sample(&mut r);
        }
        Self {
            step_s: radar.chirp_duration_s,
            phases,
        }
    }

    /// Integrated phase of a frequency that moves by `±drift` (relative) per
    /// frame, linearly within each frame, reflected into `[f0/3, 3·f0]`.
    fn drifting(radar: &RadarConfig, n_frames: usize, f0: f64, drift: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let lo = f0 / 3.0;
        let hi = f0 * 3.0;
        let mut knots = Vec::with_capacity(n_frames + 2);
        let mut f = f0;
        for _ in 0..n_frames + 2 {
            knots.push(f);
            let up = r.random::<bool>();
            let mut next = if up { f * (1.0 + drift) } else { f * (1.0 - drift) };
            if next > hi || next < lo {
                next = if up { f * (1.0 - drift) } else { f * (1.0 + drift) };
            }
            f = next;
        }
        let l = radar.chirps_per_frame;
        let n_chirps = n_frames * l;
        let mut phases = Vec::with_capacity(n_chirps + 2);
        let mut psi = r.random::<f64>() * 2.0 * PI;
        for k in 0..n_chirps + 2 {
            phases.push(psi);
            let frame = k / l;
            let frac = (k % l) as f64 / l as f64;
            let freq = knots[frame] + frac * (knots[frame + 1] - knots[frame]);
            psi += 2.0 * PI * freq * radar.chirp_duration_s;
        }
        Self {
            step_s: radar.chirp_duration_s,
            phases,
        }
    }
}

#[derive(Debug, Clone)]
enum Motion<'a> {
    Fixed(f64),
    Linear { r0: f64, v: f64 },
    Trajectory { traj: &'a TrajectorySpec, offset: f64 },
    Blade {
        traj: &'a TrajectorySpec,
        offset: f64,
        /// `r · cos θ`
        projected_radius: f64,
        omega: f64,
        phase: f64,
    },
    Oscillating {
        r0: f64,
        v: f64,
        amplitude: f64,
        phase: PhaseTable,
    },
}

impl Motion<'_> {
    fn range(&self, t: f64) -> Result<f64> {
        Ok(match self {
            Motion::Fixed(r) => *r,
            Motion::Linear { r0, v } => r0 + v * t,
            Motion::Trajectory { traj, offset } => traj.range_at(t)? + offset,
            Motion::Blade {
                traj,
                offset,
                projected_radius,
                omega,
                phase,
            } => traj.range_at(t)? + offset + projected_radius * (omega * t + phase).cos(),
            Motion::Oscillating {
                r0,
                v,
                amplitude,
                phase,
            } => r0 + v * t + amplitude * phase.at(t).cos(),
        })
    }
}

impl Motion<'_> {
    /// Ranges at `t_start + n·dt` for every slot of `out`. Matches
    /// [`Motion::range`] up to rounding; trajectory lookups are hoisted out of
    /// the sample loop when the chirp lies inside one segment, and blade
    /// rotation advances by complex multiplication.
    fn fill_chirp(&self, t_start: f64, dt: f64, out: &mut [f64]) -> Result<()> {
        let t_end = t_start + dt * out.len().saturating_sub(1) as f64;
        let (traj, offset) = match self {
            Motion::Trajectory { traj, offset } | Motion::Blade { traj, offset, .. } => (*traj, *offset),
            _ => {
                for (n, o) in out.iter_mut().enumerate() {
                    *o = self.range(t_start + n as f64 * dt)?;
                }
                return Ok(());
            }
        };
        let seg = traj.segment_at(t_start)?;
        if std::ptr::eq(seg, traj.segment_at(t_end)?) {
            for (n, o) in out.iter_mut().enumerate() {
                *o = seg.range_at(t_start + n as f64 * dt) + offset;
            }
        } else {
            for (n, o) in out.iter_mut().enumerate() {
                *o = traj.range_at(t_start + n as f64 * dt)? + offset;
            }
        }
        if let Motion::Blade {
            projected_radius,
            omega,
            phase,
            ..
        } = self
        {
            let step = Complex64::from_polar(1.0, omega * dt);
            let mut z = Complex64::from_polar(1.0, omega * t_start + phase);
            for o in out.iter_mut() {
                *o += projected_radius * z.re;
                z *= step;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Reflector<'a> {
    amplitude: f64,
    motion: Motion<'a>,
}

fn reflectors<'a>(scene: &'a SceneSpec, radar: &RadarConfig, n_frames: usize) -> Vec<Reflector<'a>> {
    let n_chirps = n_frames * radar.chirps_per_frame;
    let distractor_seed = derive_seed(scene.rng_seed, "echo/distractor");
    let mut out = Vec::new();
    for (idx, e) in scene.emitters.iter().enumerate() {
        match e {
            Emitter::Uav { uav, trajectory } => {
                out.push(Reflector {
                    amplitude: uav.body_reflectivity,
                    motion: Motion::Trajectory {
                        traj: trajectory,
                        offset: 0.0,
                    },
                });
                let per = uav.scatterers_per_blade_assembly;
                for q in 0..uav.rotor_count {
                    for p in 0..per {
                        let i = q * per + p;
                        out.push(Reflector {
                            amplitude: uav.scatterer_reflectivities[i],
                            motion: Motion::Blade {
                                traj: trajectory,
                                offset: uav.rotor_offset_m(q),
                                projected_radius: uav.scatterer_radii_m[i]
                                    * uav.blade_plane_angle_rad[i].cos(),
                                omega: uav.rotor_angular_velocity_rad_per_s,
                                phase: uav.initial_phases_rad[i],
                            },
                        });
                    }
                }
            }
            Emitter::StaticClutter {
                range_m,
                reflectivity,
            } => out.push(Reflector {
                amplitude: *reflectivity,
                motion: Motion::Fixed(*range_m),
            }),
            Emitter::Distractor { kind, params } => {
                let seed = substream(distractor_seed, idx as u64);
                out.extend(distractor_reflectors(*kind, params, radar, n_frames, n_chirps, seed));
            }
        }
    }
    out
}

fn distractor_reflectors<'a>(
    kind: DistractorKind,
    params: &DistractorParams,
    radar: &RadarConfig,
    n_frames: usize,
    n_chirps: usize,
    seed: u64,
) -> Vec<Reflector<'a>> {
    let r0 = params.range_m;
    let v = params.radial_velocity_m_per_s;
    match kind {
        DistractorKind::StaticBlob => vec![Reflector {
            amplitude: params.body_reflectivity,
            motion: Motion::Fixed(r0),
        }],
        DistractorKind::AperiodicFlapper | DistractorKind::SlowOscillator => {
            let phase = if kind == DistractorKind::AperiodicFlapper {
                PhaseTable::random_walk(
                    radar,
                    n_chirps,
                    params.base_frequency_hz,
                    params.phase_step_std_rad,
                    seed,
                )
            } else {
                PhaseTable::drifting(
                    radar,
                    n_frames,
                    params.base_frequency_hz,
                    params.drift_per_frame,
                    seed,
                )
            };
            vec![
                Reflector {
                    amplitude: params.body_reflectivity,
                    motion: Motion::Linear { r0, v },
                },
                Reflector {
                    amplitude: params.part_reflectivity,
                    motion: Motion::Oscillating {
                        r0,
                        v,
                        amplitude: params.displacement_amplitude_m,
                        phase,
                    },
                },
            ]
        }
    }
}

fn frame_start(radar: &RadarConfig, frame_index: usize) -> f64 {
    frame_index as f64 * radar.frame_duration_s()
}

fn check_ranges(reflectors: &[Reflector], radar: &RadarConfig, frame_index: usize) -> Result<()> {
    let max_range = radar.max_range_m();
    let t0 = frame_start(radar, frame_index);
    let t1 = t0 + radar.frame_duration_s();
    for r in reflectors {
        for t in [t0, t1] {
            let range = r.motion.range(t)?;
            if !(range > 0.0 && range < max_range) {
                return Err(Error::OutOfRange {
                    what: "emitter range",
                    detail: format!(
                        "{range:.3} m at t = {t:.3} s outside (0, {max_range:.3}) m"
                    ),
                });
            }
        }
    }
    Ok(())
}

fn render_frame(
    reflectors: &[Reflector],
    scene: &SceneSpec,
    radar: &RadarConfig,
    frame_index: usize,
) -> Result<Frame> {
    check_ranges(reflectors, radar, frame_index)?;
    let l_count = radar.chirps_per_frame;
    let n_count = radar.samples_per_chirp;
    let t0 = frame_start(radar, frame_index);
    let c = radar.speed_of_light_m_per_s;
    let fs = radar.adc_rate_hz;
    // 4π(f_c + Kτ)/c per fast-time sample.
    let wavenumber: Vec<f64> = (0..n_count)
        .map(|n| 4.0 * PI * (radar.carrier_freq_hz + radar.chirp_slope_hz_per_s * n as f64 / fs) / c)
        .collect();

    let mut samples = Array2::<Complex64>::zeros((l_count, n_count));
    let mut ranges = vec![0.0; n_count];
    for refl in reflectors {
        if refl.amplitude == 0.0 {
            continue;
        }
        for l in 0..l_count {
            let t_chirp = t0 + l as f64 * radar.chirp_duration_s;
            let gain = refl.amplitude * scene.propagation.gain(refl.motion.range(t_chirp)?);
            refl.motion.fill_chirp(t_chirp, 1.0 / fs, &mut ranges)?;
            let mut row = samples.row_mut(l);
            for ((out, k), r) in row.iter_mut().zip(&wavenumber).zip(&ranges) {
                *out += Complex64::from_polar(gain, k * r);
            }
        }
    }

    if scene.noise_std > 0.0 {
        let mut r = rng(substream(derive_seed(scene.rng_seed, "echo/noise"), frame_index as u64));
        let normal = Normal::new(0.0, scene.noise_std / 2f64.sqrt()).expect("finite std");
        for s in samples.iter_mut() {
            *s += Complex64::new(normal.sample(&mut r), normal.sample(&mut r));
        }
    }

    Ok(Frame {
        frame_index,
        start_time_s: t0,
        samples,
    })
}

/// Frame `frame_index` of the scene. Frames start every `L·T_c` seconds.
pub fn synthesize_frame(scene: &SceneSpec, radar: &RadarConfig, frame_index: usize) -> Result<Frame> {
    let refl = reflectors(scene, radar, frame_index + 1);
    render_frame(&refl, scene, radar, frame_index)
}

/// Frames `0..n_frames`, rendered in parallel. Identical to calling
/// [`synthesize_frame`] for each index.
pub fn synthesize_capture(scene: &SceneSpec, radar: &RadarConfig, n_frames: usize) -> Result<Vec<Frame>> {
    let refl = reflectors(scene, radar, n_frames);
    (0..n_frames)
        .into_par_iter()
        .map(|i| render_frame(&refl, scene, radar, i))
        .collect()
}

/// Noise-free frame stream of a single distractor.
pub fn synthesize_distractor_frames(
    kind: DistractorKind,
    params: &DistractorParams,
    radar: &RadarConfig,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<Frame>> {
    let params = params.clone().validate(kind)?;
    let scene = SceneSpec::new(vec![Emitter::Distractor { kind, params }], 0.0, seed);
    synthesize_capture(&scene, radar, n_frames)
}
