//! Trajectory recovery from the R-PMM diagram.
//!
//! 1. Spectral subtraction removes the static, range-dependent background:
//!    each column is projected onto the background profile `N(r)` and that
//!    component is subtracted.
//! 2. Dynamic programming finds the path with the largest cumulative folding
//!    result whose range bin moves by at most `K` bins per frame.
//! 3. A particle filter over (range, radial velocity) smooths the DP ranges.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::DerivedParams;
use crate::error::{Error, Result};
use crate::pmm::RPmmDiagram;
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// Time average of a separate background capture.
    Background,
    /// Per-range median over the capture itself (no background supplied).
    CaptureMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub n_of_r: Vec<f64>,
    pub euclidean_norm: f64,
    pub source: NoiseSource,
}

impl NoiseProfile {
    fn new(n_of_r: Vec<f64>, source: NoiseSource) -> Self {
        let euclidean_norm = n_of_r.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            n_of_r,
            euclidean_norm,
            source,
        }
    }
}

/// `N(r) = (1/T) Σ_t N(r, t)` over a background-only diagram.
pub fn estimate_noise_profile(background: &RPmmDiagram) -> Result<NoiseProfile> {
    let v = &background.values;
    if v.is_empty() {
        return Err(Error::Empty("background R-PMM"));
    }
    let t = v.ncols() as f64;
    let n = v.rows().into_iter().map(|row| row.sum() / t).collect();
    Ok(NoiseProfile::new(n, NoiseSource::Background))
}

/// Fallback profile when no background capture exists: the per-range median
/// over time. A target that stays in one bin for more than half the capture
/// leaks into this estimate.
pub fn median_noise_profile(rpmm: &RPmmDiagram) -> Result<NoiseProfile> {
    let v = &rpmm.values;
    if v.is_empty() {
        return Err(Error::Empty("R-PMM"));
    }
    let n = v
        .rows()
        .into_iter()
        .map(|row| {
            let mut s = row.to_vec();
            s.sort_by(f64::total_cmp);
            let m = s.len();
            if m % 2 == 1 {
                s[m / 2]
            } else {
                0.5 * (s[m / 2 - 1] + s[m / 2])
            }
        })
        .collect();
    Ok(NoiseProfile::new(n, NoiseSource::CaptureMedian))
}

/// `S'(r,t) = S(r,t) − G(t)·N(r)` with `G(t) = Σ_r N(r)·S(r,t) / ‖N‖²`.
/// Negative results are kept.
pub fn spectral_subtract(rpmm: &RPmmDiagram, noise: &NoiseProfile) -> Result<RPmmDiagram> {
    let r = rpmm.range_bins();
    if noise.n_of_r.len() != r {
        return Err(Error::ShapeMismatch {
            context: "spectral_subtract",
            expected: format!("{r} range bins"),
            actual: format!("{} profile entries", noise.n_of_r.len()),
        });
    }
    let norm_sq: f64 = noise.n_of_r.iter().map(|v| v * v).sum();
    if !(norm_sq > 0.0) {
        return Err(Error::Degenerate("noise profile has zero norm".into()));
    }
    let mut out = rpmm.values.clone();
    for mut col in out.columns_mut() {
        let gain = col
            .iter()
            .zip(&noise.n_of_r)
            .map(|(s, n)| s * n)
            .sum::<f64>()
            / norm_sq;
        col.iter_mut()
            .zip(&noise.n_of_r)
            .for_each(|(s, n)| *s -= gain * n);
    }
    Ok(rpmm.with_values(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpPath {
    pub range_bins: Vec<usize>,
    /// Diagram value along the path, per frame.
    pub scores: Vec<f64>,
    pub total_score: f64,
}

/// Constrained maximum path through `values` (`[range × time]`).
///
/// Forward pass `θ(r,t) = max_{|k|≤K} θ(r+k, t−1) + S(r,t)`, skipping
/// predecessors outside the diagram. Each cell stores its best predecessor;
/// the path is read back from the best final cell. Ties: the final cell with
/// the smaller range wins; among predecessors the smaller `|k|` wins, then
/// the smaller range.
pub fn dp_max_path(values: &Array2<f64>, k_bins: usize) -> Result<DpPath> {
    let (r_count, t_count) = values.dim();
    if r_count == 0 || t_count == 0 {
        return Err(Error::Empty("R-PMM"));
    }
    if k_bins == 0 {
        return Err(Error::OutOfRange {
            what: "constraint",
            detail: "k_bins must be >= 1".into(),
        });
    }
    let k = k_bins as i64;
    // Offsets in tie-break order: 0, -1, +1, -2, +2, ...
    let offsets: Vec<i64> = std::iter::once(0)
        .chain((1..=k).flat_map(|d| [-d, d]))
        .collect();

    let mut theta = values.column(0).to_vec();
    let mut back = Array2::<usize>::zeros((r_count, t_count));
    let mut next = vec![0.0; r_count];
    for t in 1..t_count {
        for r in 0..r_count {
            let mut best = f64::NEG_INFINITY;
            let mut arg = r;
            for &off in &offsets {
                let p = r as i64 + off;
                if p < 0 || p >= r_count as i64 {
                    continue;
                }
                let cand = theta[p as usize];
                if cand > best {
                    best = cand;
                    arg = p as usize;
                }
            }
            next[r] = best + values[[r, t]];
            back[[r, t]] = arg;
        }
        std::mem::swap(&mut theta, &mut next);
    }

    let (mut cur, total_score) = theta
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut range_bins = vec![0; t_count];
    for t in (0..t_count).rev() {
        range_bins[t] = cur;
        cur = back[[cur, t]];
    }
    let scores = range_bins
        .iter()
        .enumerate()
        .map(|(t, &r)| values[[r, t]])
        .collect();
    Ok(DpPath {
        range_bins,
        scores,
        total_score,
    })
}

/// Tracked target range per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub frame_indices: Vec<usize>,
    pub timestamps_s: Vec<f64>,
    pub range_bins: Vec<usize>,
    pub ranges_m: Vec<f64>,
    /// Particle-filter estimates; empty until [`particle_filter`] runs.
    pub filtered_ranges_m: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Track {
    pub fn from_path(path: &DpPath, rpmm: &RPmmDiagram, derived: &DerivedParams) -> Self {
        Self {
            frame_indices: rpmm.frame_indices.clone(),
            timestamps_s: rpmm.timestamps_s.clone(),
            range_bins: path.range_bins.clone(),
            ranges_m: path
                .range_bins
                .iter()
                .map(|&b| derived.bin_to_range_m(b))
                .collect(),
            filtered_ranges_m: Vec::new(),
            scores: path.scores.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.range_bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range_bins.is_empty()
    }

    /// Largest per-step change in range bin.
    pub fn max_step(&self) -> usize {
        self.range_bins
            .windows(2)
            .map(|w| w[0].abs_diff(w[1]))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    #[default]
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleFilterConfig {
    pub particle_count: usize,
    /// Per-frame process noise on range.
    pub process_noise_range_m: f64,
    /// Per-frame process noise on radial velocity.
    pub process_noise_velocity_m_per_s: f64,
    pub measurement_noise_std_m: f64,
    pub resample_scheme: ResampleScheme,
    pub rng_seed: u64,
}

impl ParticleFilterConfig {
    /// 5000 particles; process noise `R_res/2` and 0.5 m/s per frame;
    /// measurement noise `R_res`.
    pub fn for_radar(derived: &DerivedParams, rng_seed: u64) -> Self {
        Self {
            particle_count: 5000,
            process_noise_range_m: derived.range_bin_size_m / 2.0,
            process_noise_velocity_m_per_s: 0.5,
            measurement_noise_std_m: derived.range_bin_size_m,
            resample_scheme: ResampleScheme::Multinomial,
            rng_seed,
        }
    }

    pub fn validate(self) -> Result<Self> {
        if self.particle_count < 100 {
            return Err(Error::invalid("particle_count", "must be >= 100"));
        }
        for (f, v) in [
            ("process_noise_range_m", self.process_noise_range_m),
            ("process_noise_velocity_m_per_s", self.process_noise_velocity_m_per_s),
            ("measurement_noise_std_m", self.measurement_noise_std_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(f, "must be finite and > 0"));
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub ranges_m: Vec<f64>,
    pub velocities_m_per_s: Vec<f64>,
    /// Steps where every weight underflowed and particles were re-seeded
    /// around the observation.
    pub degenerate_resets: usize,
}

/// Sequential importance resampling over (range, velocity) with a
/// constant-velocity model and Gaussian range likelihood. Particles start
/// uniform over `[0, max_range] × [−v_max, v_max]`; resampling is
/// multinomial at every step; the estimate is the weighted mean range.
pub fn filter_ranges(
    observations_m: &[f64],
    cfg: &ParticleFilterConfig,
    derived: &DerivedParams,
) -> Result<FilterOutput> {
    if observations_m.is_empty() {
        return Err(Error::Empty("track"));
    }
    let cfg = cfg.clone().validate()?;
    let n = cfg.particle_count;
    let dt = derived.frame_duration_s;
    let vmax = derived.v_max_m_per_s;
    let mut r = rng(cfg.rng_seed);
    let proc_r = Normal::new(0.0, cfg.process_noise_range_m).expect("validated");
    let proc_v = Normal::new(0.0, cfg.process_noise_velocity_m_per_s).expect("validated");
    let meas = Normal::new(0.0, cfg.measurement_noise_std_m).expect("validated");
    let inv_two_var = 1.0 / (2.0 * cfg.measurement_noise_std_m.powi(2));

    let mut range: Vec<f64> = (0..n).map(|_| r.random::<f64>() * derived.max_range_m).collect();
    let mut vel: Vec<f64> = (0..n).map(|_| (2.0 * r.random::<f64>() - 1.0) * vmax).collect();
    let mut weights = vec![0.0; n];
    let mut cumulative = vec![0.0; n];
    let mut out = FilterOutput {
        ranges_m: Vec::with_capacity(observations_m.len()),
        velocities_m_per_s: Vec::with_capacity(observations_m.len()),
        degenerate_resets: 0,
    };

    for (step, &z) in observations_m.iter().enumerate() {
        if step > 0 {
            for (x, v) in range.iter_mut().zip(vel.iter_mut()) {
                *x += *v * dt + proc_r.sample(&mut r);
                *v += proc_v.sample(&mut r);
            }
        }
        let mut total = 0.0;
        for (w, &x) in weights.iter_mut().zip(&range) {
            *w = (-(z - x).powi(2) * inv_two_var).exp();
            total += *w;
        }
        if !(total > 0.0 && total.is_finite()) {
            out.degenerate_resets += 1;
            log::warn!("particle weights degenerate at step {step}; re-seeding around {z:.3} m");
            for (x, v) in range.iter_mut().zip(vel.iter_mut()) {
                *x = z + meas.sample(&mut r);
                *v = (2.0 * r.random::<f64>() - 1.0) * vmax;
            }
            weights.iter_mut().for_each(|w| *w = 1.0);
            total = n as f64;
        }
        let mut acc = 0.0;
        let (mut er, mut ev) = (0.0, 0.0);
        for i in 0..n {
            er += weights[i] * range[i];
            ev += weights[i] * vel[i];
            acc += weights[i];
            cumulative[i] = acc;
        }
        out.ranges_m.push(er / total);
        out.velocities_m_per_s.push(ev / total);

        // Multinomial resampling.
        let (old_r, old_v) = (range.clone(), vel.clone());
        for i in 0..n {
            let u = r.random::<f64>() * acc;
            let j = cumulative.partition_point(|&c| c <= u).min(n - 1);
            range[i] = old_r[j];
            vel[i] = old_v[j];
        }
    }
    Ok(out)
}

/// Runs [`filter_ranges`] on the track's DP ranges.
pub fn particle_filter(track: &Track, cfg: &ParticleFilterConfig, derived: &DerivedParams) -> Result<FilterOutput> {
    filter_ranges(&track.ranges_m, cfg, derived)
}

/// `(1/N) Σ |G(n) − T(n)| / G(n)` with `G` the true and `T` the tracked
/// range.
pub fn relative_range_error(tracked_m: &[f64], truth_m: &[f64]) -> Result<f64> {
    if tracked_m.len() != truth_m.len() {
        return Err(Error::ShapeMismatch {
            context: "relative_range_error",
            expected: format!("{} truth samples", truth_m.len()),
            actual: format!("{} tracked samples", tracked_m.len()),
        });
    }
    if truth_m.is_empty() {
        return Err(Error::Empty("range series"));
    }
    if let Some(bad) = truth_m.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::OutOfRange {
            what: "true range",
            detail: format!("{bad} must be > 0"),
        });
    }
    Ok(tracked_m
        .iter()
        .zip(truth_m)
        .map(|(t, g)| (g - t).abs() / g)
        .sum::<f64>()
        / truth_m.len() as f64)
}
