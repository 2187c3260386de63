//! Range-FFT and Doppler-FFT.
//!
//! Both transforms use unit-norm (`1/√N`) scaling, so white noise keeps its
//! per-bin power and folding thresholds do not depend on FFT length. After
//! the Doppler-FFT the Doppler axis is centre-shifted: zero Doppler sits at
//! bin `floor(L/2)`.

use ndarray::{Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::echo::Frame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    /// Hann taper normalised to unit mean power.
    Hann,
}

impl Window {
    fn coefficients(&self, n: usize) -> Option<Vec<f64>> {
        match self {
            Window::Rectangular => None,
            Window::Hann => {
                let w: Vec<f64> = (0..n)
                    .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                    .collect();
                let rms = (w.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
                Some(w.into_iter().map(|x| x / rms).collect())
            }
        }
    }
}

/// Magnitude Range-Doppler spectrum, `[range bins × Doppler bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub frame_index: usize,
    pub start_time_s: f64,
    pub magnitudes: Array2<f64>,
}

impl RangeDopplerMap {
    pub fn range_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn doppler_bins(&self) -> usize {
        self.magnitudes.ncols()
    }

    pub fn dc_bin(&self) -> usize {
        self.doppler_bins() / 2
    }

    /// Doppler spectrum of one range bin.
    pub fn doppler_row(&self, range_bin: usize) -> Result<ArrayView1<'_, f64>> {
        if range_bin >= self.range_bins() {
            return Err(Error::OutOfRange {
                what: "range bin",
                detail: format!("{range_bin} >= {}", self.range_bins()),
            });
        }
        Ok(self.magnitudes.row(range_bin))
    }
}

/// Reusable FFT plans for one frame geometry.
pub struct RdProcessor {
    range_fft: Arc<dyn Fft<f64>>,
    doppler_fft: Arc<dyn Fft<f64>>,
    range_window: Option<Vec<f64>>,
    doppler_window: Option<Vec<f64>>,
    chirps: usize,
    samples: usize,
}

impl std::fmt::Debug for RdProcessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RdProcessor")
            .field("chirps", &self.chirps)
            .field("samples", &self.samples)
            .finish()
    }
}

impl RdProcessor {
    pub fn new(chirps: usize, samples: usize) -> Self {
        Self::with_windows(chirps, samples, Window::Rectangular, Window::Rectangular)
    }

    pub fn with_windows(chirps: usize, samples: usize, range: Window, doppler: Window) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            range_fft: planner.plan_fft_forward(samples),
            doppler_fft: planner.plan_fft_forward(chirps),
            range_window: range.coefficients(samples),
            doppler_window: doppler.coefficients(chirps),
            chirps,
            samples,
        }
    }

    /// Per-chirp FFT over fast time: `[chirps × range bins]`.
    pub fn range_fft(&self, frame: &Frame) -> Result<Array2<Complex64>> {
        let s = &frame.samples;
        if s.dim() != (self.chirps, self.samples) {
            return Err(Error::ShapeMismatch {
                context: "range_fft",
                expected: format!("{}x{}", self.chirps, self.samples),
                actual: format!("{}x{}", s.nrows(), s.ncols()),
            });
        }
        if s.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("frame samples"));
        }
        let scale = 1.0 / (self.samples as f64).sqrt();
        let mut out = s.to_owned();
        if let Some(w) = &self.range_window {
            for mut row in out.rows_mut() {
                row.iter_mut().zip(w).for_each(|(x, &g)| *x *= g);
            }
        }
        let buf = out.as_slice_mut().expect("standard layout");
        self.range_fft.process(buf);
        buf.iter_mut().for_each(|x| *x *= scale);
        Ok(out)
    }

    /// Per-range-bin FFT over slow time, centre-shifted magnitude.
    pub fn doppler_fft(&self, range_matrix: &Array2<Complex64>, frame_index: usize, start_time_s: f64) -> Result<RangeDopplerMap> {
        if range_matrix.dim() != (self.chirps, self.samples) {
            return Err(Error::ShapeMismatch {
                context: "doppler_fft",
                expected: format!("{}x{}", self.chirps, self.samples),
                actual: format!("{}x{}", range_matrix.nrows(), range_matrix.ncols()),
            });
        }
        if range_matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("range matrix"));
        }
        let l = self.chirps;
        let scale = 1.0 / (l as f64).sqrt();
        let shift = l / 2;
        // Transposed copy: one contiguous slow-time series per range bin.
        let mut slow = range_matrix.t().as_standard_layout().into_owned();
        if let Some(w) = &self.doppler_window {
            for mut row in slow.rows_mut() {
                row.iter_mut().zip(w).for_each(|(x, &g)| *x *= g);
            }
        }
        self.doppler_fft.process(slow.as_slice_mut().expect("standard layout"));
        let mut mags = Array2::<f64>::zeros((self.samples, l));
        for (src, mut dst) in slow.axis_iter(Axis(0)).zip(mags.axis_iter_mut(Axis(0))) {
            for (k, v) in src.iter().enumerate() {
                dst[(k + shift) % l] = v.norm() * scale;
            }
        }
        Ok(RangeDopplerMap {
            frame_index,
            start_time_s,
            magnitudes: mags,
        })
    }

    pub fn process(&self, frame: &Frame) -> Result<RangeDopplerMap> {
        let rm = self.range_fft(frame)?;
        self.doppler_fft(&rm, frame.frame_index, frame.start_time_s)
    }

    /// Maps for a whole capture, in frame order.
    pub fn process_all(&self, frames: &[Frame]) -> Result<Vec<RangeDopplerMap>> {
        frames.par_iter().map(|f| self.process(f)).collect()
    }
}

/// Comb spacing of a Doppler row from its circular autocorrelation.
///
/// Returns the smallest lag in `[2, max_lag]` that is a local maximum of the
/// mean-removed autocorrelation and reaches half of the largest value in that
/// lag range, together with its normalised strength (autocorrelation divided
/// by the zero-lag value). `None` for flat rows.
pub fn comb_spacing(row: ArrayView1<'_, f64>, max_lag: usize) -> Option<(usize, f64)> {
    let l = row.len();
    let max_lag = max_lag.min(l / 2);
    if max_lag < 2 {
        return None;
    }
    let mean = row.mean()?;
    let x: Vec<f64> = row.iter().map(|v| v - mean).collect();
    let ac = |lag: usize| -> f64 { (0..l).map(|i| x[i] * x[(i + lag) % l]).sum() };
    let zero = ac(0);
    if zero <= 0.0 {
        return None;
    }
    let vals: Vec<f64> = (0..=max_lag + 1).map(|k| ac(k) / zero).collect();
    let best = vals[2..=max_lag].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return None;
    }
    (2..=max_lag)
        .find(|&k| vals[k] >= 0.5 * best && vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1])
        .map(|k| (k, vals[k]))
}

/// Whether a row carries a periodic comb with normalised autocorrelation
/// strength at least `min_strength`.
pub fn has_comb(row: ArrayView1<'_, f64>, max_lag: usize, min_strength: f64) -> bool {
    comb_spacing(row, max_lag).is_some_and(|(_, s)| s >= min_strength)
}

/// Median distance between adjacent local maxima that exceed `min_ratio`
/// times the row median. `None` with fewer than two such peaks.
pub fn peak_spacing(row: ArrayView1<'_, f64>, min_ratio: f64) -> Option<usize> {
    let l = row.len();
    let mut sorted: Vec<f64> = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = min_ratio * *sorted.get(l / 2)?;
    let peaks: Vec<usize> = (0..l)
        .filter(|&i| {
            let v = row[i];
            v > floor && (i == 0 || v > row[i - 1]) && (i + 1 == l || v >= row[i + 1])
        })
        .collect();
    let mut gaps: Vec<usize> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_unstable();
    Some(gaps[gaps.len() / 2])
}

/// Doppler bin (centre-shifted) where a tone at `freq_hz` lands after
/// aliasing at `prf_hz`.
pub fn doppler_bin_of(freq_hz: f64, prf_hz: f64, bins: usize) -> usize {
    let wrapped = (freq_hz + prf_hz / 2.0).rem_euclid(prf_hz) - prf_hz / 2.0;
    let offset = (wrapped / (prf_hz / bins as f64)).round() as i64;
    (bins as i64 / 2 + offset).rem_euclid(bins as i64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use crate::config::{RadarConfig, TrajectorySpec, UavConfig};
    use crate::echo::{synthesize_frame, Emitter, SceneSpec};

    fn map_of(scene: &SceneSpec, radar: &RadarConfig) -> RangeDopplerMap {
        let f = synthesize_frame(scene, radar, 0).unwrap();
        RdProcessor::new(radar.chirps_per_frame, radar.samples_per_chirp)
            .process(&f)
            .unwrap()
    }

    fn argmax(v: ArrayView1<'_, f64>) -> usize {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
            .0
    }

    fn clutter(range_m: f64) -> Emitter {
        Emitter::StaticClutter {
            range_m,
            reflectivity: 1.0,
        }
    }

    #[test]
    fn static_point_range_bin_is_beat_frequency() {
        let radar = RadarConfig::default();
        let scene = SceneSpec::new(vec![clutter(30.0)], 0.0, 0);
        let f = synthesize_frame(&scene, &radar, 0).unwrap();
        let p = RdProcessor::new(100, 256);
        let rm = p.range_fft(&f).unwrap();
        // 2·K·R/c · N_s/f_s = 81.87 -> 82
        let expect = (2.0 * 9.994e12 * 30.0 / 3e8 * 256.0 / 6.25e6_f64).round() as usize;
        assert_eq!(expect, 82);
        for row in rm.rows() {
            let mags = row.mapv(|c| c.norm());
            assert_eq!(argmax(mags.view()), expect);
        }
        let map = p.doppler_fft(&rm, 0, 0.0).unwrap();
        assert_eq!(argmax(map.doppler_row(82).unwrap()), map.dc_bin());
    }

    #[test]
    fn zero_input_zero_output() {
        let p = RdProcessor::new(8, 16);
        let f = Frame {
            frame_index: 0,
            start_time_s: 0.0,
            samples: Array2::zeros((8, 16)),
        };
        let map = p.process(&f).unwrap();
        assert!(map.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn two_points_resolve_like_single_runs() {
        let radar = RadarConfig::default();
        let bin = |scene: &SceneSpec| {
            let m = map_of(scene, &radar);
            argmax(m.magnitudes.column(m.dc_bin()))
        };
        let a = bin(&SceneSpec::new(vec![clutter(12.0)], 0.0, 0));
        let b = bin(&SceneSpec::new(vec![clutter(60.0)], 0.0, 0));
        let both = map_of(&SceneSpec::new(vec![clutter(12.0), clutter(60.0)], 0.0, 0), &radar);
        let col = both.magnitudes.column(both.dc_bin());
        let mut order: Vec<usize> = (0..col.len()).collect();
        order.sort_by(|&i, &j| col[j].total_cmp(&col[i]));
        let mut top = [order[0], order[1]];
        top.sort();
        assert_eq!(top, [a, b]);
    }

    #[test]
    fn moving_body_doppler_is_aliased() {
        let radar = RadarConfig::default();
        let mut uav = UavConfig::default();
        uav.scatterer_reflectivities.iter_mut().for_each(|b| *b = 0.0);
        let scene = SceneSpec::new(
            vec![Emitter::Uav {
                uav,
                trajectory: TrajectorySpec::constant_velocity(30.0, 1.5, 1.0),
            }],
            0.0,
            0,
        );
        let m = map_of(&scene, &radar);
        let row_bin = argmax(m.magnitudes.map_axis(Axis(1), |r| r.sum()).view());
        let got = argmax(m.doppler_row(row_bin).unwrap()) as i64;
        // 602.5 Hz wraps to -508.6 Hz at a 1111.1 Hz PRF: 45.8 bins below DC.
        let predicted = 50.0 + (602.5 - 1.0 / 900e-6) / (1.0 / 0.09);
        assert!((got as f64 - predicted).abs() <= 1.0, "{got} vs {predicted}");
        assert_eq!(doppler_bin_of(602.5, 1.0 / 900e-6, 100), 4);
    }

    #[test]
    fn blade_comb_spacing_five_bins() {
        let radar = RadarConfig::default();
        let scene = SceneSpec::new(
            vec![Emitter::Uav {
                uav: UavConfig::hexacopter(55.6),
                trajectory: TrajectorySpec::hover(48.0, 1.0),
            }],
            2.0,
            0,
        );
        let m = map_of(&scene, &radar);
        let row = m.doppler_row(131).unwrap();
        let (spacing, strength) = comb_spacing(row, 20).unwrap();
        assert_eq!(spacing, 5, "strength {strength}");
        assert!(has_comb(row, 20, 0.3));
        // Neighbouring bins carry almost no leakage at an on-bin range.
        for empty in [129, 133, 60] {
            assert!(!has_comb(m.doppler_row(empty).unwrap(), 20, 0.3), "bin {empty}");
        }
    }

    #[test]
    fn peak_spacing_of_sparse_comb() {
        let mut row = Array1::from_elem(100, 0.1);
        for k in [14usize, 26, 38, 50, 62, 74, 86] {
            row[k] = 5.0;
        }
        row[50] = 40.0;
        // A missing line doubles one gap but not the median.
        row[26] = 0.1;
        assert_eq!(peak_spacing(row.view(), 4.0), Some(12));
        assert_eq!(peak_spacing(Array1::from_elem(100, 1.0).view(), 4.0), None);
    }

    #[test]
    fn rows_partition_the_map() {
        let radar = RadarConfig {
            chirps_per_frame: 8,
            samples_per_chirp: 16,
            adc_rate_hz: 6.25e6 / 16.0,
            ..RadarConfig::default()
        };
        let m = map_of(&SceneSpec::new(vec![clutter(2.0)], 0.5, 4), &radar);
        let rows: Vec<f64> = (0..m.range_bins())
            .flat_map(|r| m.doppler_row(r).unwrap().to_vec())
            .collect();
        assert_eq!(rows, m.magnitudes.iter().copied().collect::<Vec<_>>());
        assert!(m.doppler_row(16).is_err());
    }

    #[test]
    fn unit_norm_fft_conserves_energy() {
        let radar = RadarConfig::default();
        let f = synthesize_frame(&SceneSpec::new(vec![clutter(20.0)], 1.0, 11), &radar, 0).unwrap();
        let p = RdProcessor::new(100, 256);
        let e_in: f64 = f.samples.iter().map(|c| c.norm_sqr()).sum();
        let rm = p.range_fft(&f).unwrap();
        let e_mid: f64 = rm.iter().map(|c| c.norm_sqr()).sum();
        let map = p.doppler_fft(&rm, 0, 0.0).unwrap();
        let e_out: f64 = map.magnitudes.iter().map(|m| m * m).sum();
        assert!((e_mid - e_in).abs() / e_in < 1e-6);
        assert!((e_out - e_in).abs() / e_in < 1e-6);
    }

    #[test]
    fn non_finite_rejected() {
        let p = RdProcessor::new(2, 4);
        let mut s = Array2::zeros((2, 4));
        s[[1, 2]] = Complex64::new(f64::NAN, 0.0);
        let f = Frame {
            frame_index: 0,
            start_time_s: 0.0,
            samples: s,
        };
        assert!(matches!(p.range_fft(&f), Err(Error::NonFinite(_))));
    }
}
