//! Doppler-Time extraction, DC removal, feature alignment and segment
//! filtering.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmm::folding_result;
use crate::rd::RangeDopplerMap;
use crate::tracker::Track;

/// Threshold used on raw captures from the reference board.
pub const RAW_CAPTURE_THRESHOLD: f64 = 30000.0;

/// Doppler bins within this distance of DC count as "at DC" for DC removal.
pub const DEFAULT_DC_GUARD_BINS: usize = 2;

/// Doppler spectra at the tracked range bin, `[frames × Doppler bins]`
/// (one row per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerTimeDiagram {
    pub columns: Array2<f64>,
    pub frame_indices: Vec<usize>,
    pub timestamps_s: Vec<f64>,
    pub range_bins: Vec<usize>,
}

impl DopplerTimeDiagram {
    pub fn frames(&self) -> usize {
        self.columns.nrows()
    }

    pub fn doppler_bins(&self) -> usize {
        self.columns.ncols()
    }

    pub fn dc_bin(&self) -> usize {
        self.doppler_bins() / 2
    }

    fn with_columns(&self, columns: Array2<f64>) -> Self {
        Self {
            columns,
            ..self.clone()
        }
    }
}

pub fn extract_doppler_time(maps: &[RangeDopplerMap], track: &Track) -> Result<DopplerTimeDiagram> {
    if maps.len() != track.len() {
        return Err(Error::ShapeMismatch {
            context: "extract_doppler_time",
            expected: format!("{} maps", track.len()),
            actual: format!("{}", maps.len()),
        });
    }
    let first = maps.first().ok_or(Error::Empty("Range-Doppler map sequence"))?;
    let l = first.doppler_bins();
    let mut columns = Array2::zeros((maps.len(), l));
    for (t, (map, &bin)) in maps.iter().zip(&track.range_bins).enumerate() {
        if track.frame_indices.get(t) != Some(&map.frame_index) {
            return Err(Error::ShapeMismatch {
                context: "extract_doppler_time",
                expected: format!("frame index {:?}", track.frame_indices.get(t)),
                actual: format!("{}", map.frame_index),
            });
        }
        columns.row_mut(t).assign(&map.doppler_row(bin)?);
    }
    Ok(DopplerTimeDiagram {
        columns,
        frame_indices: track.frame_indices.clone(),
        timestamps_s: maps.iter().map(|m| m.start_time_s).collect(),
        range_bins: track.range_bins.clone(),
    })
}

/// Index of the largest value; ties go to the bin closest to `dc`, then to
/// the lower index.
pub fn body_peak(col: ArrayView1<'_, f64>, dc: usize) -> usize {
    let mut best = dc.min(col.len().saturating_sub(1));
    for (i, &v) in col.iter().enumerate() {
        let b = col[best];
        if v > b || (v == b && i.abs_diff(dc) < best.abs_diff(dc)) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcRemoval {
    /// Mean DC value over the qualifying frames that was subtracted.
    pub subtracted: f64,
    pub qualifying_frames: usize,
    /// Set when no frame had its body peak away from DC; nothing subtracted.
    pub no_qualifying_frames: bool,
}

/// Subtracts the DC level measured in frames whose body-velocity peak lies
/// more than `guard_bins` from DC. Hovering frames (peak at DC) keep their
/// body peak out of the estimate. Results are clamped at 0.
pub fn dc_removal(diagram: &DopplerTimeDiagram, guard_bins: usize) -> Result<(DopplerTimeDiagram, DcRemoval)> {
    if diagram.frames() == 0 || diagram.doppler_bins() == 0 {
        return Err(Error::Empty("Doppler-Time diagram"));
    }
    let dc = diagram.dc_bin();
    let qualifying: Vec<f64> = diagram
        .columns
        .rows()
        .into_iter()
        .filter(|col| body_peak(*col, dc).abs_diff(dc) > guard_bins)
        .map(|col| col[dc])
        .collect();
    if qualifying.is_empty() {
        return Ok((
            diagram.clone(),
            DcRemoval {
                subtracted: 0.0,
                qualifying_frames: 0,
                no_qualifying_frames: true,
            },
        ));
    }
    let mean = qualifying.iter().sum::<f64>() / qualifying.len() as f64;
    let mut cols = diagram.columns.clone();
    cols.column_mut(dc).mapv_inplace(|v| (v - mean).max(0.0));
    Ok((
        diagram.with_columns(cols),
        DcRemoval {
            subtracted: mean,
            qualifying_frames: qualifying.len(),
            no_qualifying_frames: false,
        },
    ))
}

/// Shifts one spectrum so `peak` lands on `dc`. Bins vacated by the shift
/// are filled by a linear ramp from the new edge value down towards 0.
fn align_column(col: ArrayView1<'_, f64>, peak: usize, dc: usize) -> Vec<f64> {
    let l = col.len();
    let shift = dc as i64 - peak as i64;
    if shift == 0 {
        return col.to_vec();
    }
    let mut out = vec![0.0; l];
    for (i, o) in out.iter_mut().enumerate() {
        let src = i as i64 - shift;
        if (0..l as i64).contains(&src) {
            *o = col[src as usize];
        }
    }
    let s = shift.unsigned_abs() as usize;
    if shift > 0 {
        // Vacated 0..s, edge value now at index s.
        let edge = out[s];
        for (i, o) in out.iter_mut().enumerate().take(s) {
            *o = edge * (i + 1) as f64 / (s + 1) as f64;
        }
    } else {
        // Vacated l-s..l, edge at l-s-1.
        let edge = out[l - s - 1];
        for k in 0..s {
            out[l - s + k] = edge * (s - k) as f64 / (s + 1) as f64;
        }
    }
    out
}

/// Moves every frame's body-velocity peak to the DC bin.
pub fn feature_alignment(diagram: &DopplerTimeDiagram) -> DopplerTimeDiagram {
    let dc = diagram.dc_bin();
    let mut cols = diagram.columns.clone();
    for mut row in cols.axis_iter_mut(Axis(0)) {
        let peak = body_peak(row.view(), dc);
        let aligned = align_column(row.view(), peak, dc);
        row.iter_mut().zip(aligned).for_each(|(o, v)| *o = v);
    }
    diagram.with_columns(cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Uav,
    Other,
    Unlabeled,
}

impl Label {
    pub fn class_index(&self) -> Option<usize> {
        match self {
            Label::Uav => Some(1),
            Label::Other => Some(0),
            Label::Unlabeled => None,
        }
    }

    pub fn from_class(i: usize) -> Self {
        if i == 1 {
            Label::Uav
        } else {
            Label::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// `[W frames × L Doppler bins]`
    pub data: Array2<f64>,
    pub label: Label,
    pub max_folding_result: f64,
    pub passed_filter: bool,
    pub start_frame: usize,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Threshold {
    Fixed { value: f64 },
    /// `mean + sigmas · std` of noise-only segment maxima.
    Calibrated { value: f64, noise_mean: f64, noise_std: f64, sigmas: f64 },
}

impl Threshold {
    pub fn value(&self) -> f64 {
        match *self {
            Threshold::Fixed { value } | Threshold::Calibrated { value, .. } => value,
        }
    }

    pub fn calibrate(noise_maxima: &[f64], sigmas: f64) -> Result<Self> {
        if noise_maxima.len() < 2 {
            return Err(Error::Empty("noise-only calibration set"));
        }
        let n = noise_maxima.len() as f64;
        let mean = noise_maxima.iter().sum::<f64>() / n;
        let var = noise_maxima.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        Ok(Threshold::Calibrated {
            value: mean + sigmas * std,
            noise_mean: mean,
            noise_std: std,
            sigmas,
        })
    }
}

/// Largest per-frame folding result inside a window.
pub fn max_folding(window: &Array2<f64>, j_min: usize, j_max: usize) -> Result<f64> {
    window
        .rows()
        .into_iter()
        .map(|r| folding_result(r, j_min, j_max).map(|o| o.folding_result))
        .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)))
}

/// Non-overlapping windows of `w` frames (tail dropped), each marked as
/// passing when its largest folding result reaches `threshold`.
pub fn segment_split_filter(
    diagram: &DopplerTimeDiagram,
    w: usize,
    threshold: f64,
    j_min: usize,
    j_max: usize,
    label: Label,
) -> Result<Vec<Segment>> {
    if w < 2 {
        return Err(Error::OutOfRange {
            what: "segment length",
            detail: format!("W = {w} < 2"),
        });
    }
    let count = diagram.frames() / w;
    (0..count)
        .map(|s| {
            let data = diagram
                .columns
                .slice(ndarray::s![s * w..(s + 1) * w, ..])
                .to_owned();
            let max_folding_result = max_folding(&data, j_min, j_max)?;
            Ok(Segment {
                data,
                label,
                max_folding_result,
                passed_filter: max_folding_result >= threshold,
                start_frame: diagram.frame_indices[s * w],
                provenance: String::new(),
            })
        })
        .collect()
}

/// Divides a segment by its largest value (no-op for all-zero data).
pub fn normalize_segment(data: &Array2<f64>) -> Array2<f64> {
    let max = data.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        data / max
    } else {
        data.clone()
    }
}
