//! Spectrum folding and the Range-Time-PMM diagram.
//!
//! Folding a Doppler row `d` (length `L`) with folding size `j` lays the
//! first `M·j` bins out as an `M × j` matrix (`M = floor(L/j)`, leftovers
//! dropped) and averages each column. The folding value is the largest column
//! mean. A comb whose spacing is `j` (or a multiple of it) piles its peaks
//! into one column; noise does not.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rd::RangeDopplerMap;

/// Default folding-size search range.
pub const DEFAULT_J_MIN: usize = 2;
pub const DEFAULT_J_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub folding_result: f64,
    pub best_folding_size: usize,
    pub j_min: usize,
    /// `F(j)` for `j = j_min..=j_max` (after capping `j_max` at `L/2`).
    pub per_size_values: Vec<f64>,
}

pub fn folding_value(d: ArrayView1<'_, f64>, j: usize) -> Result<f64> {
    let l = d.len();
    if j < 2 {
        return Err(Error::OutOfRange {
            what: "folding size",
            detail: format!("j = {j} < 2"),
        });
    }
    let m = l / j;
    if m < 2 {
        return Err(Error::OutOfRange {
            what: "folding size",
            detail: format!("j = {j} leaves {m} row(s) for L = {l}; need 2"),
        });
    }
    Ok(fold_unchecked(d, j))
}

fn fold_unchecked(d: ArrayView1<'_, f64>, j: usize) -> f64 {
    let m = d.len() / j;
    let mut cols = vec![0.0; j];
    for row in 0..m {
        let base = row * j;
        for (k, c) in cols.iter_mut().enumerate() {
            *c += d[base + k];
        }
    }
    cols.into_iter().fold(f64::NEG_INFINITY, f64::max) / m as f64
}

/// Largest folding value over `j_min..=min(j_max, L/2)`. Ties go to the
/// smallest folding size.
pub fn folding_result(d: ArrayView1<'_, f64>, j_min: usize, j_max: usize) -> Result<FoldOutcome> {
    let cap = j_max.min(d.len() / 2);
    if j_min < 2 || j_min > cap {
        return Err(Error::OutOfRange {
            what: "folding range",
            detail: format!("[{j_min}, {j_max}] is empty for L = {} (j_max capped at {cap})", d.len()),
        });
    }
    let per_size_values: Vec<f64> = (j_min..=cap).map(|j| fold_unchecked(d, j)).collect();
    let (best_idx, best) = per_size_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok(FoldOutcome {
        folding_result: best,
        best_folding_size: j_min + best_idx,
        j_min,
        per_size_values,
    })
}

/// Folding results over range × time.
#[derive(Debug, Clone, PartialEq)]
pub struct RPmmDiagram {
    /// `[range bins × frames]`
    pub values: Array2<f64>,
    pub best_sizes: Array2<usize>,
    pub frame_indices: Vec<usize>,
    pub timestamps_s: Vec<f64>,
}

impl RPmmDiagram {
    pub fn range_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    /// Same bookkeeping, different values (e.g. after subtraction).
    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Self {
            values,
            ..self.clone()
        }
    }
}

pub fn build_rpmm(maps: &[RangeDopplerMap], j_min: usize, j_max: usize) -> Result<RPmmDiagram> {
    let first = maps.first().ok_or(Error::Empty("Range-Doppler map sequence"))?;
    let shape = first.magnitudes.dim();
    if let Some(bad) = maps.iter().find(|m| m.magnitudes.dim() != shape) {
        return Err(Error::ShapeMismatch {
            context: "build_rpmm",
            expected: format!("{:?}", shape),
            actual: format!("{:?} (frame {})", bad.magnitudes.dim(), bad.frame_index),
        });
    }
    let r = shape.0;
    let t = maps.len();
    let columns: Vec<Vec<(f64, usize)>> = maps
        .par_iter()
        .map(|m| {
            (0..r)
                .map(|bin| {
                    folding_result(m.magnitudes.row(bin), j_min, j_max)
                        .map(|o| (o.folding_result, o.best_folding_size))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((r, t));
    let mut best_sizes = Array2::zeros((r, t));
    for (ti, col) in columns.into_iter().enumerate() {
        for (ri, (v, j)) in col.into_iter().enumerate() {
            values[[ri, ti]] = v;
            best_sizes[[ri, ti]] = j;
        }
    }
    Ok(RPmmDiagram {
        values,
        best_sizes,
        frame_indices: maps.iter().map(|m| m.frame_index).collect(),
        timestamps_s: maps.iter().map(|m| m.start_time_s).collect(),
    })
}
