//! UAV identification from the Doppler-Time diagram at the tracked range.

pub mod lstm;
pub mod metrics;
pub mod preprocess;

pub use lstm::{LstmDetector, TrainConfig, TrainReport};
pub use metrics::{ClassMetrics, Confusion};
pub use preprocess::{
    dc_removal, extract_doppler_time, feature_alignment, normalize_segment, segment_split_filter,
    DcRemoval, DopplerTimeDiagram, Label, Segment, Threshold,
};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Default hidden size of each recurrent layer.
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_LAYERS: usize = 2;

/// Labeled `(segment, class)` pairs for the segments at `indices`;
/// unlabeled segments are skipped.
pub fn labeled_views<'a>(segments: &'a [Segment], indices: &[usize]) -> Vec<(ArrayView2<'a, f64>, usize)> {
    indices
        .iter()
        .filter_map(|&i| {
            let s = &segments[i];
            s.label.class_index().map(|c| (s.data.view(), c))
        })
        .collect()
}

/// Predicted class per segment and, over the labeled ones, the metrics.
pub fn classify(detector: &LstmDetector, segments: &[Segment]) -> Result<(Vec<usize>, ClassMetrics)> {
    if segments.is_empty() {
        return Err(Error::Empty("segment list"));
    }
    let predictions = segments
        .iter()
        .map(|s| detector.predict(s.data.view()))
        .collect::<Result<Vec<_>>>()?;
    let confusion = Confusion::from_pairs(
        predictions
            .iter()
            .zip(segments)
            .filter_map(|(&p, s)| s.label.class_index().map(|y| (p, y))),
    );
    Ok((predictions, confusion.metrics()))
}
