//! Threshold selection on artificially contaminated data and the
//! vicinity-tolerant precision/recall used to judge it.

mod metric;
mod threshold;

pub use metric::{neighborhood_metric, neighborhood_metric_segmented, MetricReport, Segmentation};
pub use threshold::{
    apply_threshold, candidate_thresholds, evaluate_pipeline, select_threshold, write_sweep_csv,
    EvaluationReport, MetricKind, Provenance, SweepPoint, ThresholdResult,
};

/// Vicinity radius in ticks (2.5 h on the 30-minute grid).
pub const DEFAULT_RADIUS: usize = 5;
