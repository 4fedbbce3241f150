use serde::{Deserialize, Serialize};
use synthresh_core::calibration::{MetricKind, MetricReport};
use synthresh_core::ensemble::CombinerKind;

use crate::config::{Mode, PipelineConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub rows: usize,
    pub injected: usize,
    pub metric: MetricKind,
    pub radius: usize,
    /// Best metric value on the contaminated split.
    pub f1: f64,
    pub n_predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub rows: usize,
    pub positives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub metrics: MetricReport,
    /// Threshold that would have maximised test F1, and that F1.
    pub oracle_threshold: Option<f64>,
    pub oracle_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Wall-clock time of the run; the only field that varies between
    /// identical runs.
    pub generated_at: String,
    pub seed: u64,
    pub config_hash: String,
    pub mode: Mode,
    pub model: String,
    pub combiner: CombinerKind,
    pub members: usize,
    pub target_column: Option<String>,
    pub threshold: f64,
    pub calibration: CalibrationSummary,
    pub test: TestSummary,
    pub config: PipelineConfig,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
