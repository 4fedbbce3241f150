//! Pipeline configuration file (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use synthresh_core::calibration::{MetricKind, DEFAULT_RADIUS};
use synthresh_core::data::{FeatureSpec, SplitMode, SplitPlan, DEFAULT_MAX_GAP_HOURS, DEFAULT_MIN_DURATION_HOURS, RWIS_CHANNELS};
use synthresh_core::detectors::{DetectorKind, DetectorSpec};
use synthresh_core::ensemble::{BagPreset, CombinerKind, FitOptions};
use synthresh_core::synthgen::GeneratorConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Timeseries,
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// `station_id,timestamp,<channels...>[,label]`.
    TimeseriesCsv,
    /// Feature columns plus an optional `label` column.
    TabularCsv,
    /// UCI Shuttle files: nine attributes and a class per line.
    Shuttle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Input files; relative paths resolve against the config file.
    pub paths: Vec<PathBuf>,
    pub format: Option<DataFormat>,
    pub channels: Option<Vec<String>>,
    /// Column regressed by target-based detectors in tabular mode.
    pub target_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: Option<SplitMode>,
    pub train_fraction: Option<f64>,
    pub threshold_fraction: Option<f64>,
    pub test_fraction: Option<f64>,
    /// Drop labelled anomalies from the threshold split before injection.
    pub normal_only_threshold: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparationConfig {
    pub max_gap_hours: Option<f64>,
    pub min_duration_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Single {
        detector: DetectorSpec,
    },
    ModelAveraging {
        detectors: Vec<DetectorSpec>,
    },
    FeatureBagging {
        base: DetectorSpec,
        preset: Option<BagPreset>,
        n_models: Option<usize>,
        k_min: Option<usize>,
        k_max: Option<usize>,
    },
}

impl ModelConfig {
    pub fn label(&self) -> String {
        match self {
            ModelConfig::Single { detector } => detector.kind().to_string(),
            ModelConfig::ModelAveraging { .. } => "model_averaging".into(),
            ModelConfig::FeatureBagging { base, .. } => format!("{}_feature_bagging", base.kind()),
        }
    }

    fn detectors(&self) -> Vec<&DetectorSpec> {
        match self {
            ModelConfig::Single { detector } => vec![detector],
            ModelConfig::ModelAveraging { detectors } => detectors.iter().collect(),
            ModelConfig::FeatureBagging { base, .. } => vec![base],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: Option<MetricKind>,
    pub radius: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Inject anomalies into the test split with an independent seed and use
    /// them as ground truth (synthetic corpora without expert labels).
    pub inject_test: Option<bool>,
    pub test_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub mode: Mode,
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default = "empty_split")]
    pub split: SplitConfig,
    pub features: Option<FeatureSpec>,
    #[serde(default = "empty_preparation")]
    pub preparation: PreparationConfig,
    pub model: ModelConfig,
    pub combiner: Option<CombinerKind>,
    pub generator: Option<GeneratorConfig>,
    #[serde(default = "empty_metric")]
    pub metric: MetricConfig,
    #[serde(default = "empty_evaluation")]
    pub evaluation: EvaluationConfig,
    /// Maximum training rows per detector kind.
    pub row_caps: Option<BTreeMap<DetectorKind, usize>>,
}

fn empty_split() -> SplitConfig {
    SplitConfig {
        mode: None,
        train_fraction: None,
        threshold_fraction: None,
        test_fraction: None,
        normal_only_threshold: None,
    }
}

fn empty_preparation() -> PreparationConfig {
    PreparationConfig {
        max_gap_hours: None,
        min_duration_hours: None,
    }
}

fn empty_metric() -> MetricConfig {
    MetricConfig {
        kind: None,
        radius: None,
    }
}

fn empty_evaluation() -> EvaluationConfig {
    EvaluationConfig {
        inject_test: None,
        test_seed: None,
    }
}

/// Row caps applied when the config names none.
pub fn default_row_caps() -> BTreeMap<DetectorKind, usize> {
    BTreeMap::from([
        (DetectorKind::Lof, 4000),
        (DetectorKind::Ocsvm, 3000),
        (DetectorKind::EllipticEnvelope, 10000),
    ])
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.paths = cfg
            .data
            .paths
            .iter()
            .map(|p| if p.is_relative() { base.join(p) } else { p.clone() })
            .collect();
        if let Some(out) = &cfg.output_dir {
            if out.is_relative() {
                cfg.output_dir = Some(base.join(out));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("config serialisation: {e}")))
    }

    /// Fills every optional field with its default so the stored config is
    /// self-describing, then validates it.
    pub fn materialize(mut self) -> Result<Self, CliError> {
        let ts = self.mode == Mode::Timeseries;
        let d = &mut self.data;
        d.format.get_or_insert(if ts { DataFormat::TimeseriesCsv } else { DataFormat::TabularCsv });
        if ts {
            d.channels
                .get_or_insert_with(|| RWIS_CHANNELS.iter().map(|c| c.to_string()).collect());
        }
        let s = &mut self.split;
        let (mode, fr, normal_only) = if ts {
            (SplitMode::ByStation, [0.5, 0.3, 0.2], false)
        } else {
            (SplitMode::ByRow, [0.5, 0.25, 0.25], true)
        };
        s.mode.get_or_insert(mode);
        s.train_fraction.get_or_insert(fr[0]);
        s.threshold_fraction.get_or_insert(fr[1]);
        s.test_fraction.get_or_insert(fr[2]);
        s.normal_only_threshold.get_or_insert(normal_only);
        if ts {
            self.features.get_or_insert_with(FeatureSpec::default);
            self.preparation.max_gap_hours.get_or_insert(DEFAULT_MAX_GAP_HOURS);
            self.preparation.min_duration_hours.get_or_insert(DEFAULT_MIN_DURATION_HOURS);
        }
        if let ModelConfig::FeatureBagging {
            preset,
            n_models,
            k_min,
            k_max,
            ..
        } = &mut self.model
        {
            if n_models.is_none() || k_min.is_none() || k_max.is_none() {
                preset.get_or_insert(BagPreset::Standard);
            }
        }
        self.combiner.get_or_insert(CombinerKind::Lt);
        self.generator.get_or_insert_with(GeneratorConfig::default);
        self.metric
            .kind
            .get_or_insert(if ts { MetricKind::Neighborhood } else { MetricKind::Pointwise });
        self.metric.radius.get_or_insert(if ts { DEFAULT_RADIUS } else { 0 });
        self.evaluation.inject_test.get_or_insert(false);
        self.row_caps.get_or_insert_with(default_row_caps);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let v = |m: String| Err(CliError::Validation(m));
        if self.data.paths.is_empty() {
            return v("data.paths must name at least one file".into());
        }
        let format = self.data.format.expect("materialized");
        match (self.mode, format) {
            (Mode::Timeseries, DataFormat::TimeseriesCsv) => {}
            (Mode::Tabular, DataFormat::TabularCsv | DataFormat::Shuttle) => {}
            (m, f) => return v(format!("data format {f:?} does not fit mode {m:?}")),
        }
        self.split_plan()?;
        if self.mode == Mode::Tabular && self.split.mode != Some(SplitMode::ByRow) {
            return v("tabular data supports only split.mode = \"by_row\"".into());
        }
        if self.mode == Mode::Timeseries && self.split.mode != Some(SplitMode::ByStation) {
            return v("time-series data supports only split.mode = \"by_station\"".into());
        }
        for d in self.model.detectors() {
            d.validate().map_err(|e| CliError::Validation(format!("model: {e}")))?;
        }
        if let ModelConfig::ModelAveraging { detectors } = &self.model {
            if detectors.is_empty() {
                return v("model.detectors must not be empty".into());
            }
        }
        if self.mode == Mode::Timeseries && self.split.normal_only_threshold == Some(true) {
            return v("split.normal_only_threshold applies to tabular mode only".into());
        }
        if self.mode == Mode::Timeseries && self.data.target_column.is_some() {
            return v("data.target_column applies to tabular mode only".into());
        }
        self.generator
            .as_ref()
            .expect("materialized")
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        for p in &self.data.paths {
            if !p.is_file() {
                return v(format!("data file {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn split_plan(&self) -> Result<SplitPlan, CliError> {
        let s = &self.split;
        SplitPlan::new(
            s.train_fraction.unwrap_or(0.0),
            s.threshold_fraction.unwrap_or(0.0),
            s.test_fraction.unwrap_or(0.0),
            self.seed,
        )
        .map_err(|e| CliError::Validation(format!("split: {e}")))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            row_caps: self.row_caps.clone().unwrap_or_default(),
        }
    }

    /// SHA-256 of the materialized config without the output location.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut c = self.clone();
        c.output_dir = None;
        let text = c.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
mode = "timeseries"

[data]
paths = ["Cargo.toml"]

[model]
type = "single"
detector = { kind = "ridge" }
"#;

    #[test]
    fn materialized_config_round_trips() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        cfg.data.paths = vec![PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml")];
        let cfg = cfg.materialize().unwrap();
        assert_eq!(cfg.metric.radius, Some(5));
        assert_eq!(cfg.generator.unwrap().single.count, 30);
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn unknown_detector_is_rejected() {
        let text = MINIMAL.replace("ridge", "xgboost");
        assert!(matches!(PipelineConfig::from_toml(&text), Err(CliError::Validation(_))));
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MINIMAL.replace("seed = 3", "");
        assert!(PipelineConfig::from_toml(&text).is_err());
    }

    #[test]
    fn missing_data_file() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        cfg.data.paths = vec![PathBuf::from("/nonexistent/corpus.csv")];
        assert!(matches!(cfg.materialize(), Err(CliError::Validation(_))));
    }
}
