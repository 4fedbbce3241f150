//! Checksummed model file: everything `score` needs to rebuild features,
//! score rows and flag them at the calibrated threshold.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use synthresh_core::calibration::MetricKind;
use synthresh_core::data::FeatureSpec;
use synthresh_core::ensemble::EnsembleModel;

use crate::config::{Mode, PipelineConfig, PreparationConfig};
use crate::CliError;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPayload {
    pub mode: Mode,
    pub threshold: f64,
    pub metric: MetricKind,
    pub radius: usize,
    pub channels: Option<Vec<String>>,
    pub features: Option<FeatureSpec>,
    pub preparation: Option<PreparationConfig>,
    pub ensemble: EnsembleModel,
}

impl ModelPayload {
    pub fn new(cfg: &PipelineConfig, threshold: f64, radius: usize, ensemble: EnsembleModel) -> Self {
        let ts = cfg.mode == Mode::Timeseries;
        Self {
            mode: cfg.mode,
            threshold,
            metric: cfg.metric.kind.expect("materialized"),
            radius,
            channels: if ts { cfg.data.channels.clone() } else { None },
            features: if ts { cfg.features.clone() } else { None },
            preparation: ts.then(|| cfg.preparation.clone()),
            ensemble,
        }
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    schema_version: u32,
    sha256: String,
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema_version: u32,
    sha256: String,
    payload: Box<RawValue>,
}

fn digest(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

pub fn encode(payload: &ModelPayload) -> Result<String, CliError> {
    let body = serde_json::to_string(payload)
        .map_err(|e| CliError::Validation(format!("model serialisation: {e}")))?;
    let raw = RawValue::from_string(body).expect("serde_json output is valid JSON");
    let env = EnvelopeOut {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        sha256: digest(raw.get()),
        payload: &raw,
    };
    Ok(serde_json::to_string(&env).expect("envelope serialises") + "\n")
}

pub fn decode(text: &str) -> Result<ModelPayload, CliError> {
    let bad = |m: String| CliError::Validation(format!("model file: {m}"));
    let env: EnvelopeIn = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if env.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(bad(format!(
            "schema version {} unsupported (expected {ARTIFACT_SCHEMA_VERSION})",
            env.schema_version
        )));
    }
    let actual = digest(env.payload.get());
    if actual != env.sha256 {
        return Err(bad(format!(
            "checksum mismatch: recorded {}, computed {actual}",
            env.sha256
        )));
    }
    serde_json::from_str(env.payload.get()).map_err(|e| bad(e.to_string()))
}

pub fn load(path: &Path) -> Result<ModelPayload, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    decode(&text)
}
