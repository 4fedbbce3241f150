//! Ensembles of base detectors: feature bagging over random column subsets
//! and model averaging over heterogeneous kinds, merged by a consensus
//! function after per-member min-max normalisation.

mod combiner;
mod logreg;

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use combiner::{
    combine, fit_combiner, normalize_scores, pearson, CombinerKind, CombinerSpec, Normalization,
    ScoreMatrix,
};
pub use logreg::{fit_logreg, loss_and_gradient, sigmoid, LogRegFit, DEFAULT_L2, GRAD_TOL};

use crate::data::{FeatureMatrix, LabelVector};
use crate::detectors::{DetectorKind, DetectorModel, DetectorSpec};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result, ScoreVector};

pub const SCHEMA_VERSION: u32 = 1;
const ROW_STREAM: u64 = 0x726f_7773;
const FIT_STREAM: u64 = 0x6669_74;

/// Where detectors that regress a target (ridge) get it from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// Supplied alongside the feature matrix.
    External,
    /// One of the input columns; regressing members never see it as a feature.
    Column(String),
}

/// Feature-count bounds for bagging as a function of the input width `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BagPreset {
    /// 20 members, `k ∈ [⌊d/2⌋, d − 1]`.
    Standard,
    /// 20 members, `k ∈ [⌊d/6⌋, ⌊d/2⌋]`.
    RidgeMeteo,
    /// 10 members, `k ∈ [2, ⌊2d/3⌋]`.
    EllipticMeteo,
}

impl BagPreset {
    pub fn n_models(self) -> usize {
        match self {
            BagPreset::EllipticMeteo => 10,
            _ => 20,
        }
    }

    pub fn bounds(self, d: usize) -> (usize, usize) {
        match self {
            BagPreset::Standard => (d / 2, d.saturating_sub(1)),
            BagPreset::RidgeMeteo => (d / 6, d / 2),
            BagPreset::EllipticMeteo => (2, 2 * d / 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBagConfig {
    pub base: DetectorSpec,
    pub n_models: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl FeatureBagConfig {
    pub fn from_preset(base: DetectorSpec, preset: BagPreset, d: usize, seed: u64) -> Self {
        let (k_min, k_max) = preset.bounds(d);
        Self {
            base,
            n_models: preset.n_models(),
            k_min,
            k_max,
            seed,
        }
    }

    /// Checks the bounds against the number of columns members may draw from.
    pub fn validate(&self, pool: usize) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::invalid("feature bagging needs n_models >= 1"));
        }
        if self.k_min < 1 || self.k_min > self.k_max || self.k_max > pool {
            return Err(Error::Infeasible(format!(
                "feature bounds [{}, {}] invalid for {pool} candidate columns",
                self.k_min, self.k_max
            )));
        }
        self.base.validate()
    }
}

/// Options shared by every member fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Per-kind cap on training rows; larger inputs are subsampled without
    /// replacement using the member seed.
    pub row_caps: BTreeMap<DetectorKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    FeatureBagging {
        base: DetectorKind,
        k_min: usize,
        k_max: usize,
        seed: u64,
    },
    ModelAveraging {
        kinds: Vec<DetectorKind>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub label: String,
    /// Indices into the ensemble's input columns.
    pub features: Vec<usize>,
    pub seed: u64,
    pub train_rows: usize,
    pub model: DetectorModel,
    pub normalization: Option<Normalization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub input_columns: Vec<String>,
    pub target: TargetSource,
    pub members: Vec<Member>,
    pub combiner: Option<CombinerSpec>,
}

struct Resolved<'a> {
    x: Cow<'a, FeatureMatrix>,
    target: Option<Cow<'a, [f64]>>,
}

fn target_index(x: &FeatureMatrix, target: &TargetSource) -> Result<Option<usize>> {
    match target {
        TargetSource::External => Ok(None),
        TargetSource::Column(name) => x
            .column_index(name)
            .map(Some)
            .ok_or_else(|| Error::Schema(format!("target column `{name}` not found"))),
    }
}

fn resolve<'a>(
    x: &'a FeatureMatrix,
    external: Option<&'a [f64]>,
    columns: &[String],
    target: &TargetSource,
) -> Result<Resolved<'a>> {
    let x: Cow<FeatureMatrix> = if x.column_names() == columns {
        Cow::Borrowed(x)
    } else {
        Cow::Owned(x.select_named(columns)?)
    };
    let target = match target {
        TargetSource::External => external.map(Cow::Borrowed),
        TargetSource::Column(_) => {
            let j = target_index(&x, target)?.expect("column target");
            Some(Cow::Owned(x.column(j)))
        }
    };
    if let Some(t) = &target {
        if t.len() != x.n_rows() {
            return Err(Error::invalid(format!(
                "target has {} values for {} rows",
                t.len(),
                x.n_rows()
            )));
        }
    }
    Ok(Resolved { x, target })
}

fn fit_member(
    x: &FeatureMatrix,
    target: Option<&[f64]>,
    spec: &DetectorSpec,
    features: Vec<usize>,
    seed: u64,
    label: String,
    index: usize,
    opts: &FitOptions,
) -> Result<Member> {
    let wrap = |e: Error| Error::Member {
        index,
        label: label.clone(),
        source: Box::new(e),
    };
    let n = x.n_rows();
    let projected = x.select_columns(&features).map_err(wrap)?;
    let cap = opts.row_caps.get(&spec.kind()).copied();
    let (projected, y) = match cap {
        Some(c) if c < n => {
            let mut rng = rng_from_seed(derive_seed(seed, ROW_STREAM));
            let mut rows = sample(&mut rng, n, c).into_vec();
            rows.sort_unstable();
            let y = target.map(|t| rows.iter().map(|&i| t[i]).collect::<Vec<_>>());
            (projected.select_rows(&rows), y.map(Cow::Owned))
        }
        _ => (projected, target.map(Cow::Borrowed)),
    };
    let model = spec
        .fit(&projected, y.as_deref(), derive_seed(seed, FIT_STREAM))
        .map_err(wrap)?;
    Ok(Member {
        label,
        features,
        seed,
        train_rows: projected.n_rows(),
        model,
        normalization: None,
    })
}

fn require_target(kind: DetectorKind, target: &Option<Cow<[f64]>>) -> Result<()> {
    if kind.needs_target() && target.is_none() {
        return Err(Error::invalid(format!("{kind} members need a target")));
    }
    Ok(())
}

/// Fits `cfg.n_models` copies of the base detector, each on `k` random
/// columns with `k` uniform in `[k_min, k_max]`.
pub fn feature_bag_fit(
    x: &FeatureMatrix,
    target: Option<&[f64]>,
    target_source: TargetSource,
    cfg: &FeatureBagConfig,
    opts: &FitOptions,
) -> Result<EnsembleModel> {
    let columns = x.column_names().to_vec();
    let r = resolve(x, target, &columns, &target_source)?;
    let kind = cfg.base.kind();
    require_target(kind, &r.target)?;
    let excluded = if kind.needs_target() {
        target_index(&r.x, &target_source)?
    } else {
        None
    };
    let pool: Vec<usize> = (0..r.x.n_cols()).filter(|j| Some(*j) != excluded).collect();
    cfg.validate(pool.len())?;
    let members = (0..cfg.n_models)
        .into_par_iter()
        .map(|m| {
            let seed = derive_seed(cfg.seed, m as u64);
            let mut rng = rng_from_seed(seed);
            let k = rng.random_range(cfg.k_min..=cfg.k_max);
            let mut features: Vec<usize> = sample(&mut rng, pool.len(), k)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            features.sort_unstable();
            fit_member(
                &r.x,
                r.target.as_deref(),
                &cfg.base,
                features,
                seed,
                format!("{kind}#{m}"),
                m,
                opts,
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        schema_version: SCHEMA_VERSION,
        strategy: Strategy::FeatureBagging {
            base: kind,
            k_min: cfg.k_min,
            k_max: cfg.k_max,
            seed: cfg.seed,
        },
        input_columns: columns,
        target: target_source,
        members,
        combiner: None,
    })
}

/// One member per spec on the full column set (less the target column for
/// regressing members).
pub fn model_average_fit(
    x: &FeatureMatrix,
    target: Option<&[f64]>,
    target_source: TargetSource,
    specs: &[DetectorSpec],
    seed: u64,
    opts: &FitOptions,
) -> Result<EnsembleModel> {
    if specs.is_empty() {
        return Err(Error::invalid("model averaging needs at least one detector"));
    }
    let columns = x.column_names().to_vec();
    let r = resolve(x, target, &columns, &target_source)?;
    for s in specs {
        s.validate()?;
        require_target(s.kind(), &r.target)?;
    }
    let t_idx = target_index(&r.x, &target_source)?;
    let members = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let features: Vec<usize> = (0..r.x.n_cols())
                .filter(|j| !(spec.kind().needs_target() && Some(*j) == t_idx))
                .collect();
            if features.is_empty() {
                return Err(Error::Member {
                    index: i,
                    label: spec.kind().to_string(),
                    source: Box::new(Error::invalid("no feature columns left besides the target")),
                });
            }
            fit_member(
                &r.x,
                r.target.as_deref(),
                spec,
                features,
                derive_seed(seed, i as u64),
                spec.kind().to_string(),
                i,
                opts,
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        schema_version: SCHEMA_VERSION,
        strategy: Strategy::ModelAveraging {
            kinds: specs.iter().map(DetectorSpec::kind).collect(),
            seed,
        },
        input_columns: columns,
        target: target_source,
        members,
        combiner: None,
    })
}

impl EnsembleModel {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn is_calibrated(&self) -> bool {
        self.members.iter().all(|m| m.normalization.is_some())
    }

    /// Raw member scores, one column per member.
    pub fn raw_member_scores(&self, x: &FeatureMatrix, target: Option<&[f64]>) -> Result<Vec<ScoreVector>> {
        let r = resolve(x, target, &self.input_columns, &self.target)?;
        self.members
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                let wrap = |e: Error| Error::Member {
                    index: i,
                    label: m.label.clone(),
                    source: Box::new(e),
                };
                if m.model.kind().needs_target() && r.target.is_none() {
                    return Err(wrap(Error::invalid("member needs a target")));
                }
                let proj = r.x.select_columns(&m.features).map_err(wrap)?;
                m.model.score(&proj, r.target.as_deref()).map_err(wrap)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }

    /// Scores the threshold split, freezes each member's normalisation on
    /// first use and returns the normalised matrix. Constants already set are
    /// kept.
    pub fn calibrate(&mut self, x: &FeatureMatrix, target: Option<&[f64]>) -> Result<ScoreMatrix> {
        let raw = self.raw_member_scores(x, target)?;
        for (m, s) in self.members.iter_mut().zip(&raw) {
            if m.normalization.is_none() {
                let norm = Normalization::from_scores(s)?;
                if norm.is_degenerate() {
                    log::warn!("member {} is constant on the calibration split", m.label);
                }
                m.normalization = Some(norm);
            }
        }
        self.normalize(raw)
    }

    fn normalize(&self, raw: Vec<ScoreVector>) -> Result<ScoreMatrix> {
        let cols: Vec<ScoreVector> = self
            .members
            .iter()
            .zip(raw)
            .map(|(m, s)| m.normalization.ok_or(Error::NotCalibrated).map(|n| n.apply(&s)))
            .collect::<Result<_>>()?;
        ScoreMatrix::from_columns(&cols)
    }

    /// Normalised member scores; fails until [`EnsembleModel::calibrate`] ran.
    pub fn member_scores(&self, x: &FeatureMatrix, target: Option<&[f64]>) -> Result<ScoreMatrix> {
        if !self.is_calibrated() {
            return Err(Error::NotCalibrated);
        }
        let raw = self.raw_member_scores(x, target)?;
        self.normalize(raw)
    }

    /// Fits and stores the consensus function on calibrated member scores.
    pub fn fit_combiner(&mut self, s: &ScoreMatrix, y: &LabelVector, kind: CombinerKind) -> Result<&CombinerSpec> {
        if s.n_cols() != self.n_members() {
            return Err(Error::DimensionMismatch {
                expected: self.n_members(),
                actual: s.n_cols(),
            });
        }
        self.combiner = Some(fit_combiner(s, y, kind)?);
        Ok(self.combiner.as_ref().expect("just set"))
    }

    pub fn score(&self, x: &FeatureMatrix, target: Option<&[f64]>) -> Result<ScoreVector> {
        let spec = self
            .combiner
            .as_ref()
            .ok_or_else(|| Error::invalid("ensemble has no fitted combiner"))?;
        combine(&self.member_scores(x, target)?, spec)
    }

    /// Whether scoring needs an external target.
    pub fn needs_external_target(&self) -> bool {
        self.target == TargetSource::External && self.members.iter().any(|m| m.model.kind().needs_target())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "ensemble schema version {} is not supported (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }
}
