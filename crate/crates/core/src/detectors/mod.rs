//! Base detectors. Every detector standardizes its inputs with statistics
//! learnt at fit time and scores so that larger means more anomalous.

mod iforest;
mod lof;
mod mcd;
mod ocsvm;
mod ridge;
mod standardize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use iforest::{
    anomaly_score_from_path, average_path_length, harmonic, IsolationForest, IsolationTree, Node,
    DEFAULT_SUBSAMPLE, DEFAULT_TREES,
};
pub use lof::{k_nearest, LofModel, DEFAULT_NEIGHBORS};
pub use mcd::{
    default_support_size, full_sample_log_det, mcd_fit_raw, EllipticEnvelope, McdEstimate,
    DEFAULT_STARTS,
};
pub use ocsvm::{OcsvmParams, OneClassSvm, DEFAULT_NU, DEFAULT_TOLERANCE};
pub use ridge::{RidgeResidual, DEFAULT_LAMBDA};
pub use standardize::Standardizer;

use crate::data::FeatureMatrix;
use crate::{Error, Result, ScoreVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitMeta {
    pub n: usize,
    pub d: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Lof,
    #[serde(rename = "iforest")]
    IForest,
    EllipticEnvelope,
    Ocsvm,
    Ridge,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Lof,
        DetectorKind::IForest,
        DetectorKind::EllipticEnvelope,
        DetectorKind::Ocsvm,
        DetectorKind::Ridge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Lof => "lof",
            DetectorKind::IForest => "iforest",
            DetectorKind::EllipticEnvelope => "elliptic_envelope",
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Ridge => "ridge",
        }
    }

    /// Whether the detector regresses a target instead of scoring rows alone.
    pub fn needs_target(self) -> bool {
        self == DetectorKind::Ridge
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown detector kind `{s}` (expected one of lof, iforest, elliptic_envelope, ocsvm, ridge)"
                ))
            })
    }
}

/// Hyper-parameters for one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    Lof {
        #[serde(default = "defaults::neighbors")]
        k: usize,
    },
    #[serde(rename = "iforest")]
    IForest {
        #[serde(default = "defaults::trees")]
        n_trees: usize,
        #[serde(default = "defaults::subsample")]
        subsample: usize,
    },
    EllipticEnvelope {
        /// `None` means `⌊(n + d + 1) / 2⌋ / n`.
        #[serde(default)]
        support_fraction: Option<f64>,
        #[serde(default = "defaults::starts")]
        n_starts: usize,
    },
    Ocsvm {
        #[serde(default = "defaults::nu")]
        nu: f64,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default = "defaults::tolerance")]
        tolerance: f64,
        #[serde(default)]
        max_iter: Option<usize>,
    },
    Ridge {
        #[serde(default = "defaults::lambda")]
        lambda: f64,
    },
}

mod defaults {
    pub fn neighbors() -> usize {
        super::DEFAULT_NEIGHBORS
    }
    pub fn trees() -> usize {
        super::DEFAULT_TREES
    }
    pub fn subsample() -> usize {
        super::DEFAULT_SUBSAMPLE
    }
    pub fn starts() -> usize {
        super::DEFAULT_STARTS
    }
    pub fn nu() -> f64 {
        super::DEFAULT_NU
    }
    pub fn tolerance() -> f64 {
        super::DEFAULT_TOLERANCE
    }
    pub fn lambda() -> f64 {
        super::DEFAULT_LAMBDA
    }
}

impl DetectorSpec {
    pub fn default_for(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::Lof => DetectorSpec::Lof {
                k: DEFAULT_NEIGHBORS,
            },
            DetectorKind::IForest => DetectorSpec::IForest {
                n_trees: DEFAULT_TREES,
                subsample: DEFAULT_SUBSAMPLE,
            },
            DetectorKind::EllipticEnvelope => DetectorSpec::EllipticEnvelope {
                support_fraction: None,
                n_starts: DEFAULT_STARTS,
            },
            DetectorKind::Ocsvm => {
                let p = OcsvmParams::default();
                DetectorSpec::Ocsvm {
                    nu: p.nu,
                    gamma: p.gamma,
                    tolerance: p.tolerance,
                    max_iter: p.max_iter,
                }
            }
            DetectorKind::Ridge => DetectorSpec::Ridge {
                lambda: DEFAULT_LAMBDA,
            },
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorSpec::Lof { .. } => DetectorKind::Lof,
            DetectorSpec::IForest { .. } => DetectorKind::IForest,
            DetectorSpec::EllipticEnvelope { .. } => DetectorKind::EllipticEnvelope,
            DetectorSpec::Ocsvm { .. } => DetectorKind::Ocsvm,
            DetectorSpec::Ridge { .. } => DetectorKind::Ridge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        match *self {
            DetectorSpec::Lof { k } if k == 0 => bad("lof: k must be >= 1".into()),
            DetectorSpec::IForest { n_trees, subsample } if n_trees == 0 || subsample < 2 => {
                bad("iforest: n_trees >= 1 and subsample >= 2 required".into())
            }
            DetectorSpec::EllipticEnvelope {
                support_fraction: Some(f),
                ..
            } if !(f > 0.0 && f <= 1.0) => bad(format!("elliptic_envelope: support_fraction {f} outside (0, 1]")),
            DetectorSpec::EllipticEnvelope { n_starts: 0, .. } => {
                bad("elliptic_envelope: n_starts must be >= 1".into())
            }
            DetectorSpec::Ocsvm { nu, .. } if !(nu > 0.0 && nu <= 1.0) => {
                bad(format!("ocsvm: nu {nu} outside (0, 1]"))
            }
            DetectorSpec::Ocsvm { gamma: Some(g), .. } if !(g > 0.0) => {
                bad(format!("ocsvm: gamma {g} must be positive"))
            }
            DetectorSpec::Ocsvm { tolerance, .. } if !(tolerance > 0.0) => {
                bad("ocsvm: tolerance must be positive".into())
            }
            DetectorSpec::Ridge { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad(format!("ridge: lambda {lambda} must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Fits the detector. `target` is required by ridge and ignored otherwise.
    pub fn fit(&self, x: &FeatureMatrix, target: Option<&[f64]>, seed: u64) -> Result<DetectorModel> {
        self.validate()?;
        Ok(match *self {
            DetectorSpec::Lof { k } => DetectorModel::Lof(LofModel::fit(x, k)?),
            DetectorSpec::IForest { n_trees, subsample } => {
                DetectorModel::IForest(IsolationForest::fit(x, n_trees, subsample, seed)?)
            }
            DetectorSpec::EllipticEnvelope {
                support_fraction,
                n_starts,
            } => DetectorModel::EllipticEnvelope(EllipticEnvelope::fit(x, support_fraction, n_starts, seed)?),
            DetectorSpec::Ocsvm {
                nu,
                gamma,
                tolerance,
                max_iter,
            } => DetectorModel::Ocsvm(OneClassSvm::fit(
                x,
                OcsvmParams {
                    nu,
                    gamma,
                    tolerance,
                    max_iter,
                },
            )?),
            DetectorSpec::Ridge { lambda } => {
                let y = target.ok_or_else(|| Error::invalid("ridge detector requires a target"))?;
                DetectorModel::Ridge(RidgeResidual::fit(x, y, lambda)?)
            }
        })
    }
}

/// A fitted base detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum DetectorModel {
    Lof(LofModel),
    #[serde(rename = "iforest")]
    IForest(IsolationForest),
    EllipticEnvelope(EllipticEnvelope),
    Ocsvm(OneClassSvm),
    Ridge(RidgeResidual),
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::Lof(_) => DetectorKind::Lof,
            DetectorModel::IForest(_) => DetectorKind::IForest,
            DetectorModel::EllipticEnvelope(_) => DetectorKind::EllipticEnvelope,
            DetectorModel::Ocsvm(_) => DetectorKind::Ocsvm,
            DetectorModel::Ridge(_) => DetectorKind::Ridge,
        }
    }

    pub fn meta(&self) -> &FitMeta {
        match self {
            DetectorModel::Lof(m) => m.meta(),
            DetectorModel::IForest(m) => m.meta(),
            DetectorModel::EllipticEnvelope(m) => m.meta(),
            DetectorModel::Ocsvm(m) => m.meta(),
            DetectorModel::Ridge(m) => m.meta(),
        }
    }

    pub fn score(&self, x: &FeatureMatrix, target: Option<&[f64]>) -> Result<ScoreVector> {
        match self {
            DetectorModel::Lof(m) => m.score(x),
            DetectorModel::IForest(m) => m.score(x),
            DetectorModel::EllipticEnvelope(m) => m.score(x),
            DetectorModel::Ocsvm(m) => m.score(x),
            DetectorModel::Ridge(m) => {
                let y = target.ok_or_else(|| Error::invalid("ridge detector requires a target"))?;
                m.score(x, y)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_seed, rng_from_seed};
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn data(n: usize, d: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y = rows.iter().map(|r| r[0] - r[1] + rng.random_range(-0.1..0.1)).collect();
        (FeatureMatrix::from_unnamed_rows(&rows).unwrap(), y)
    }

    fn small_spec(kind: DetectorKind) -> DetectorSpec {
        match kind {
            DetectorKind::IForest => DetectorSpec::IForest {
                n_trees: 20,
                subsample: 32,
            },
            DetectorKind::EllipticEnvelope => DetectorSpec::EllipticEnvelope {
                support_fraction: None,
                n_starts: 5,
            },
            DetectorKind::Lof => DetectorSpec::Lof { k: 5 },
            k => DetectorSpec::default_for(k),
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert!("xgboost".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn scores_are_row_equivariant_and_deterministic() {
        let (x, y) = data(60, 3, 9);
        let mut perm: Vec<usize> = (0..60).collect();
        perm.shuffle(&mut rng_from_seed(1));
        let xp = x.select_rows(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        for kind in DetectorKind::ALL {
            let spec = small_spec(kind);
            let m = spec.fit(&x, Some(&y), 3).unwrap();
            let s = m.score(&x, Some(&y)).unwrap();
            let again = spec.fit(&x, Some(&y), 3).unwrap().score(&x, Some(&y)).unwrap();
            assert_eq!(s, again, "{kind}");
            let sp = m.score(&xp, Some(&yp)).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                assert_eq!(sp[k].to_bits(), s[i].to_bits(), "{kind}");
            }
        }
    }

    #[test]
    fn serialization_round_trips_scores() {
        let (x, y) = data(40, 2, derive_seed(4, 4));
        for kind in DetectorKind::ALL {
            let m = small_spec(kind).fit(&x, Some(&y), 8).unwrap();
            let json = serde_json::to_string(&m).unwrap();
            let back: DetectorModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.score(&x, Some(&y)).unwrap(), m.score(&x, Some(&y)).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (x, y) = data(30, 3, 2);
        let (q, _) = data(5, 2, 2);
        for kind in DetectorKind::ALL {
            let m = small_spec(kind).fit(&x, Some(&y), 0).unwrap();
            assert!(matches!(
                m.score(&q, Some(&y[..5])),
                Err(Error::DimensionMismatch { expected: 3, actual: 2 })
            ));
        }
    }

    #[test]
    fn spec_validation() {
        assert!(DetectorSpec::Lof { k: 0 }.validate().is_err());
        assert!(DetectorSpec::Ridge { lambda: -1.0 }.validate().is_err());
        let toml_like = r#"{"kind":"ocsvm","nu":0.1,"gamma":null,"tolerance":0.0001,"max_iter":null}"#;
        let s: DetectorSpec = serde_json::from_str(toml_like).unwrap();
        assert_eq!(s.kind(), DetectorKind::Ocsvm);
        assert!(serde_json::from_str::<DetectorSpec>(r#"{"kind":"mlp"}"#).is_err());
        for k in DetectorKind::ALL {
            let bare: DetectorSpec = serde_json::from_str(&format!(r#"{{"kind":"{k}"}}"#)).unwrap();
            assert_eq!(bare, DetectorSpec::default_for(k));
        }
        assert!(serde_json::from_str::<DetectorSpec>(r#"{"kind":"lof","neighbours":3}"#).is_err());
    }
}
