//! Ensembles of unsupervised anomaly detectors whose decision threshold is
//! calibrated on a validation split contaminated with synthetic anomalies.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: time-series ingestion, gap splitting, resampling, feature
//!   construction, tabular loading and train/threshold/test splits.
//! - [`detectors`]: base scorers (LOF, isolation forest, elliptic envelope
//!   over a FAST-MCD estimate, one-class SVM, ridge forecast residual).
//! - [`ensemble`]: model averaging, feature bagging and the three consensus
//!   functions (mean, correlation-weighted mean, logistic regression).
//! - [`synthgen`]: single, short-term and long-term fault injection for
//!   series, PCA-axis outliers for tabular data.
//! - [`calibration`]: vicinity-tolerant precision/recall/F1 and the exact
//!   threshold sweep.
//!
//! Every score in the crate follows one convention: larger means more
//! anomalous.

pub mod calibration;
pub mod data;
pub mod detectors;
pub mod ensemble;
mod error;
pub mod linalg;
pub mod rng;
pub mod synthgen;

pub use data::{FeatureMatrix, LabelVector};
pub use error::{Error, Result};

/// Per-instance anomaly scores; larger is more anomalous.
pub type ScoreVector = Vec<f64>;
