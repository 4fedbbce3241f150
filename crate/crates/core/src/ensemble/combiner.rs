//! Min-max normalisation of member scores and the consensus functions that
//! merge them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::logreg::{fit_logreg, sigmoid, DEFAULT_L2};
use crate::data::LabelVector;
use crate::{Error, Result, ScoreVector};

/// Row-major `n × M` matrix of member scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "score matrix {n_rows}x{n_cols} needs {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Builds from per-member columns of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let m = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("member score columns differ in length"));
        }
        let mut values = vec![0.0; n * m];
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                values[i * m + j] = *v;
            }
        }
        Self::new(n, m, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.values[i * self.n_cols + j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Map `s` linearly so `lo → 0`, `hi → 1`, clipped to `[0, 1]`; every value
/// becomes 0.5 when `hi == lo`.
pub fn normalize_scores(s: &[f64], lo: f64, hi: f64) -> ScoreVector {
    if !(hi > lo) {
        return vec![0.5; s.len()];
    }
    let span = hi - lo;
    s.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
}

/// Frozen min-max constants of one member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub lo: f64,
    pub hi: f64,
}

impl Normalization {
    pub fn from_scores(s: &[f64]) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::invalid("cannot calibrate normalisation on zero rows"));
        }
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("member produced non-finite scores"));
        }
        Ok(Self { lo, hi })
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn apply(&self, s: &[f64]) -> ScoreVector {
        normalize_scores(s, self.lo, self.hi)
    }
}

/// Sample Pearson correlation; errors when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "pearson needs two equal-length inputs of length >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("pearson correlation undefined for a constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinerKind {
    Lt,
    Wlt,
    #[serde(rename = "logreg")]
    LogReg,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 3] = [CombinerKind::Lt, CombinerKind::Wlt, CombinerKind::LogReg];

    pub fn as_str(self) -> &'static str {
        match self {
            CombinerKind::Lt => "lt",
            CombinerKind::Wlt => "wlt",
            CombinerKind::LogReg => "logreg",
        }
    }
}

impl fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombinerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombinerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown combiner `{s}` (expected lt, wlt or logreg)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CombinerSpec {
    Lt {
        n_members: usize,
    },
    Wlt {
        weights: Vec<f64>,
    },
    #[serde(rename = "logreg")]
    LogReg {
        weights: Vec<f64>,
        bias: f64,
    },
}

impl CombinerSpec {
    pub fn kind(&self) -> CombinerKind {
        match self {
            CombinerSpec::Lt { .. } => CombinerKind::Lt,
            CombinerSpec::Wlt { .. } => CombinerKind::Wlt,
            CombinerSpec::LogReg { .. } => CombinerKind::LogReg,
        }
    }

    pub fn n_members(&self) -> usize {
        match self {
            CombinerSpec::Lt { n_members } => *n_members,
            CombinerSpec::Wlt { weights } | CombinerSpec::LogReg { weights, .. } => weights.len(),
        }
    }
}

fn uniform(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

pub fn fit_combiner(s: &ScoreMatrix, y: &LabelVector, kind: CombinerKind) -> Result<CombinerSpec> {
    let m = s.n_cols();
    if m == 0 {
        return Err(Error::invalid("cannot combine zero members"));
    }
    if y.len() != s.n_rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} score rows",
            y.len(),
            s.n_rows()
        )));
    }
    if kind == CombinerKind::Lt {
        return Ok(CombinerSpec::Lt { n_members: m });
    }
    let pos = y.positives();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid(format!("{kind} combiner needs both classes in the labels")));
    }
    let yf = y.as_f64();
    match kind {
        CombinerKind::Lt => unreachable!(),
        CombinerKind::Wlt => {
            let mut w: Vec<f64> = (0..m)
                .map(|j| pearson(&s.column(j), &yf).map_or(0.0, |r| r.max(0.0)))
                .collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter_mut().for_each(|v| *v /= total);
            } else {
                log::warn!("no member correlates positively with the labels; WLT falls back to uniform weights");
                w = uniform(m);
            }
            Ok(CombinerSpec::Wlt { weights: w })
        }
        CombinerKind::LogReg => {
            let fit = fit_logreg(s, &yf, DEFAULT_L2)?;
            Ok(CombinerSpec::LogReg {
                weights: fit.weights,
                bias: fit.bias,
            })
        }
    }
}

fn weighted(row: &[f64], w: &[f64]) -> f64 {
    row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0)
}

pub fn combine(s: &ScoreMatrix, spec: &CombinerSpec) -> Result<ScoreVector> {
    let m = s.n_cols();
    if spec.n_members() != m {
        return Err(Error::DimensionMismatch {
            expected: spec.n_members(),
            actual: m,
        });
    }
    let rows = 0..s.n_rows();
    Ok(match spec {
        CombinerSpec::Lt { n_members } => {
            let w = uniform(*n_members);
            rows.map(|i| weighted(s.row(i), &w)).collect()
        }
        CombinerSpec::Wlt { weights } => rows.map(|i| weighted(s.row(i), weights)).collect(),
        CombinerSpec::LogReg { weights, bias } => rows
            .map(|i| {
                let z = bias + s.row(i).iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
                sigmoid(z)
            })
            .collect(),
    })
}
