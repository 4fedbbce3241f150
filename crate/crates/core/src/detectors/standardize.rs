use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::{Error, Result};

/// Per-column centring and scaling learnt at fit time and replayed at score
/// time. Constant columns keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let d = x.n_cols();
        let n = x.n_rows().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in x.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x.rows() {
            for j in 0..d {
                let c = r[j] - mean[j];
                var[j] += c * c;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 * (1.0 + s) && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn check(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.n_cols(),
            });
        }
        Ok(())
    }

    /// Row-major standardized copy of `x`.
    pub fn transform(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = Vec::with_capacity(x.values().len());
        for r in x.rows() {
            out.extend(
                r.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s),
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_keeps_unit_scale() {
        let x = FeatureMatrix::from_unnamed_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.transform(&x).unwrap(), vec![-1.0, 0.0, 1.0, 0.0]);
    }
}
