//! Ridge forecaster whose absolute residual is the anomaly score.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::FitMeta;
use crate::data::FeatureMatrix;
use crate::linalg::cholesky;
use crate::{Error, Result, ScoreVector};

pub const DEFAULT_LAMBDA: f64 = 1.0;
const PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeResidual {
    scaler: Standardizer,
    lambda: f64,
    /// Weights on standardized columns.
    weights: Vec<f64>,
    intercept: f64,
    meta: FitMeta,
}

impl RidgeResidual {
    pub fn fit(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<Self> {
        let n = x.n_rows();
        let d = x.n_cols();
        if n == 0 {
            return Err(Error::invalid("ridge needs at least one row"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!("target has {} values for {n} rows", y.len())));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda = {lambda} must be finite and >= 0")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("target contains non-finite values"));
        }
        let scaler = Standardizer::fit(x);
        let z = DMatrix::from_row_slice(n, d, &scaler.transform(x)?);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.tr_mul(&z);
        for i in 0..d {
            gram[(i, i)] += lambda;
        }
        let rhs = z.tr_mul(&yc);
        let singular = || {
            Error::Singular(format!(
                "normal equations are singular with lambda = {lambda}; use lambda > 0"
            ))
        };
        let chol = cholesky(&gram).ok_or_else(singular)?;
        let l = chol.l_dirty();
        let max_diag = (0..d).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(min_pivot > PIVOT_RTOL * max_diag) {
            return Err(singular());
        }
        let w = chol.solve(&rhs);
        Ok(Self {
            scaler,
            lambda,
            weights: w.iter().copied().collect(),
            intercept: y_mean,
            meta: FitMeta { n, d, seed: None },
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn standardized_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    /// Weights and intercept in input units.
    pub fn coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.scaler.scale)
            .map(|(w, s)| w / s)
            .collect();
        let b = self.intercept - w.iter().zip(&self.scaler.mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let z = self.scaler.transform(x)?;
        let d = self.meta.d;
        Ok(z
            .chunks_exact(d)
            .map(|r| self.intercept + r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    pub fn score(&self, x: &FeatureMatrix, y: &[f64]) -> Result<ScoreVector> {
        if y.len() != x.n_rows() {
            return Err(Error::invalid(format!(
                "target has {} values for {} rows",
                y.len(),
                x.n_rows()
            )));
        }
        Ok(self
            .predict(x)?
            .into_iter()
            .zip(y)
            .map(|(p, t)| (t - p).abs())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        FeatureMatrix::from_unnamed_rows(&rows).unwrap()
    }

    #[test]
    fn exact_linear_data_has_zero_residual() {
        let x = random(40, 3, 1);
        let y: Vec<f64> = x.rows().map(|r| 2.0 * r[0] - r[1] + 0.5 * r[2] + 7.0).collect();
        let m = RidgeResidual::fit(&x, &y, 0.0).unwrap();
        assert!(m.score(&x, &y).unwrap().iter().all(|&s| s <= 1e-8));
        let (w, b) = m.coefficients();
        for (got, want) in w.iter().zip([2.0, -1.0, 0.5]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!((b - 7.0).abs() < 1e-9);
    }

    #[test]
    fn identity_regression() {
        let x = random(50, 4, 2);
        let y = x.column(2);
        let m = RidgeResidual::fit(&x, &y, 1e-10).unwrap();
        let (w, _) = m.coefficients();
        for (j, v) in w.iter().enumerate() {
            let want = if j == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-6, "{w:?}");
        }
    }

    #[test]
    fn huge_lambda_scores_deviation_from_mean() {
        let x = random(30, 2, 3);
        let y: Vec<f64> = x.rows().map(|r| r[0] + 1.0).collect();
        let m = RidgeResidual::fit(&x, &y, 1e14).unwrap();
        let mean = y.iter().sum::<f64>() / 30.0;
        for (s, t) in m.score(&x, &y).unwrap().iter().zip(&y) {
            assert!((s - (t - mean).abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_without_regularisation() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let x = FeatureMatrix::from_unnamed_rows(&rows).unwrap();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        match RidgeResidual::fit(&x, &y, 0.0) {
            Err(Error::Singular(msg)) => assert!(msg.contains("lambda > 0")),
            other => panic!("{other:?}"),
        }
        assert!(RidgeResidual::fit(&x, &y, 1.0).is_ok());
    }

    #[test]
    fn misaligned_target() {
        let x = random(5, 2, 0);
        assert!(RidgeResidual::fit(&x, &[1.0; 4], 1.0).is_err());
        let m = RidgeResidual::fit(&x, &[1.0, 2.0, 3.0, 4.0, 5.0], 1.0).unwrap();
        assert!(m.score(&x, &[1.0]).is_err());
    }
}
