//! Thin helpers over `nalgebra` for the dense routines shared by detectors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Mean and maximum-likelihood covariance (divisor `|rows|`) of the selected
/// rows of a row-major `n × d` buffer.
pub fn mean_cov(values: &[f64], d: usize, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let h = rows.len() as f64;
    let mut mean = DVector::<f64>::zeros(d);
    for &r in rows {
        let row = &values[r * d..(r + 1) * d];
        for (j, v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= h;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for &r in rows {
        let row = &values[r * d..(r + 1) * d];
        for j in 0..d {
            centered[j] = row[j] - mean[j];
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / h;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// `ln det` of a symmetric positive-definite matrix, `None` when the
/// Cholesky factorisation fails.
pub fn spd_logdet(m: &DMatrix<f64>) -> Option<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let v = l[(i, i)];
        if !(v > 0.0) || !v.is_finite() {
            return None;
        }
        acc += 2.0 * v.ln();
    }
    Some(acc)
}

/// Adds `eps · I` with `eps = rel · trace / d`.
pub fn regularize(m: &mut DMatrix<f64>, rel: f64) {
    let d = m.nrows();
    if d == 0 {
        return;
    }
    let eps = rel * m.trace() / d as f64;
    for i in 0..d {
        m[(i, i)] += eps;
    }
}

/// Squared Mahalanobis distances of the rows of a row-major buffer under
/// `(mean, chol)`.
pub fn mahalanobis_sq(
    values: &[f64],
    d: usize,
    mean: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
) -> Vec<f64> {
    let n = if d == 0 { 0 } else { values.len() / d };
    let l = chol.l();
    let mut out = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    for r in 0..n {
        let row = &values[r * d..(r + 1) * d];
        // forward substitution L z = (x - mean)
        for i in 0..d {
            let mut s = row[i] - mean[i];
            for k in 0..i {
                s -= l[(i, k)] * z[k];
            }
            z[i] = s / l[(i, i)];
        }
        out.push(z.iter().map(|v| v * v).sum());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mahalanobis_identity_is_euclidean() {
        let mean = DVector::from_vec(vec![0.0, 0.0]);
        let chol = cholesky(&DMatrix::identity(2, 2)).unwrap();
        let d2 = mahalanobis_sq(&[3.0, 4.0], 2, &mean, &chol);
        assert!((d2[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn logdet_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((spd_logdet(&m).unwrap() - 6f64.ln()).abs() < 1e-12);
        let singular = DMatrix::<f64>::zeros(2, 2);
        assert!(spd_logdet(&singular).is_none());
    }

    #[test]
    fn covariance_of_two_points() {
        let (m, c) = mean_cov(&[0.0, 0.0, 2.0, 4.0], 2, &[0, 1]);
        assert_eq!(m.as_slice(), &[1.0, 2.0]);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((c[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((c[(1, 1)] - 4.0).abs() < 1e-12);
    }
}
