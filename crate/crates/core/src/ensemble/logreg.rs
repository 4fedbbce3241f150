//! L2-regularised logistic regression fitted by damped Newton steps.
//!
//! Objective over rows `sᵢ` with labels `yᵢ ∈ {0, 1}`:
//!
//! ```text
//! L(w, b) = (1/n) Σ [softplus(zᵢ) − yᵢ zᵢ] + (λ/2) ‖w‖²,   zᵢ = sᵢ·w + b
//! ```
//!
//! The bias is not penalised.

use nalgebra::{DMatrix, DVector};

use super::ScoreMatrix;
use crate::{Error, Result};

pub const DEFAULT_L2: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 500;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Loss and gradient; the gradient is laid out as `[w..., b]`.
pub fn loss_and_gradient(s: &ScoreMatrix, y: &[f64], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>) {
    let n = s.n_rows() as f64;
    let m = s.n_cols();
    let mut loss = 0.0;
    let mut grad = vec![0.0; m + 1];
    for (i, yi) in y.iter().enumerate() {
        let row = s.row(i);
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(z) - yi * z;
        let r = sigmoid(z) - yi;
        for j in 0..m {
            grad[j] += r * row[j];
        }
        grad[m] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for j in 0..m {
        loss += 0.5 * l2 * w[j] * w[j];
        grad[j] += l2 * w[j];
    }
    (loss, grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub struct LogRegFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub fn fit_logreg(s: &ScoreMatrix, y: &[f64], l2: f64) -> Result<LogRegFit> {
    let n = s.n_rows();
    let m = s.n_cols();
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    if pos == 0 || pos == n {
        return Err(Error::invalid("logistic combiner needs both classes in the labels"));
    }
    let mut w = vec![0.0; m];
    let prior = pos as f64 / n as f64;
    let mut b = (prior / (1.0 - prior)).ln();
    let (mut loss, mut grad) = loss_and_gradient(s, y, &w, b, l2);
    let mut iterations = 0;
    while norm(&grad) > GRAD_TOL && iterations < MAX_NEWTON {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(m + 1, m + 1);
        for i in 0..n {
            let row = s.row(i);
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let p = sigmoid(z);
            let v = p * (1.0 - p);
            if v == 0.0 {
                continue;
            }
            for a in 0..=m {
                let xa = if a < m { row[a] } else { 1.0 };
                for c in a..=m {
                    let xc = if c < m { row[c] } else { 1.0 };
                    h[(a, c)] += v * xa * xc;
                }
            }
        }
        for a in 0..=m {
            for c in a..=m {
                let v = h[(a, c)] / n as f64;
                h[(a, c)] = v;
                h[(c, a)] = v;
            }
        }
        for j in 0..m {
            h[(j, j)] += l2;
        }
        // the bias direction can be flat when every sigmoid saturates
        h[(m, m)] += 1e-12;
        let g = DVector::from_column_slice(&grad);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => g.clone(),
        };
        let mut t = 1.0;
        let slope: f64 = -g.dot(&step);
        let mut accepted = false;
        for _ in 0..60 {
            let w_new: Vec<f64> = w.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let b_new = b - t * step[m];
            let (l_new, g_new) = loss_and_gradient(s, y, &w_new, b_new, l2);
            if l_new <= loss + 1e-4 * t * slope || (l_new <= loss && norm(&g_new) < norm(&grad)) {
                w = w_new;
                b = b_new;
                loss = l_new;
                grad = g_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let grad_norm = norm(&grad);
    if grad_norm > GRAD_TOL {
        log::warn!("logistic combiner stopped at gradient norm {grad_norm:.3e} after {iterations} Newton steps");
    }
    Ok(LogRegFit {
        weights: w,
        bias: b,
        iterations,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn problem(seed: u64, n: usize, m: usize) -> (ScoreMatrix, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let mut vals = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let lab = rng.random_bool(0.3);
            for _ in 0..m {
                let base: f64 = rng.random_range(0.0..1.0);
                vals.push(if lab { (base + 0.3).min(1.0) } else { base * 0.8 });
            }
            y.push(if lab { 1.0 } else { 0.0 });
        }
        (ScoreMatrix::new(n, m, vals).unwrap(), y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (s, y) = problem(3, 80, 3);
        let mut rng = rng_from_seed(99);
        let h = 1e-5;
        for _ in 0..10 {
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let b: f64 = rng.random_range(-2.0..2.0);
            let (_, g) = loss_and_gradient(&s, &y, &w, b, DEFAULT_L2);
            for k in 0..4 {
                let eval = |delta: f64| {
                    let mut wp = w.clone();
                    let mut bp = b;
                    if k < 3 {
                        wp[k] += delta;
                    } else {
                        bp += delta;
                    }
                    loss_and_gradient(&s, &y, &wp, bp, DEFAULT_L2).0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-6, "component {k}: analytic {} numeric {fd}", g[k]);
            }
        }
    }

    #[test]
    fn converges_to_tolerance() {
        let (s, y) = problem(5, 200, 2);
        let fit = fit_logreg(&s, &y, DEFAULT_L2).unwrap();
        assert!(fit.grad_norm <= GRAD_TOL, "{}", fit.grad_norm);
        assert!(fit.weights.iter().all(|w| w.is_finite() && *w > 0.0));
    }

    #[test]
    fn separable_data_stays_finite() {
        let s = ScoreMatrix::new(4, 1, vec![0.0, 0.1, 0.9, 1.0]).unwrap();
        let fit = fit_logreg(&s, &[0.0, 0.0, 1.0, 1.0], DEFAULT_L2).unwrap();
        assert!(fit.weights[0].is_finite() && fit.bias.is_finite());
        assert!(fit.grad_norm <= GRAD_TOL, "{}", fit.grad_norm);
    }

    #[test]
    fn single_class_rejected() {
        let s = ScoreMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(fit_logreg(&s, &[1.0, 1.0], DEFAULT_L2).is_err());
    }
}
