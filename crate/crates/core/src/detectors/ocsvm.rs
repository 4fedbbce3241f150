//! ν-one-class SVM with an RBF kernel, trained by SMO on the dual
//!
//! min ½ αᵀKα  s.t.  0 ≤ αᵢ ≤ 1/(νn),  Σα = 1
//!
//! using second-order working-set selection. The offset ρ makes
//! Σ αᵢ K(xᵢ, x) − ρ zero on free support vectors; the score negates it.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::FitMeta;
use crate::data::FeatureMatrix;
use crate::{Error, Result, ScoreVector};

pub const DEFAULT_NU: f64 = 0.05;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcsvmParams {
    pub nu: f64,
    /// RBF width; `None` means `1 / d`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    /// `None` means `max(100 000, 100 n)`.
    pub max_iter: Option<usize>,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            gamma: None,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvm {
    scaler: Standardizer,
    gamma: f64,
    nu: f64,
    rho: f64,
    /// Standardized support vectors, row-major.
    support: Vec<f64>,
    coef: Vec<f64>,
    /// Full dual vector in training order.
    alpha: Vec<f64>,
    iterations: usize,
    meta: FitMeta,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    (-gamma * s).exp()
}

struct KernelCache<'a> {
    z: &'a [f64],
    d: usize,
    n: usize,
    gamma: f64,
    cols: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(z: &'a [f64], d: usize, gamma: f64) -> Self {
        let n = z.len() / d;
        let capacity = (CACHE_BYTES / (8 * n.max(1))).max(2);
        Self {
            z,
            d,
            n,
            gamma,
            cols: HashMap::new(),
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    fn column(&mut self, i: usize) -> &[f64] {
        if !self.cols.contains_key(&i) {
            if self.cols.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.cols.remove(&old);
                }
            }
            let xi = self.row(i);
            let col: Vec<f64> = (0..self.n).map(|k| rbf(xi, self.row(k), self.gamma)).collect();
            self.cols.insert(i, col);
            self.order.push_back(i);
        }
        &self.cols[&i]
    }
}

impl OneClassSvm {
    pub fn fit(x: &FeatureMatrix, params: OcsvmParams) -> Result<Self> {
        match Self::fit_inner(x, params) {
            Ok((m, None)) => Ok(m),
            Ok((m, Some(gap))) => Err(Error::NotConverged {
                iterations: m.iterations,
                gap,
                best: Box::new(m),
            }),
            Err(e) => Err(e),
        }
    }

    fn fit_inner(x: &FeatureMatrix, params: OcsvmParams) -> Result<(Self, Option<f64>)> {
        let n = x.n_rows();
        let d = x.n_cols();
        let nu = params.nu;
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::invalid(format!("nu = {nu} must lie in (0, 1]")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("one-class SVM needs n >= 2, got {n}")));
        }
        let gamma = params.gamma.unwrap_or(1.0 / d as f64);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma = {gamma} must be positive")));
        }
        let scaler = Standardizer::fit(x);
        let z = scaler.transform(x)?;
        let c = 1.0 / (nu * n as f64);
        let max_iter = params.max_iter.unwrap_or((100 * n).max(100_000));

        let mut alpha = vec![0.0; n];
        let full = ((nu * n as f64).floor() as usize).min(n);
        for a in alpha.iter_mut().take(full) {
            *a = c;
        }
        if full < n {
            alpha[full] = (1.0 - full as f64 * c).max(0.0);
        }

        let mut cache = KernelCache::new(&z, d, gamma);
        let mut grad = vec![0.0; n];
        for i in 0..n {
            if alpha[i] > 0.0 {
                let ai = alpha[i];
                let col = cache.column(i);
                for (g, k) in grad.iter_mut().zip(col) {
                    *g += ai * k;
                }
            }
        }

        let at_upper = |a: f64| a >= c;
        let mut iterations = 0;
        let mut gap;
        loop {
            // i maximises −G over {α < C}
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = usize::MAX;
            for t in 0..n {
                if !at_upper(alpha[t]) && -grad[t] > gmax {
                    gmax = -grad[t];
                    i_sel = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = usize::MAX;
            let mut obj_min = f64::INFINITY;
            if i_sel != usize::MAX {
                let qi: Vec<f64> = cache.column(i_sel).to_vec();
                for t in 0..n {
                    if alpha[t] > 0.0 {
                        if grad[t] > gmax2 {
                            gmax2 = grad[t];
                        }
                        let b = gmax + grad[t];
                        if b > 0.0 {
                            let a = (2.0 - 2.0 * qi[t]).max(TAU);
                            let obj = -(b * b) / a;
                            if obj < obj_min {
                                obj_min = obj;
                                j_sel = t;
                            }
                        }
                    }
                }
            }
            gap = gmax + gmax2;
            if gap < params.tolerance || j_sel == usize::MAX {
                break;
            }
            if iterations >= max_iter {
                let model = Self::finish(scaler, gamma, nu, &z, d, alpha, &grad, c, iterations, n);
                return Ok((model, Some(gap)));
            }
            iterations += 1;

            let (i, j) = (i_sel, j_sel);
            let qij = cache.column(i)[j];
            let quad = (2.0 - 2.0 * qij).max(TAU);
            let old_i = alpha[i];
            let old_j = alpha[j];
            let delta = (grad[i] - grad[j]) / quad;
            let sum = old_i + old_j;
            let mut ai = old_i - delta;
            let mut aj = old_j + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            alpha[i] = ai;
            alpha[j] = aj;
            let di = ai - old_i;
            let dj = aj - old_j;
            {
                let col = cache.column(i);
                for (g, k) in grad.iter_mut().zip(col) {
                    *g += di * k;
                }
            }
            {
                let col = cache.column(j);
                for (g, k) in grad.iter_mut().zip(col) {
                    *g += dj * k;
                }
            }
        }
        let _ = gap;
        Ok((Self::finish(scaler, gamma, nu, &z, d, alpha, &grad, c, iterations, n), None))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        scaler: Standardizer,
        gamma: f64,
        nu: f64,
        z: &[f64],
        d: usize,
        alpha: Vec<f64>,
        grad: &[f64],
        c: f64,
        iterations: usize,
        n: usize,
    ) -> Self {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free_n = 0usize;
        for (a, g) in alpha.iter().zip(grad) {
            if *a >= c {
                lb = lb.max(*g);
            } else if *a <= 0.0 {
                ub = ub.min(*g);
            } else {
                free_sum += g;
                free_n += 1;
            }
        }
        let rho = if free_n > 0 {
            free_sum / free_n as f64
        } else {
            (ub + lb) / 2.0
        };
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for (i, a) in alpha.iter().enumerate() {
            if *a > 0.0 {
                support.extend_from_slice(&z[i * d..(i + 1) * d]);
                coef.push(*a);
            }
        }
        Self {
            scaler,
            gamma,
            nu,
            rho,
            support,
            coef,
            alpha,
            iterations,
            meta: FitMeta { n, d, seed: None },
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn box_bound(&self) -> f64 {
        1.0 / (self.nu * self.meta.n as f64)
    }

    pub fn score(&self, q: &FeatureMatrix) -> Result<ScoreVector> {
        let zq = self.scaler.transform(q)?;
        let d = self.meta.d;
        Ok(zq
            .chunks_exact(d)
            .map(|row| {
                let mut f = 0.0;
                for (sv, a) in self.support.chunks_exact(d).zip(&self.coef) {
                    f += a * rbf(sv, row, self.gamma);
                }
                self.rho - f
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        FeatureMatrix::from_unnamed_rows(&rows).unwrap()
    }

    #[test]
    fn nu_property_and_dual_feasibility() {
        let x = gaussian(500, 2, 11);
        let nu = 0.1;
        let m = OneClassSvm::fit(&x, OcsvmParams { nu, ..Default::default() }).unwrap();
        let sum: f64 = m.alpha().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        let c = m.box_bound();
        assert!(m.alpha().iter().all(|&a| (0.0..=c + 1e-9).contains(&a)));
        let s = m.score(&x).unwrap();
        let outside = s.iter().filter(|&&v| v > 0.0).count() as f64 / 500.0;
        let sv = m.n_support() as f64 / 500.0;
        assert!(outside <= nu + 0.02, "outlier fraction {outside}");
        assert!(sv >= nu - 0.02, "support fraction {sv}");
    }

    #[test]
    fn far_query_and_interior_duplicate() {
        let x = gaussian(300, 2, 3);
        let m = OneClassSvm::fit(&x, OcsvmParams::default()).unwrap();
        let train = m.score(&x).unwrap();
        let max_train = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // deepest interior point: the one nearest the sample mean
        let deep = (0..x.n_rows())
            .min_by(|&a, &b| {
                let na: f64 = x.row(a).iter().map(|v| v * v).sum();
                let nb: f64 = x.row(b).iter().map(|v| v * v).sum();
                na.total_cmp(&nb)
            })
            .unwrap();
        let q = FeatureMatrix::from_unnamed_rows(&[vec![10.0, 0.0], x.row(deep).to_vec()]).unwrap();
        let s = m.score(&q).unwrap();
        assert!(s[0] > max_train);
        assert!(s[1] < 0.0);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let x = gaussian(200, 2, 5);
        let err = OneClassSvm::fit(
            &x,
            OcsvmParams {
                nu: 0.2,
                max_iter: Some(3),
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::NotConverged { iterations, best, .. } => {
                assert_eq!(iterations, 3);
                assert!((best.alpha().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_bad_params() {
        let x = gaussian(10, 2, 0);
        for nu in [0.0, 1.5] {
            assert!(OneClassSvm::fit(&x, OcsvmParams { nu, ..Default::default() }).is_err());
        }
        let one = gaussian(1, 2, 0);
        assert!(OneClassSvm::fit(&one, OcsvmParams::default()).is_err());
    }
}
