//! Minimum covariance determinant by concentration steps (FAST-MCD) and the
//! elliptic envelope that scores Mahalanobis distance under it.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::FitMeta;
use crate::data::FeatureMatrix;
use crate::linalg::{cholesky, mahalanobis_sq, mean_cov, regularize, spd_logdet};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result, ScoreVector};

pub const DEFAULT_STARTS: usize = 30;
const REFINED_STARTS: usize = 10;
const PRELIM_STEPS: usize = 2;
const MAX_STEPS: usize = 200;
const REG: f64 = 1e-9;

/// Robust location/scatter of an `h`-subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdEstimate {
    pub location: Vec<f64>,
    /// Row-major `d × d`, regularised by `1e-9 · trace / d` on the diagonal.
    pub covariance: Vec<f64>,
    pub support: Vec<bool>,
    pub log_det: f64,
}

impl McdEstimate {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn support_size(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covariance)
    }

    /// Mahalanobis distances of row-major `values`.
    pub fn distances(&self, values: &[f64]) -> Result<Vec<f64>> {
        let chol = cholesky(&self.covariance_matrix())
            .ok_or_else(|| Error::Singular("robust covariance is not positive definite".into()))?;
        let mean = DVector::from_column_slice(&self.location);
        Ok(mahalanobis_sq(values, self.dim(), &mean, &chol)
            .into_iter()
            .map(f64::sqrt)
            .collect())
    }
}

/// Default subset size `⌊(n + d + 1) / 2⌋`.
pub fn default_support_size(n: usize, d: usize) -> usize {
    (n + d + 1) / 2
}

struct Candidate {
    subset: Vec<usize>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_det: f64,
}

fn regularized_cov(values: &[f64], d: usize, rows: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let (mean, mut cov) = mean_cov(values, d, rows);
    if !(cov.trace() > 0.0) {
        return Err(Error::Singular(format!(
            "{}-point subset has zero scatter; covariance cannot be regularised",
            rows.len()
        )));
    }
    regularize(&mut cov, REG);
    let log_det = spd_logdet(&cov).ok_or_else(|| {
        Error::Singular(format!("{}-point subset is rank deficient after regularisation", rows.len()))
    })?;
    Ok((mean, cov, log_det))
}

/// Indices of the `h` smallest values, ties broken by index, in ascending
/// index order.
fn smallest_h(dist: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    let cmp = |a: &usize, b: &usize| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b));
    if h < idx.len() {
        idx.select_nth_unstable_by(h, cmp);
        idx.truncate(h);
    }
    idx.sort_unstable();
    idx
}

fn concentrate(values: &[f64], d: usize, h: usize, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Candidate> {
    let chol = cholesky(cov).ok_or_else(|| Error::Singular("covariance lost definiteness".into()))?;
    let dist = mahalanobis_sq(values, d, mean, &chol);
    let subset = smallest_h(&dist, h);
    let (mean, cov, log_det) = regularized_cov(values, d, &subset)?;
    Ok(Candidate {
        subset,
        mean,
        cov,
        log_det,
    })
}

/// Runs C-steps from `start` until the determinant stops decreasing or the
/// subset repeats, at most `steps` times.
fn iterate(values: &[f64], d: usize, h: usize, start: Candidate, steps: usize) -> Result<Candidate> {
    let mut cur = start;
    for _ in 0..steps {
        let next = concentrate(values, d, h, &cur.mean, &cur.cov)?;
        let improved = next.log_det < cur.log_det;
        let same = next.subset == cur.subset;
        if improved {
            cur = next;
        }
        if !improved || same {
            break;
        }
    }
    Ok(cur)
}

/// Random `(d + 1)`-subset, doubled until its covariance is non-singular or
/// it reaches `h` (then regularised); the fit seeds the first concentration.
fn random_start(values: &[f64], n: usize, d: usize, h: usize, seed: u64) -> Result<Candidate> {
    let mut rng = rng_from_seed(seed);
    let order = sample(&mut rng, n, n).into_vec();
    let mut size = (d + 1).min(n);
    loop {
        let rows = &order[..size];
        let (mean, cov) = mean_cov(values, d, rows);
        if spd_logdet(&cov).is_some() || size >= h {
            let (mean, cov) = if spd_logdet(&cov).is_some() {
                (mean, cov)
            } else {
                let (m, c, _) = regularized_cov(values, d, rows)?;
                (m, c)
            };
            return concentrate(values, d, h, &mean, &cov);
        }
        size = (2 * size).min(h);
    }
}

/// FAST-MCD on a row-major `n × d` buffer. Besides `n_starts` random starts,
/// one start takes the `h` points closest to the full-sample fit, which
/// guarantees a determinant no larger than the full-sample one.
pub fn mcd_fit_raw(values: &[f64], d: usize, h: usize, n_starts: usize, seed: u64) -> Result<McdEstimate> {
    let n = if d == 0 { 0 } else { values.len() / d };
    if n <= d + 1 {
        return Err(Error::invalid(format!("MCD needs n > d + 1 (n = {n}, d = {d})")));
    }
    if h <= d || h > n {
        return Err(Error::invalid(format!("support size {h} must be in (d, n] = ({d}, {n}]")));
    }
    let all: Vec<usize> = (0..n).collect();
    let (m_full, c_full, _) = regularized_cov(values, d, &all)?;
    let mut starts = vec![concentrate(values, d, h, &m_full, &c_full)?];
    let random: Vec<Result<Candidate>> = (0..n_starts)
        .into_par_iter()
        .map(|s| random_start(values, n, d, h, derive_seed(seed, s as u64)))
        .collect();
    for r in random {
        starts.push(r?);
    }
    let prelim: Vec<Candidate> = starts
        .into_par_iter()
        .map(|c| iterate(values, d, h, c, PRELIM_STEPS))
        .collect::<Result<_>>()?;
    let mut prelim = prelim;
    prelim.sort_by(|a, b| a.log_det.total_cmp(&b.log_det));
    prelim.dedup_by(|a, b| a.subset == b.subset);
    prelim.truncate(REFINED_STARTS);
    let refined: Vec<Candidate> = prelim
        .into_par_iter()
        .map(|c| iterate(values, d, h, c, MAX_STEPS))
        .collect::<Result<_>>()?;
    let best = refined
        .into_iter()
        .min_by(|a, b| a.log_det.total_cmp(&b.log_det).then_with(|| a.subset.cmp(&b.subset)))
        .expect("at least one start");
    let mut support = vec![false; n];
    for &i in &best.subset {
        support[i] = true;
    }
    let mut covariance = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            covariance.push(best.cov[(i, j)]);
        }
    }
    Ok(McdEstimate {
        location: best.mean.iter().copied().collect(),
        covariance,
        support,
        log_det: best.log_det,
    })
}

/// `ln det` of the regularised full-sample covariance of a row-major buffer.
pub fn full_sample_log_det(values: &[f64], d: usize) -> Result<f64> {
    let n = values.len() / d;
    let all: Vec<usize> = (0..n).collect();
    Ok(regularized_cov(values, d, &all)?.2)
}

/// Elliptic envelope: FAST-MCD on standardized data, scored by the robust
/// Mahalanobis distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticEnvelope {
    scaler: Standardizer,
    estimate: McdEstimate,
    meta: FitMeta,
}

impl EllipticEnvelope {
    pub fn fit(x: &FeatureMatrix, support_fraction: Option<f64>, n_starts: usize, seed: u64) -> Result<Self> {
        let n = x.n_rows();
        let d = x.n_cols();
        let h = match support_fraction {
            None => default_support_size(n, d),
            Some(f) if f > 0.0 && f <= 1.0 => ((f * n as f64).floor() as usize).max(d + 1),
            Some(f) => return Err(Error::invalid(format!("support fraction {f} outside (0, 1]"))),
        };
        let scaler = Standardizer::fit(x);
        let z = scaler.transform(x)?;
        let estimate = mcd_fit_raw(&z, d, h, n_starts, seed)?;
        Ok(Self {
            scaler,
            estimate,
            meta: FitMeta {
                n,
                d,
                seed: Some(seed),
            },
        })
    }

    /// Envelope around a given estimate in already standardized coordinates.
    pub fn from_estimate(estimate: McdEstimate) -> Self {
        let d = estimate.dim();
        Self {
            scaler: Standardizer {
                mean: vec![0.0; d],
                scale: vec![1.0; d],
            },
            meta: FitMeta {
                n: estimate.support.len(),
                d,
                seed: None,
            },
            estimate,
        }
    }

    pub fn estimate(&self) -> &McdEstimate {
        &self.estimate
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    /// Robust location mapped back to input units.
    pub fn location(&self) -> Vec<f64> {
        self.estimate
            .location
            .iter()
            .zip(self.scaler.mean.iter().zip(&self.scaler.scale))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn score(&self, q: &FeatureMatrix) -> Result<ScoreVector> {
        let z = self.scaler.transform(q)?;
        self.estimate.distances(&z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn identity_estimate_scores_euclidean_norm() {
        let est = McdEstimate {
            location: vec![0.0, 0.0],
            covariance: vec![1.0, 0.0, 0.0, 1.0],
            support: vec![true; 3],
            log_det: 0.0,
        };
        let env = EllipticEnvelope::from_estimate(est);
        let q = FeatureMatrix::from_unnamed_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let s = env.score(&q).unwrap();
        assert!((s[0] - 5.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn robust_mean_ignores_gross_outliers() {
        let mut rows = gaussian(100, 2, 8);
        let clean_mean: Vec<f64> = (0..2)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 100.0)
            .collect();
        for k in 0..5 {
            let a = k as f64;
            rows.push(vec![50.0 * a.cos().abs() + 35.0, 50.0 * a.sin().abs() + 35.0]);
        }
        let naive: Vec<f64> = (0..2)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect();
        let x = FeatureMatrix::from_unnamed_rows(&rows).unwrap();
        let env = EllipticEnvelope::fit(&x, None, DEFAULT_STARTS, 1).unwrap();
        let loc = env.location();
        for j in 0..2 {
            assert!((loc[j] - clean_mean[j]).abs() < 0.5, "robust {loc:?} clean {clean_mean:?}");
            assert!((naive[j] - clean_mean[j]).abs() > 0.5);
        }
        assert_eq!(env.estimate().support_size(), default_support_size(105, 2));
        // the robust location scores lower than any outlier
        let s = env.score(&x).unwrap();
        assert!(s[100..].iter().all(|&v| v > 10.0));
    }

    #[test]
    fn covariance_symmetric_and_smaller_than_full() {
        let rows = gaussian(80, 3, 2);
        let x = FeatureMatrix::from_unnamed_rows(&rows).unwrap();
        let env = EllipticEnvelope::fit(&x, None, 10, 4).unwrap();
        let c = env.estimate().covariance_matrix();
        assert!((&c - c.transpose()).abs().max() < 1e-10);
        assert!(c.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0));
        let z = env.scaler().transform(&x).unwrap();
        assert!(env.estimate().log_det <= full_sample_log_det(&z, 3).unwrap());
    }

    fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(k);
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                if n - i < k - cur.len() {
                    break;
                }
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        rec(0, n, k, &mut cur, &mut out);
        out
    }

    #[test]
    fn matches_exhaustive_subset_search_on_small_inputs() {
        for seed in 0..6u64 {
            let n = 10 + (seed as usize % 4);
            let d = 2;
            let mut rows = gaussian(n, d, 100 + seed);
            rows[0] = vec![6.0, -5.0];
            let flat: Vec<f64> = rows.concat();
            let h = default_support_size(n, d);
            let best = combinations(n, h)
                .iter()
                .filter_map(|s| regularized_cov(&flat, d, s).ok().map(|r| r.2))
                .fold(f64::INFINITY, f64::min);
            let est = mcd_fit_raw(&flat, d, h, DEFAULT_STARTS, seed).unwrap();
            assert!((est.log_det - best).abs() < 1e-9, "seed {seed}: {} vs {best}", est.log_det);
            assert_eq!(est.support_size(), h);
        }
    }

    #[test]
    fn too_few_rows() {
        let x = FeatureMatrix::from_unnamed_rows(&gaussian(3, 2, 0)).unwrap();
        assert!(EllipticEnvelope::fit(&x, None, 5, 0).is_err());
    }

    #[test]
    fn identical_points_cannot_be_regularised() {
        let x = FeatureMatrix::from_unnamed_rows(&vec![vec![1.0, 1.0]; 10]).unwrap();
        assert!(matches!(
            EllipticEnvelope::fit(&x, None, 5, 0),
            Err(Error::Singular(_))
        ));
    }
}
