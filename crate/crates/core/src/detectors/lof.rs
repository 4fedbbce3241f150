//! Local outlier factor with exact k-nearest-neighbour search.
//!
//! For a query `q` with neighbours `N_k(q)` among the training points:
//!
//! ```text
//! reach(q, o) = max(k_distance(o), |q - o|)
//! lrd(q)      = 1 / (mean_{o in N_k(q)} reach(q, o) + 1e-10)
//! lof(q)      = mean_{o in N_k(q)} lrd(o) / lrd(q)
//! ```
//!
//! Training-point quantities (`k_distance`, `lrd`) use neighbourhoods that
//! exclude the point itself. Queries are always treated as new points, so a
//! query equal to a training row sees that row at distance zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::FitMeta;
use crate::data::FeatureMatrix;
use crate::{Error, Result, ScoreVector};

pub const DEFAULT_NEIGHBORS: usize = 20;
const LRD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    k: usize,
    scaler: Standardizer,
    /// Standardized training rows, row-major.
    train: Vec<f64>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
    meta: FitMeta,
}

/// `k` nearest rows of `data` to `query` as `(distance, index)`, ordered by
/// distance then index. `exclude` skips one row.
pub fn k_nearest(
    data: &[f64],
    d: usize,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
    scratch: &mut Vec<(f64, usize)>,
) -> Vec<(f64, usize)> {
    scratch.clear();
    for (i, row) in data.chunks_exact(d).enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        scratch.push((d2, i));
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(scratch.len());
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k, cmp);
    }
    let mut top = scratch[..k].to_vec();
    top.sort_unstable_by(cmp);
    top.iter_mut().for_each(|p| p.0 = p.0.sqrt());
    top
}

impl LofModel {
    pub fn fit(x: &FeatureMatrix, k: usize) -> Result<Self> {
        let n = x.n_rows();
        if k == 0 || k >= n {
            return Err(Error::invalid(format!(
                "LOF needs 1 <= k < n (k = {k}, n = {n})"
            )));
        }
        let scaler = Standardizer::fit(x);
        let train = scaler.transform(x)?;
        let d = x.n_cols();
        let neighbours: Vec<Vec<(f64, usize)>> = (0..n)
            .into_par_iter()
            .map_init(Vec::new, |scratch, i| {
                k_nearest(&train, d, &train[i * d..(i + 1) * d], k, Some(i), scratch)
            })
            .collect();
        let k_distance: Vec<f64> = neighbours.iter().map(|nb| nb[k - 1].0).collect();
        let lrd = neighbours
            .iter()
            .map(|nb| {
                let reach: f64 = nb.iter().map(|&(dist, o)| dist.max(k_distance[o])).sum();
                1.0 / (reach / k as f64 + LRD_EPS)
            })
            .collect();
        Ok(Self {
            k,
            scaler,
            train,
            k_distance,
            lrd,
            meta: FitMeta { n, d, seed: None },
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn score(&self, q: &FeatureMatrix) -> Result<ScoreVector> {
        let z = self.scaler.transform(q)?;
        let d = self.meta.d;
        let k = self.k;
        Ok(z.par_chunks(d)
            .map_init(Vec::new, |scratch, row| {
                let nb = k_nearest(&self.train, d, row, k, None, scratch);
                let reach: f64 = nb.iter().map(|&(dist, o)| dist.max(self.k_distance[o])).sum();
                let lrd_q = 1.0 / (reach / k as f64 + LRD_EPS);
                let mean_lrd: f64 = nb.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / k as f64;
                mean_lrd / lrd_q
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::rng_from_seed;

    #[test]
    fn unit_square_corners_are_symmetric() {
        let x = FeatureMatrix::from_unnamed_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let m = LofModel::fit(&x, 3).unwrap();
        let s = m.score(&x).unwrap();
        for v in &s {
            assert!((v - s[0]).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn isolated_point_scores_highest() {
        let x = FeatureMatrix::from_unnamed_rows(&[
            vec![0.0],
            vec![1.0],
            vec![2.0],
            vec![3.0],
            vec![10.0],
        ])
        .unwrap();
        let m = LofModel::fit(&x, 2).unwrap();
        let s = m.score(&x).unwrap();
        let q = m
            .score(&FeatureMatrix::from_unnamed_rows(&[vec![1.5]]).unwrap())
            .unwrap();
        assert!(s[4] > q[0]);
        assert!(s[4] > s[1] && s[4] > s[2]);
    }

    #[test]
    fn gaussian_inliers_near_one() {
        let mut rng = rng_from_seed(5);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let x = FeatureMatrix::from_unnamed_rows(&rows).unwrap();
        let mut s = LofModel::fit(&x, 20).unwrap().score(&x).unwrap();
        s.sort_by(f64::total_cmp);
        let median = s[100];
        assert!((0.9..=1.2).contains(&median), "median {median}");
    }

    #[test]
    fn invalid_k_and_dimension() {
        let x = FeatureMatrix::from_unnamed_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(LofModel::fit(&x, 2).is_err());
        assert!(LofModel::fit(&x, 0).is_err());
        let m = LofModel::fit(&x, 1).unwrap();
        let q = FeatureMatrix::from_unnamed_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(m.score(&q), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ties_break_by_lowest_index() {
        let data = [1.0, -1.0, 1.0, 0.5];
        let mut scratch = Vec::new();
        let nb = k_nearest(&data, 1, &[0.0], 2, None, &mut scratch);
        assert_eq!(nb, vec![(0.5, 3), (1.0, 0)]);
    }
}
