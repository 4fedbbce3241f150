//! Isolation forest: random axis-aligned partitions, scored by the mean
//! isolation depth normalised with the expected depth of an unsuccessful
//! binary-search-tree lookup.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::FitMeta;
use crate::data::FeatureMatrix;
use crate::rng::{derive_seed, rng_from_seed, DetRng};
use crate::{Error, Result, ScoreVector};

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / i as f64).sum()
}

/// Average path length `c(m)` of an unsuccessful search in a binary search
/// tree built from `m` points.
pub fn average_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => 2.0 * harmonic(m - 1) - 2.0 * (m as f64 - 1.0) / m as f64,
    }
}

/// `2^(-mean_path / c(sample_size))`.
pub fn anomaly_score_from_path(mean_path: f64, sample_size: usize) -> f64 {
    (-mean_path / average_path_length(sample_size)).exp2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<Node>,
    height_limit: usize,
}

impl IsolationTree {
    fn grow(data: &[f64], d: usize, rows: Vec<usize>, height_limit: usize, rng: &mut DetRng) -> Self {
        let mut tree = Self {
            nodes: Vec::new(),
            height_limit,
        };
        tree.build(data, d, rows, 0, rng);
        tree
    }

    fn build(&mut self, data: &[f64], d: usize, rows: Vec<usize>, depth: usize, rng: &mut DetRng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if rows.len() <= 1 || depth >= self.height_limit {
            return id;
        }
        // features with a representable value strictly inside (min, max)
        let mut candidates = Vec::with_capacity(d);
        for f in 0..d {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = data[r * d + f];
                (lo.min(v), hi.max(v))
            });
            let mid = lo + (hi - lo) / 2.0;
            if mid > lo && mid < hi {
                candidates.push((f, lo, hi));
            }
        }
        if candidates.is_empty() {
            return id;
        }
        let (feature, lo, hi) = candidates[rng.random_range(0..candidates.len())];
        let value = loop {
            let v = lo + rng.random::<f64>() * (hi - lo);
            if v > lo && v < hi {
                break v;
            }
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data[i * d + feature] < value);
        let left = self.build(data, d, l, depth + 1, rng);
        let right = self.build(data, d, r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if x[feature] < value { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    sample_size: usize,
    scaler: Standardizer,
    meta: FitMeta,
}

impl IsolationForest {
    pub fn fit(x: &FeatureMatrix, n_trees: usize, subsample: usize, seed: u64) -> Result<Self> {
        let n = x.n_rows();
        if n < 2 {
            return Err(Error::invalid(format!("isolation forest needs n >= 2, got {n}")));
        }
        if n_trees == 0 || subsample < 2 {
            return Err(Error::invalid("isolation forest needs n_trees >= 1 and subsample >= 2"));
        }
        let scaler = Standardizer::fit(x);
        let data = scaler.transform(x)?;
        let d = x.n_cols();
        let sample_size = subsample.min(n);
        let height_limit = (sample_size as f64).log2().ceil() as usize;
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(seed, t as u64));
                let rows = sample(&mut rng, n, sample_size).into_vec();
                IsolationTree::grow(&data, d, rows, height_limit, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            sample_size,
            scaler,
            meta: FitMeta {
                n,
                d,
                seed: Some(seed),
            },
        })
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn mean_path_lengths(&self, q: &FeatureMatrix) -> Result<Vec<f64>> {
        let z = self.scaler.transform(q)?;
        let t = self.trees.len() as f64;
        Ok(z.par_chunks(self.meta.d)
            .map(|row| self.trees.iter().map(|tr| tr.path_length(row)).sum::<f64>() / t)
            .collect())
    }

    pub fn score(&self, q: &FeatureMatrix) -> Result<ScoreVector> {
        Ok(self
            .mean_path_lengths(q)?
            .into_iter()
            .map(|h| anomaly_score_from_path(h, self.sample_size))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_of_256() {
        // 2·H(255) − 2·255/256 evaluated in exact rational arithmetic
        assert!((average_path_length(256) - 10.248_689_925_634_562).abs() < 1e-12);
        assert_eq!(average_path_length(2), 1.0);
        assert_eq!(average_path_length(1), 0.0);
    }

    #[test]
    fn expected_depth_scores_one_half() {
        for m in [2, 10, 256, 1000] {
            assert_eq!(anomaly_score_from_path(average_path_length(m), m), 0.5);
        }
    }

    fn cluster_with_outlier() -> FeatureMatrix {
        let mut rows = Vec::new();
        for i in 0..60 {
            let a = i as f64 * 0.37;
            rows.push(vec![a.sin() * 0.5, a.cos() * 0.5]);
        }
        rows.push(vec![8.0, -8.0]);
        FeatureMatrix::from_unnamed_rows(&rows).unwrap()
    }

    #[test]
    fn far_point_scores_above_cluster() {
        let x = cluster_with_outlier();
        let f = IsolationForest::fit(&x, 100, 256, 17).unwrap();
        let s = f.score(&x).unwrap();
        let out = s[60];
        assert!(s[..60].iter().all(|&v| v < out));
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn splits_strictly_inside_range_and_bounded_height() {
        let x = cluster_with_outlier();
        let f = IsolationForest::fit(&x, 20, 32, 3).unwrap();
        for t in f.trees() {
            assert_eq!(t.height_limit(), 5);
            for node in t.nodes() {
                if let Node::Split { value, .. } = node {
                    assert!(value.is_finite());
                }
            }
        }
        // duplicated query rows agree
        let q = FeatureMatrix::from_unnamed_rows(&[vec![0.1, 0.2], vec![0.1, 0.2]]).unwrap();
        let s = f.score(&q).unwrap();
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn needs_two_rows() {
        let x = FeatureMatrix::from_unnamed_rows(&[vec![1.0]]).unwrap();
        assert!(IsolationForest::fit(&x, 10, 256, 0).is_err());
    }
}
