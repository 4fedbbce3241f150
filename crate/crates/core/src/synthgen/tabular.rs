use nalgebra::DMatrix;
use rand::Rng;

use super::{GeneratorConfig, InjectionKind, InjectionRecord};
use crate::data::{FeatureMatrix, LabelVector, TabularData};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Leading principal axes of a centred sample, rows orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k × d`, row-major.
    pub components: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub k: usize,
}

impl Pca {
    /// Top-`k` axes from a thin SVD of the centred data. Each axis is signed
    /// so its largest-magnitude loading is positive.
    pub fn fit(x: &FeatureMatrix, k: usize) -> Result<Self> {
        let n = x.n_rows();
        let d = x.n_cols();
        if n <= d || d < k {
            return Err(Error::invalid(format!("PCA needs n > d >= {k} (n = {n}, d = {d})")));
        }
        let mut mean = vec![0.0; d];
        for r in x.rows() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centred = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
        let svd = centred.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let top = svd.singular_values[order[0]];
        let mut components = Vec::with_capacity(k * d);
        let mut singular_values = Vec::with_capacity(k);
        for &r in order.iter().take(k) {
            let sv = svd.singular_values[r];
            if !(sv > 1e-10 * top.max(f64::MIN_POSITIVE)) {
                return Err(Error::Singular(format!("training data has rank < {k}")));
            }
            let mut row: Vec<f64> = (0..d).map(|j| vt[(r, j)]).collect();
            let pivot = row.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if pivot < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            components.extend(row);
            singular_values.push(sv);
        }
        Ok(Self {
            mean,
            components,
            singular_values,
            k,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.components[c * d..(c + 1) * d]
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                self.component(c)
                    .iter()
                    .zip(row.iter().zip(&self.mean))
                    .map(|(l, (v, m))| l * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn inverse_transform(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &z) in coords.iter().enumerate() {
            for (o, l) in out.iter_mut().zip(self.component(c)) {
                *o += z * l;
            }
        }
        out
    }
}

/// Points along the two leading principal axes: `per_axis` with the first
/// coordinate uniform on its range and the second zero, then `per_axis` the
/// other way round, mapped back to input space.
pub fn gen_tabular_axes(x_train: &FeatureMatrix, cfg: &GeneratorConfig, seed: u64) -> Result<(FeatureMatrix, Vec<InjectionRecord>)> {
    cfg.validate()?;
    let t = &cfg.tabular;
    let pca = Pca::fit(x_train, 2)?;
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(2 * t.per_axis * pca.dim());
    let mut records = Vec::with_capacity(2 * t.per_axis);
    for axis in 0..2u8 {
        let (lo, hi) = if axis == 0 {
            (t.axis1_low, t.axis1_high)
        } else {
            (t.axis2_low, t.axis2_high)
        };
        for _ in 0..t.per_axis {
            let z = rng.random_range(lo..=hi);
            let coords = if axis == 0 { [z, 0.0] } else { [0.0, z] };
            values.extend(pca.inverse_transform(&coords));
            records.push(InjectionRecord {
                station_id: String::new(),
                start: records.len(),
                duration: 1,
                kind: InjectionKind::TabularAxis,
                sign: None,
                magnitude: Some(z),
                multiplier: None,
                axis: Some(axis),
            });
        }
    }
    let m = FeatureMatrix::new(x_train.column_names().to_vec(), values)?;
    Ok((m, records))
}

/// Appends generated outliers (labelled 1) below the clean rows (labelled 0).
/// Record positions are shifted to the appended row indices.
pub fn contaminate_tabular(
    d_thresh: &FeatureMatrix,
    x_train: &FeatureMatrix,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(TabularData, Vec<InjectionRecord>)> {
    if d_thresh.is_empty() {
        return Err(Error::invalid("threshold split is empty"));
    }
    let n = d_thresh.n_rows();
    if cfg.tabular.per_axis == 0 {
        return Ok((
            TabularData {
                matrix: d_thresh.clone(),
                labels: Some(LabelVector::zeros(n)),
            },
            Vec::new(),
        ));
    }
    let (extra, mut records) = gen_tabular_axes(x_train, cfg, seed)?;
    let extra = extra.select_named(d_thresh.column_names())?;
    let matrix = FeatureMatrix::new(d_thresh.column_names().to_vec(), [d_thresh.values(), extra.values()].concat())?;
    let mut marks = vec![false; n];
    marks.extend(std::iter::repeat_n(true, extra.n_rows()));
    records.iter_mut().for_each(|r| r.start += n);
    Ok((
        TabularData {
            matrix,
            labels: Some(LabelVector::pointwise(marks)),
        },
        records,
    ))
}
