use serde::{Deserialize, Serialize};

use crate::data::LabelVector;
use crate::{Error, Result};

/// Contiguous blocks of instances; vicinity windows never leave a block.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    start: Vec<usize>,
    end: Vec<usize>,
}

impl Segmentation {
    /// `breaks` are the indices where a block starts; 0 is implied.
    pub fn new(n: usize, breaks: &[usize]) -> Result<Self> {
        let mut b: Vec<usize> = breaks.iter().copied().filter(|&x| x > 0).collect();
        b.sort_unstable();
        b.dedup();
        if b.last().is_some_and(|&x| x >= n) {
            return Err(Error::invalid(format!("segment break beyond {n} instances")));
        }
        let mut start = vec![0; n];
        let mut end = vec![n; n];
        let mut bounds = vec![0];
        bounds.extend(&b);
        bounds.push(n);
        for w in bounds.windows(2) {
            for i in w[0]..w[1] {
                start[i] = w[0];
                end[i] = w[1];
            }
        }
        Ok(Self { start, end })
    }

    pub fn contiguous(n: usize) -> Self {
        Self {
            start: vec![0; n],
            end: vec![n; n],
        }
    }

    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    /// Half-open window `[i − r, i + r]` clipped to `i`'s block.
    pub fn window(&self, i: usize, radius: usize) -> std::ops::Range<usize> {
        let lo = i.saturating_sub(radius).max(self.start[i]);
        let hi = (i + radius + 1).min(self.end[i]);
        lo..hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Truth positives with a prediction in their vicinity.
    pub matched_truth: usize,
    /// Predicted positives with a truth positive in their vicinity.
    pub matched_predicted: usize,
    pub total_truth: usize,
    pub total_predicted: usize,
    pub radius: usize,
    /// Set when either denominator is zero.
    pub degenerate: bool,
}

impl MetricReport {
    pub fn from_counts(
        matched_truth: usize,
        matched_predicted: usize,
        total_truth: usize,
        total_predicted: usize,
        radius: usize,
    ) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let recall = ratio(matched_truth, total_truth);
        let precision = ratio(matched_predicted, total_predicted);
        let f1 = f1_score(precision, recall);
        Self {
            recall,
            precision,
            f1,
            matched_truth,
            matched_predicted,
            total_truth,
            total_predicted,
            radius,
            degenerate: total_truth == 0 || total_predicted == 0,
        }
    }
}

pub(crate) fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Indicator that some `other` positive lies within `radius` of each index.
pub(crate) fn near_any(other: &[bool], seg: &Segmentation, radius: usize) -> Vec<bool> {
    let n = other.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &v) in other.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(v);
    }
    (0..n)
        .map(|i| {
            let w = seg.window(i, radius);
            prefix[w.end] > prefix[w.start]
        })
        .collect()
}

pub fn neighborhood_metric_segmented(
    pred: &LabelVector,
    truth: &LabelVector,
    radius: usize,
    seg: &Segmentation,
) -> Result<MetricReport> {
    if pred.len() != truth.len() || seg.len() != pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} truth labels, {} segmented instances",
            pred.len(),
            truth.len(),
            seg.len()
        )));
    }
    let p = pred.marks();
    let t = truth.marks();
    let pred_near = near_any(p, seg, radius);
    let truth_near = near_any(t, seg, radius);
    let matched_truth = t.iter().zip(&pred_near).filter(|(a, b)| **a && **b).count();
    let matched_predicted = p.iter().zip(&truth_near).filter(|(a, b)| **a && **b).count();
    Ok(MetricReport::from_counts(
        matched_truth,
        matched_predicted,
        truth.positives(),
        pred.positives(),
        radius,
    ))
}

/// Vicinity precision/recall over one contiguous block.
pub fn neighborhood_metric(pred: &LabelVector, truth: &LabelVector, radius: usize) -> Result<MetricReport> {
    neighborhood_metric_segmented(pred, truth, radius, &Segmentation::contiguous(pred.len()))
}
