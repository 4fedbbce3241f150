use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metric::{f1_score, near_any, neighborhood_metric_segmented, MetricReport, Segmentation};
use crate::data::{FeatureMatrix, LabelVector};
use crate::ensemble::EnsembleModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Pointwise,
    Neighborhood,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub f1: f64,
    pub metric: MetricKind,
    pub radius: usize,
    /// Ascending in threshold.
    pub curve: Vec<SweepPoint>,
}

/// Midpoints between consecutive distinct scores plus 0 and 1, ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut c = Vec::with_capacity(u.len() + 1);
    c.push(0.0);
    c.extend(u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    c.push(1.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

pub fn apply_threshold(scores: &[f64], t: f64) -> LabelVector {
    LabelVector::pointwise(scores.iter().map(|&s| s >= t).collect())
}

/// Sweeps every candidate, predicting `score >= T`, and keeps the best F1
/// (smallest `T` on ties). Points enter the prediction set in descending
/// score order, so each candidate costs only the newly admitted points.
pub fn select_threshold(
    scores: &[f64],
    y_art: &LabelVector,
    radius: usize,
    metric: MetricKind,
    seg: &Segmentation,
) -> Result<ThresholdResult> {
    let n = scores.len();
    if y_art.len() != n || seg.len() != n {
        return Err(Error::invalid(format!(
            "{n} scores, {} labels, {} segmented instances",
            y_art.len(),
            seg.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::invalid(format!("scores must lie in [0, 1], found {s}")));
    }
    let total_truth = y_art.positives();
    if total_truth == 0 || total_truth == n {
        return Err(Error::invalid("threshold selection needs both classes in the artificial labels"));
    }
    let r = match metric {
        MetricKind::Pointwise => 0,
        MetricKind::Neighborhood => radius,
    };
    let truth = y_art.marks();
    let truth_near = near_any(truth, seg, r);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let candidates = candidate_thresholds(scores);
    let mut covered = vec![false; n];
    let mut matched_truth = 0usize;
    let mut matched_pred = 0usize;
    let mut next = 0usize;
    let mut curve = vec![
        SweepPoint {
            threshold: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            n_predicted: 0,
        };
        candidates.len()
    ];
    for (slot, &t) in candidates.iter().enumerate().rev() {
        while next < n && scores[order[next]] >= t {
            let j = order[next];
            next += 1;
            if truth_near[j] {
                matched_pred += 1;
            }
            for i in seg.window(j, r) {
                if truth[i] && !covered[i] {
                    covered[i] = true;
                    matched_truth += 1;
                }
            }
        }
        let recall = matched_truth as f64 / total_truth as f64;
        let precision = if next == 0 { 0.0 } else { matched_pred as f64 / next as f64 };
        curve[slot] = SweepPoint {
            threshold: t,
            precision,
            recall,
            f1: f1_score(precision, recall),
            n_predicted: next,
        };
    }
    let best = curve
        .iter()
        .fold(None::<&SweepPoint>, |acc, p| match acc {
            Some(b) if b.f1 >= p.f1 => Some(b),
            _ => Some(p),
        })
        .expect("at least two candidates");
    Ok(ThresholdResult {
        threshold: best.threshold,
        f1: best.f1,
        metric,
        radius: r,
        curve,
    })
}

pub fn write_sweep_csv<W: Write>(writer: W, curve: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "precision", "recall", "f1"])?;
    for p in curve {
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.f1.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep curve>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: f64,
    pub metrics: MetricReport,
    pub provenance: Provenance,
}

/// Member scores, consensus, thresholding at `threshold` and the vicinity
/// metric against `truth`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pipeline(
    ensemble: &EnsembleModel,
    x: &FeatureMatrix,
    target: Option<&[f64]>,
    truth: &LabelVector,
    threshold: f64,
    radius: usize,
    seg: &Segmentation,
    provenance: Provenance,
) -> Result<EvaluationReport> {
    let scores = ensemble.score(x, target)?;
    let pred = apply_threshold(&scores, threshold);
    let metrics = neighborhood_metric_segmented(&pred, truth, radius, seg)?;
    Ok(EvaluationReport {
        threshold,
        metrics,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let y = LabelVector::from_ints(&[0, 0, 1, 1]).unwrap();
        let r = select_threshold(&scores, &y, 0, MetricKind::Pointwise, &Segmentation::contiguous(4)).unwrap();
        assert!(r.threshold > 0.2 && r.threshold < 0.8);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.threshold, 0.5);
    }

    #[test]
    fn candidates_include_sentinels() {
        assert_eq!(candidate_thresholds(&[0.5, 0.5, 0.7]), vec![0.0, 0.6, 1.0]);
        assert_eq!(candidate_thresholds(&[0.0, 1.0]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn apply_examples() {
        assert_eq!(apply_threshold(&[0.3, 0.7], 0.5).marks(), &[false, true]);
        assert!(apply_threshold(&[0.3, 0.7], 0.0).marks().iter().all(|&m| m));
        assert!(apply_threshold(&[0.3, 0.7], 0.7 + 1e-12).marks().iter().all(|&m| !m));
    }

    #[test]
    fn ties_resolve_to_smallest_threshold() {
        // with radius 1 every prediction sits next to the single truth point
        let scores = [0.0, 0.9, 0.8];
        let y = LabelVector::from_ints(&[0, 1, 0]).unwrap();
        let r = select_threshold(&scores, &y, 1, MetricKind::Neighborhood, &Segmentation::contiguous(3)).unwrap();
        let perfect: Vec<f64> = r.curve.iter().filter(|p| p.f1 == 1.0).map(|p| p.threshold).collect();
        assert_eq!(perfect.len(), 3);
        assert!((perfect[2] - 0.85).abs() < 1e-15);
        assert_eq!(r.threshold, 0.0);
    }

    #[test]
    fn rejects_single_class_and_out_of_range() {
        let seg = Segmentation::contiguous(2);
        let y = LabelVector::from_ints(&[0, 0]).unwrap();
        assert!(select_threshold(&[0.1, 0.2], &y, 0, MetricKind::Pointwise, &seg).is_err());
        let y = LabelVector::from_ints(&[0, 1]).unwrap();
        assert!(select_threshold(&[0.1, 1.2], &y, 0, MetricKind::Pointwise, &seg).is_err());
    }

    #[test]
    fn sweep_csv_header() {
        let mut buf = Vec::new();
        write_sweep_csv(
            &mut buf,
            &[SweepPoint {
                threshold: 0.5,
                precision: 1.0,
                recall: 0.25,
                f1: 0.4,
                n_predicted: 1,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "threshold,precision,recall,f1\n0.5,1,0.25,0.4\n");
    }
}
