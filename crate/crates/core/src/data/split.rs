use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub threshold_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    ByStation,
    ByRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub threshold: Vec<T>,
    pub test: Vec<T>,
}

impl SplitPlan {
    pub fn new(train: f64, threshold: f64, test: f64, seed: u64) -> Result<Self> {
        let p = Self {
            train_fraction: train,
            threshold_fraction: threshold,
            test_fraction: test,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Tabular protocol: a quarter held out for test, the rest split two to
    /// one between training and threshold selection.
    pub fn tabular(seed: u64) -> Self {
        Self {
            train_fraction: 0.5,
            threshold_fraction: 0.25,
            test_fraction: 0.25,
            seed,
        }
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.threshold_fraction, self.test_fraction]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("split fractions {f:?} outside [0, 1]")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Unit counts by largest remainder; ties go to the earlier split.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let f = self.fractions();
        let exact: Vec<f64> = f.iter().map(|v| v * n as f64).collect();
        let mut counts: [usize; 3] = [0; 3];
        for k in 0..3 {
            // absorb representation error such as 0.7 * 50 = 35.000000000000004
            counts[k] = (exact[k] + 1e-9).floor() as usize;
        }
        let mut left = n.saturating_sub(counts.iter().sum());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if f[k] > 0.0 {
                counts[k] += 1;
                left -= 1;
            }
        }
        const NAMES: [&str; 3] = ["train", "threshold", "test"];
        for k in 0..3 {
            if f[k] > 0.0 && counts[k] == 0 {
                return Err(Error::Infeasible(format!(
                    "{} split has fraction {} but receives none of {n} units",
                    NAMES[k], f[k]
                )));
            }
        }
        Ok(counts)
    }
}

/// Shuffles units with the plan seed and cuts them by [`SplitPlan::counts`].
pub fn make_splits<T: Clone>(units: &[T], plan: &SplitPlan) -> Result<Splits<T>> {
    let [a, b, _] = plan.counts(units.len())?;
    let mut idx: Vec<usize> = (0..units.len()).collect();
    idx.shuffle(&mut rng_from_seed(plan.seed));
    let pick = |r: &[usize]| {
        let mut r = r.to_vec();
        r.sort_unstable();
        r.into_iter().map(|i| units[i].clone()).collect::<Vec<_>>()
    };
    Ok(Splits {
        train: pick(&idx[..a]),
        threshold: pick(&idx[a..a + b]),
        test: pick(&idx[a + b..]),
    })
}

/// Whole-station partition; stations are ordered by id before shuffling so
/// the result does not depend on load order.
pub fn split_stations(
    frames: &[TimeSeriesFrame],
    plan: &SplitPlan,
) -> Result<Splits<TimeSeriesFrame>> {
    let mut sorted: Vec<TimeSeriesFrame> = frames.to_vec();
    sorted.sort_by(|a, b| a.station_id().cmp(b.station_id()));
    if sorted.windows(2).any(|w| w[0].station_id() == w[1].station_id()) {
        return Err(Error::invalid("station ids must be unique for a station split"));
    }
    make_splits(&sorted, plan)
}

/// Row-index partition; indices within each split stay in ascending order.
pub fn split_rows(n: usize, plan: &SplitPlan) -> Result<Splits<usize>> {
    let idx: Vec<usize> = (0..n).collect();
    make_splits(&idx, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::frame::Channel;

    fn frames(n: usize) -> Vec<TimeSeriesFrame> {
        (0..n)
            .map(|i| {
                TimeSeriesFrame::new(
                    format!("st{i:02}"),
                    vec![0, 1800],
                    vec![Channel {
                        name: "road_temp".into(),
                        values: vec![0.0, 0.0],
                    }],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn fifty_stations_thirty_five_fifteen() {
        let plan = SplitPlan::new(0.7, 0.3, 0.0, 3).unwrap();
        let s = split_stations(&frames(50), &plan).unwrap();
        assert_eq!(s.train.len(), 35);
        assert_eq!(s.threshold.len(), 15);
        assert!(s.test.is_empty());
    }

    #[test]
    fn row_split_is_deterministic() {
        let plan = SplitPlan::new(0.5, 0.25, 0.25, 11).unwrap();
        let a = split_rows(100, &plan).unwrap();
        let b = split_rows(100, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.threshold.len(), a.test.len()), (50, 25, 25));
        let mut all: Vec<usize> = a.train.iter().chain(&a.threshold).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn infeasible_three_way_split() {
        let plan = SplitPlan::new(0.4, 0.3, 0.3, 1).unwrap();
        assert!(matches!(
            split_stations(&frames(2), &plan),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(SplitPlan::new(0.5, 0.5, 0.5, 0).is_err());
        assert!(SplitPlan::new(1.2, -0.2, 0.0, 0).is_err());
    }

    #[test]
    fn tabular_protocol_counts() {
        assert_eq!(SplitPlan::tabular(0).counts(58000).unwrap(), [29000, 14500, 14500]);
    }
}
