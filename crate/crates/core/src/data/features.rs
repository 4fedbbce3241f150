use std::f64::consts::TAU;

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::frame::ROAD_TEMP;
use super::matrix::{FeatureMatrix, LabelVector, RowKey};
use super::segment::Segment;
use crate::{Error, Result};

/// Number of target-lag differences appended to every row.
pub const N_LAG_DIFFS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub target_channel: String,
    pub lags: usize,
    /// Forecast distance in grid ticks.
    pub horizon: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            target_channel: ROAD_TEMP.into(),
            lags: 6,
            horizon: 1,
        }
    }
}

/// Rows built from one segment. Row `r` forecasts tick `target_ticks[r]`.
#[derive(Debug, Clone)]
pub struct SegmentFeatures {
    pub matrix: FeatureMatrix,
    pub target: Vec<f64>,
    pub target_ticks: Vec<usize>,
}

pub fn feature_names(segment: &Segment, spec: &FeatureSpec) -> Vec<String> {
    let mut names = Vec::new();
    for c in segment.frame.channel_names() {
        for l in 1..=spec.lags {
            names.push(format!("{c}_lag{l}"));
        }
    }
    for l in 1..=N_LAG_DIFFS {
        names.push(format!("{}_diff{l}", spec.target_channel));
    }
    for n in ["hour", "doy", "month"] {
        names.push(format!("{n}_sin"));
        names.push(format!("{n}_cos"));
    }
    let meta = segment.frame.meta();
    if meta.latitude.is_some() {
        names.push("latitude".into());
    }
    if meta.longitude.is_some() {
        names.push("longitude".into());
    }
    names
}

/// `(sin, cos)` pairs for hour of day, day of year and month.
pub fn cyclic_time(ts: i64) -> [f64; 6] {
    let dt = DateTime::<Utc>::from_timestamp(ts, 0).unwrap_or_default();
    let hour = f64::from(dt.hour()) + f64::from(dt.minute()) / 60.0 + f64::from(dt.second()) / 3600.0;
    let year = dt.year();
    let days_in_year = if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366.0
    } else {
        365.0
    };
    let doy = f64::from(dt.ordinal0()) / days_in_year;
    let month = f64::from(dt.month0()) / 12.0;
    let h = TAU * hour / 24.0;
    let d = TAU * doy;
    let m = TAU * month;
    [h.sin(), h.cos(), d.sin(), d.cos(), m.sin(), m.cos()]
}

/// Lagged design matrix for forecasting `spec.target_channel` `horizon`
/// ticks ahead. Lag 1 is the latest observed tick.
pub fn build_features(segment: &Segment, spec: &FeatureSpec) -> Result<SegmentFeatures> {
    if spec.lags < N_LAG_DIFFS + 1 {
        return Err(Error::invalid(format!(
            "need at least {} lags, got {}",
            N_LAG_DIFFS + 1,
            spec.lags
        )));
    }
    if spec.horizon == 0 {
        return Err(Error::invalid("horizon must be at least one tick"));
    }
    let f = &segment.frame;
    let target = f.channel(&spec.target_channel).ok_or_else(|| {
        Error::Schema(format!("target channel `{}` not in frame", spec.target_channel))
    })?;
    let n = f.len();
    if n <= spec.lags + spec.horizon {
        return Err(Error::invalid(format!(
            "station {}: segment of {n} ticks too short for {} lags and horizon {}",
            f.station_id(),
            spec.lags,
            spec.horizon
        )));
    }
    let names = feature_names(segment, spec);
    let meta = f.meta();
    let first_anchor = spec.lags - 1;
    let last_anchor = n - 1 - spec.horizon;
    let rows = last_anchor - first_anchor + 1;
    let mut values = Vec::with_capacity(rows * names.len());
    let mut y = Vec::with_capacity(rows);
    let mut ticks = Vec::with_capacity(rows);
    let mut keys = Vec::with_capacity(rows);
    for a in first_anchor..=last_anchor {
        for c in f.channels() {
            for l in 1..=spec.lags {
                values.push(c.values[a + 1 - l]);
            }
        }
        for l in 1..=N_LAG_DIFFS {
            values.push(target[a + 1 - l] - target[a - l]);
        }
        let t = a + spec.horizon;
        values.extend_from_slice(&cyclic_time(f.timestamps()[t]));
        if let Some(lat) = meta.latitude {
            values.push(lat);
        }
        if let Some(lon) = meta.longitude {
            values.push(lon);
        }
        y.push(target[t]);
        ticks.push(t);
        keys.push(RowKey {
            station_id: f.station_id().to_owned(),
            timestamp: f.timestamps()[t],
        });
    }
    let matrix = FeatureMatrix::new(names, values)?.with_keys(keys)?;
    Ok(SegmentFeatures {
        matrix,
        target: y,
        target_ticks: ticks,
    })
}

/// Rows from many segments stacked in order, with the row offsets where each
/// segment begins so vicinity matching never crosses a break.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub matrix: FeatureMatrix,
    pub target: Vec<f64>,
    pub labels: Option<LabelVector>,
    pub breaks: Vec<usize>,
}

impl FeatureSet {
    pub fn from_segments(segments: &[Segment], spec: &FeatureSpec) -> Result<Self> {
        let mut matrix: Option<FeatureMatrix> = None;
        let mut target = Vec::new();
        let mut labels: Option<Vec<bool>> = None;
        let mut breaks = Vec::new();
        for s in segments {
            let sf = build_features(s, spec)?;
            breaks.push(target.len());
            if let Some(l) = s.frame.labels() {
                labels
                    .get_or_insert_with(|| vec![false; target.len()])
                    .extend(sf.target_ticks.iter().map(|&t| l[t]));
            } else if let Some(ls) = labels.as_mut() {
                ls.extend(std::iter::repeat_n(false, sf.target.len()));
            }
            target.extend_from_slice(&sf.target);
            matrix = Some(match matrix {
                None => sf.matrix,
                Some(m) => m.vstack(&sf.matrix)?,
            });
        }
        let matrix = matrix.ok_or_else(|| Error::invalid("no segments to build features from"))?;
        Ok(Self {
            matrix,
            target,
            labels: labels.map(LabelVector::pointwise),
            breaks,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::frame::{Channel, TimeSeriesFrame};

    fn segment(values: Vec<f64>, start: i64) -> Segment {
        let ts = (0..values.len() as i64).map(|i| start + i * 1800).collect();
        let f = TimeSeriesFrame::new(
            "s",
            ts,
            vec![
                Channel {
                    name: "air_temp".into(),
                    values: values.iter().map(|v| v * 0.5).collect(),
                },
                Channel {
                    name: "road_temp".into(),
                    values,
                },
            ],
        )
        .unwrap();
        Segment {
            source_range: 0..f.len(),
            frame: f,
        }
    }

    #[test]
    fn constant_series_has_zero_diffs() {
        let sf = build_features(&segment(vec![4.0; 30], 0), &FeatureSpec::default()).unwrap();
        for l in 1..=N_LAG_DIFFS {
            let j = sf.matrix.column_index(&format!("road_temp_diff{l}")).unwrap();
            assert!(sf.matrix.column(j).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hour_encoding_at_six() {
        let enc = cyclic_time(6 * 3600);
        assert_eq!(enc[0], 1.0);
        assert!(enc[1].abs() < 1e-15);
    }

    #[test]
    fn target_is_next_value() {
        let v: Vec<f64> = (1..=40).map(f64::from).collect();
        let sf = build_features(&segment(v, 0), &FeatureSpec::default()).unwrap();
        let lag1 = sf.matrix.column_index("road_temp_lag1").unwrap();
        for r in 0..sf.matrix.n_rows() {
            assert_eq!(sf.target[r], sf.matrix.get(r, lag1) + 1.0);
        }
        assert_eq!(sf.matrix.n_rows(), 40 - 6 - 1 + 1);
        assert!(sf
            .matrix
            .column_names()
            .iter()
            .all(|n| n != "road_temp" && !n.ends_with("target")));
    }

    #[test]
    fn short_segment_errors() {
        assert!(build_features(&segment(vec![1.0; 7], 0), &FeatureSpec::default()).is_err());
        let spec = FeatureSpec {
            lags: 3,
            ..FeatureSpec::default()
        };
        assert!(build_features(&segment(vec![1.0; 30], 0), &spec).is_err());
    }

    #[test]
    fn feature_set_tracks_breaks() {
        let segs = vec![segment(vec![1.0; 20], 0), segment(vec![2.0; 25], 100_000)];
        let fs = FeatureSet::from_segments(&segs, &FeatureSpec::default()).unwrap();
        assert_eq!(fs.breaks, vec![0, 14]);
        assert_eq!(fs.n_rows(), 14 + 19);
    }
}
