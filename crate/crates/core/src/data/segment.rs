use std::ops::Range;

use super::frame::{Channel, TimeSeriesFrame};
use crate::{Error, Result};

/// Resampling period of the uniform grid, seconds.
pub const GRID_SECONDS: i64 = 1800;
pub const DEFAULT_MAX_GAP_HOURS: f64 = 2.0;
pub const DEFAULT_MIN_DURATION_HOURS: f64 = 12.0;

/// Contiguous piece of a station record with no gap above the split limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Tick range in the parent frame this segment was cut from.
    pub source_range: Range<usize>,
    pub frame: TimeSeriesFrame,
}

impl Segment {
    pub fn station_id(&self) -> &str {
        self.frame.station_id()
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    /// Time between first and last tick.
    pub fn duration_hours(&self) -> f64 {
        let ts = self.frame.timestamps();
        match (ts.first(), ts.last()) {
            (Some(a), Some(b)) => (b - a) as f64 / 3600.0,
            _ => 0.0,
        }
    }

    pub fn max_gap_hours(&self) -> f64 {
        self.frame
            .timestamps()
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / 3600.0)
            .fold(0.0, f64::max)
    }
}

/// Cuts `frame` wherever consecutive ticks are more than `max_gap_hours`
/// apart and drops pieces spanning less than `min_duration_hours`.
pub fn split_on_gaps(
    frame: &TimeSeriesFrame,
    max_gap_hours: f64,
    min_duration_hours: f64,
) -> Vec<Segment> {
    let ts = frame.timestamps();
    if ts.is_empty() {
        return Vec::new();
    }
    let max_gap = max_gap_hours * 3600.0;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=ts.len() {
        let cut = i == ts.len() || (ts[i] - ts[i - 1]) as f64 > max_gap;
        if cut {
            let span = (ts[i - 1] - ts[start]) as f64 / 3600.0;
            if span >= min_duration_hours {
                out.push(Segment {
                    source_range: start..i,
                    frame: frame.slice(start..i),
                });
            }
            start = i;
        }
    }
    out
}

/// Resamples a segment onto a 30-minute grid anchored at its first tick.
/// Grid points run up to the last tick; a trailing remainder shorter than one
/// period is dropped. Each channel is interpolated linearly between the
/// bracketing ticks; a grid point inherits the label of its bracketing ticks
/// when it coincides with one, otherwise the union of both.
pub fn interpolate_linear(segment: &Segment) -> Result<Segment> {
    let f = &segment.frame;
    let ts = f.timestamps();
    if ts.len() < 2 {
        return Err(Error::invalid(format!(
            "station {}: cannot interpolate a segment of {} ticks",
            f.station_id(),
            ts.len()
        )));
    }
    let t0 = ts[0];
    let n_grid = ((ts[ts.len() - 1] - t0) / GRID_SECONDS + 1) as usize;
    let mut grid = Vec::with_capacity(n_grid);
    // (left index, weight on right neighbour)
    let mut brackets = Vec::with_capacity(n_grid);
    let mut left = 0;
    for k in 0..n_grid {
        let t = t0 + k as i64 * GRID_SECONDS;
        while left + 1 < ts.len() && ts[left + 1] <= t {
            left += 1;
        }
        let w = if ts[left] == t || left + 1 == ts.len() {
            0.0
        } else {
            (t - ts[left]) as f64 / (ts[left + 1] - ts[left]) as f64
        };
        grid.push(t);
        brackets.push((left, w));
    }
    let channels = f
        .channels()
        .iter()
        .map(|c| Channel {
            name: c.name.clone(),
            values: brackets
                .iter()
                .map(|&(l, w)| {
                    if w == 0.0 {
                        c.values[l]
                    } else {
                        c.values[l] + w * (c.values[l + 1] - c.values[l])
                    }
                })
                .collect(),
        })
        .collect();
    let mut frame = TimeSeriesFrame::new(f.station_id(), grid, channels)?.with_meta(f.meta());
    if let Some(labels) = f.labels() {
        let l = brackets
            .iter()
            .map(|&(i, w)| {
                if w == 0.0 {
                    labels[i]
                } else {
                    labels[i] || labels[i + 1]
                }
            })
            .collect();
        frame = frame.with_labels(l)?;
    }
    Ok(Segment {
        source_range: segment.source_range.clone(),
        frame,
    })
}

/// Gap split followed by interpolation, the standard preparation for one
/// station record.
pub fn prepare_frame(frame: &TimeSeriesFrame) -> Result<Vec<Segment>> {
    split_on_gaps(frame, DEFAULT_MAX_GAP_HOURS, DEFAULT_MIN_DURATION_HOURS)
        .iter()
        .map(interpolate_linear)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(hours: &[f64], values: &[f64]) -> TimeSeriesFrame {
        let ts = hours.iter().map(|h| (h * 3600.0).round() as i64).collect();
        TimeSeriesFrame::new(
            "s",
            ts,
            vec![Channel {
                name: "road_temp".into(),
                values: values.to_vec(),
            }],
        )
        .unwrap()
    }

    fn half_hours(from: f64, to: f64) -> Vec<f64> {
        let n = ((to - from) * 2.0).round() as usize;
        (0..=n).map(|i| from + i as f64 * 0.5).collect()
    }

    #[test]
    fn three_hour_hole_splits_in_two() {
        let mut hours = half_hours(0.0, 24.0);
        hours.extend(half_hours(27.0, 51.0));
        let vals = vec![0.0; hours.len()];
        let segs = split_on_gaps(&frame(&hours, &vals), 2.0, 12.0);
        assert_eq!(segs.len(), 2);
        for s in &segs {
            assert_eq!(s.duration_hours(), 24.0);
            assert!(s.max_gap_hours() <= 2.0);
        }
        assert_eq!(segs[0].source_range, 0..49);
        assert_eq!(segs[1].source_range, 49..98);
    }

    #[test]
    fn continuous_and_short_series() {
        let h = half_hours(0.0, 13.0);
        assert_eq!(split_on_gaps(&frame(&h, &vec![1.0; h.len()]), 2.0, 12.0).len(), 1);
        let h = half_hours(0.0, 10.0);
        assert!(split_on_gaps(&frame(&h, &vec![1.0; h.len()]), 2.0, 12.0).is_empty());
    }

    #[test]
    fn gap_of_exactly_two_hours_is_kept() {
        let mut h = half_hours(0.0, 8.0);
        h.extend(half_hours(10.0, 20.0));
        let segs = split_on_gaps(&frame(&h, &vec![1.0; h.len()]), 2.0, 12.0);
        assert_eq!(segs.len(), 1);
    }

    fn seg(f: TimeSeriesFrame) -> Segment {
        Segment {
            source_range: 0..f.len(),
            frame: f,
        }
    }

    #[test]
    fn midpoint_interpolation() {
        let s = interpolate_linear(&seg(frame(&[0.0, 1.0], &[0.0, 2.0]))).unwrap();
        assert_eq!(s.frame.channel("road_temp").unwrap(), &[0.0, 1.0, 2.0]);
        let s = interpolate_linear(&seg(frame(&[0.0, 2.0], &[5.0, 9.0]))).unwrap();
        assert_eq!(
            s.frame.channel("road_temp").unwrap(),
            &[5.0, 6.0, 7.0, 8.0, 9.0]
        );
    }

    #[test]
    fn uniform_grid_is_identity() {
        let h = half_hours(0.0, 5.0);
        let v: Vec<f64> = (0..h.len()).map(|i| (i as f64).sin()).collect();
        let s = interpolate_linear(&seg(frame(&h, &v))).unwrap();
        assert_eq!(s.frame.channel("road_temp").unwrap(), v.as_slice());
        assert_eq!(s.frame.timestamps(), seg(frame(&h, &v)).frame.timestamps());
    }

    #[test]
    fn too_short_to_interpolate() {
        assert!(interpolate_linear(&seg(frame(&[0.0], &[1.0]))).is_err());
    }

    #[test]
    fn labels_follow_brackets() {
        let f = frame(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0])
            .with_labels(vec![false, true, false])
            .unwrap();
        let s = interpolate_linear(&seg(f)).unwrap();
        assert_eq!(s.frame.labels().unwrap(), &[false, true, true, true, false]);
    }
}
