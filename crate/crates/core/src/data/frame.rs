use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const AIR_TEMP: &str = "air_temp";
pub const ROAD_TEMP: &str = "road_temp";
pub const SUBSURFACE_TEMP: &str = "subsurface_temp";
pub const PRESSURE: &str = "pressure";
pub const HUMIDITY: &str = "humidity";

/// Channel layout of the road weather corpus.
pub const RWIS_CHANNELS: [&str; 5] = [AIR_TEMP, ROAD_TEMP, SUBSURFACE_TEMP, PRESSURE, HUMIDITY];

const LABEL_COLUMN: &str = "label";
const LATITUDE_COLUMN: &str = "latitude";
const LONGITUDE_COLUMN: &str = "longitude";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

/// Multichannel record of one station on strictly increasing UTC seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    station_id: String,
    timestamps: Vec<i64>,
    channels: Vec<Channel>,
    labels: Option<Vec<bool>>,
    meta: StationMeta,
}

impl TimeSeriesFrame {
    pub fn new(
        station_id: impl Into<String>,
        timestamps: Vec<i64>,
        channels: Vec<Channel>,
    ) -> Result<Self> {
        let f = Self {
            station_id: station_id.into(),
            timestamps,
            channels,
            labels: None,
            meta: StationMeta::default(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} ticks",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_meta(mut self, meta: StationMeta) -> Self {
        self.meta = meta;
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(w) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "station {}: timestamps not strictly increasing at tick {}",
                self.station_id,
                w + 1
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.channels {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate channel `{}`", c.name)));
            }
            if c.values.len() != self.timestamps.len() {
                return Err(Error::invalid(format!(
                    "station {}: channel `{}` has {} values for {} ticks",
                    self.station_id,
                    c.name,
                    c.values.len(),
                    self.timestamps.len()
                )));
            }
        }
        Ok(())
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn channel_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.channels
            .iter_mut()
            .find(|c| c.name == name)
            .map(|c| &mut c.values)
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn meta(&self) -> StationMeta {
        self.meta
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Contiguous sub-frame over `range` of tick indices.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            station_id: self.station_id.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            channels: self
                .channels
                .iter()
                .map(|c| Channel {
                    name: c.name.clone(),
                    values: c.values[range.clone()].to_vec(),
                })
                .collect(),
            labels: self.labels.as_ref().map(|l| l[range.clone()].to_vec()),
            meta: self.meta,
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| ts.to_string())
}

pub fn load_timeseries_csv(path: impl AsRef<Path>, schema: &[&str]) -> Result<Vec<TimeSeriesFrame>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_timeseries_csv(file, schema)
}

struct StationRows {
    rows: Vec<(i64, u64, Vec<f64>, Option<bool>)>,
    meta: StationMeta,
    meta_line: u64,
}

/// Parses `station_id,timestamp,<channels...>` plus the optional `label`,
/// `latitude` and `longitude` columns. One frame per station, in order of
/// first appearance, with ticks sorted by time.
pub fn read_timeseries_csv<R: Read>(reader: R, schema: &[&str]) -> Result<Vec<TimeSeriesFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let station_col =
        col("station_id").ok_or_else(|| Error::Schema("missing `station_id` column".into()))?;
    let ts_col =
        col("timestamp").ok_or_else(|| Error::Schema("missing `timestamp` column".into()))?;
    for h in &header {
        let known = h == "station_id"
            || h == "timestamp"
            || h == LABEL_COLUMN
            || h == LATITUDE_COLUMN
            || h == LONGITUDE_COLUMN
            || schema.contains(&h.as_str());
        if !known {
            return Err(Error::Schema(format!("unknown channel `{h}`")));
        }
    }
    let channel_cols = schema
        .iter()
        .map(|c| col(c).ok_or_else(|| Error::Schema(format!("missing channel `{c}`"))))
        .collect::<Result<Vec<_>>>()?;
    let label_col = col(LABEL_COLUMN);
    let lat_col = col(LATITUDE_COLUMN);
    let lon_col = col(LONGITUDE_COLUMN);

    let mut order: Vec<String> = Vec::new();
    let mut by_station: HashMap<String, StationRows> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let raw = field(c);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column `{}`: `{raw}` is not a finite number", header[c]),
                })
        };
        let station = field(station_col).to_owned();
        if station.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty station_id".into(),
            });
        }
        let ts = parse_timestamp(field(ts_col)).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{}`", field(ts_col)),
        })?;
        let values = channel_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        let label = match label_col {
            Some(c) => Some(match field(c) {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("label `{other}` is not 0 or 1"),
                    })
                }
            }),
            None => None,
        };
        let meta = StationMeta {
            latitude: lat_col.map(number).transpose()?,
            longitude: lon_col.map(number).transpose()?,
        };
        let entry = by_station.entry(station.clone()).or_insert_with(|| {
            order.push(station.clone());
            StationRows {
                rows: Vec::new(),
                meta,
                meta_line: line,
            }
        });
        if entry.meta != meta {
            return Err(Error::Parse {
                line,
                message: format!(
                    "station {station}: coordinates differ from line {}",
                    entry.meta_line
                ),
            });
        }
        entry.rows.push((ts, line, values, label));
    }

    let mut frames = Vec::with_capacity(order.len());
    for station in order {
        let mut st = by_station.remove(&station).expect("station recorded");
        st.rows.sort_by_key(|r| (r.0, r.1));
        if let Some(w) = st.rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                line: w[1].1,
                message: format!(
                    "duplicate timestamp {} for station {station} (first seen on line {})",
                    format_timestamp(w[0].0),
                    w[0].1
                ),
            });
        }
        let timestamps = st.rows.iter().map(|r| r.0).collect();
        let channels = schema
            .iter()
            .enumerate()
            .map(|(k, name)| Channel {
                name: (*name).to_owned(),
                values: st.rows.iter().map(|r| r.2[k]).collect(),
            })
            .collect();
        let mut frame = TimeSeriesFrame::new(station, timestamps, channels)?.with_meta(st.meta);
        if label_col.is_some() {
            let labels = st.rows.iter().map(|r| r.3.unwrap_or(false)).collect();
            frame = frame.with_labels(labels)?;
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes frames in the layout read by [`read_timeseries_csv`]. All frames
/// must share one channel layout.
pub fn write_timeseries_csv<W: Write>(writer: W, frames: &[TimeSeriesFrame]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let Some(first) = frames.first() else {
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        return Ok(());
    };
    let names = first.channel_names();
    let with_labels = frames.iter().any(|f| f.labels.is_some());
    let with_lat = frames.iter().any(|f| f.meta.latitude.is_some());
    let with_lon = frames.iter().any(|f| f.meta.longitude.is_some());
    let mut header = vec!["station_id", "timestamp"];
    header.extend(names.iter().copied());
    if with_labels {
        header.push(LABEL_COLUMN);
    }
    if with_lat {
        header.push(LATITUDE_COLUMN);
    }
    if with_lon {
        header.push(LONGITUDE_COLUMN);
    }
    wtr.write_record(&header)?;
    for f in frames {
        if f.channel_names() != names {
            return Err(Error::Schema(format!(
                "station {} has a different channel layout",
                f.station_id
            )));
        }
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for t in 0..f.len() {
            rec.clear();
            rec.push(f.station_id.clone());
            rec.push(format_timestamp(f.timestamps[t]));
            rec.extend(f.channels.iter().map(|c| c.values[t].to_string()));
            if with_labels {
                let l = f.labels.as_ref().is_some_and(|l| l[t]);
                rec.push(if l { "1" } else { "0" }.into());
            }
            if with_lat {
                rec.push(f.meta.latitude.map(|v| v.to_string()).unwrap_or_default());
            }
            if with_lon {
                rec.push(f.meta.longitude.map(|v| v.to_string()).unwrap_or_default());
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Groups frames by station id, sorted.
pub fn index_by_station(frames: &[TimeSeriesFrame]) -> BTreeMap<&str, &TimeSeriesFrame> {
    frames.iter().map(|f| (f.station_id(), f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CH: &[&str] = &["air_temp", "road_temp"];

    #[test]
    fn parses_single_station() {
        let csv = "station_id,timestamp,air_temp,road_temp\n\
                   s1,2016-01-01T00:00:00Z,1.0,2.0\n\
                   s1,2016-01-01T00:30:00Z,1.5,2.5\n\
                   s1,2016-01-01T01:00:00Z,2.0,3.0\n\
                   s1,2016-01-01T01:30:00Z,2.5,3.5\n";
        let frames = read_timeseries_csv(csv.as_bytes(), TWO_CH).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 4);
        assert_eq!(frames[0].channel("road_temp").unwrap()[3], 3.5);
        assert_eq!(frames[0].timestamps()[1] - frames[0].timestamps()[0], 1800);
    }

    #[test]
    fn partitions_by_station_and_sorts() {
        let csv = "station_id,timestamp,air_temp,road_temp\n\
                   a,2016-01-01T01:00:00Z,1,1\n\
                   b,2016-01-01T00:00:00Z,2,2\n\
                   a,2016-01-01T00:00:00Z,0,0\n";
        let frames = read_timeseries_csv(csv.as_bytes(), TWO_CH).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].station_id(), "a");
        assert_eq!(frames[0].channel("air_temp").unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_duplicate_timestamp() {
        let csv = "station_id,timestamp,air_temp,road_temp\n\
                   a,2016-01-01T00:00:00Z,1,1\n\
                   a,2016-01-01T00:00:00Z,2,2\n";
        let err = read_timeseries_csv(csv.as_bytes(), TWO_CH).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "station_id,timestamp,air_temp,road_temp\n\
                   a,2016-01-01T00:00:00Z,1,1\n\
                   a,2016-01-01T00:30:00Z,abc,1\n";
        let err = read_timeseries_csv(csv.as_bytes(), TWO_CH).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_channel_is_schema_error() {
        let csv = "station_id,timestamp,air_temp,road_temp,wind\n";
        let err = read_timeseries_csv(csv.as_bytes(), TWO_CH).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let csv = "station_id,timestamp,air_temp\n";
        assert!(matches!(
            read_timeseries_csv(csv.as_bytes(), TWO_CH).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("1970-01-01T00:00:00Z"), Some(0));
        assert_eq!(parse_timestamp("1970-01-01 00:01:00"), Some(60));
        assert_eq!(format_timestamp(1800), "1970-01-01T00:30:00Z");
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn frame_rejects_unsorted() {
        let ch = vec![Channel {
            name: "x".into(),
            values: vec![0.0, 0.0],
        }];
        assert!(TimeSeriesFrame::new("s", vec![10, 10], ch).is_err());
    }
}
