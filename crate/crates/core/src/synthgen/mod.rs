//! Artificial anomalies for threshold calibration: point spikes, short
//! cumulative drifts and long multiplicative faults for sensor series, and
//! principal-axis outliers for tabular data.

mod series;
mod tabular;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use series::{
    contaminate_segments, contaminate_series, gen_long_term, gen_short_term, gen_single, Injection,
    StationSeries,
};
pub use tabular::{contaminate_tabular, gen_tabular_axes, Pca};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    Single,
    ShortTerm,
    LongTerm,
    TabularAxis,
}

/// One realised draw of a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub station_id: String,
    pub start: usize,
    pub duration: usize,
    pub kind: InjectionKind,
    pub sign: Option<i8>,
    /// Spike size for singles, final cumulative drift for short episodes,
    /// sampled component value for tabular points.
    pub magnitude: Option<f64>,
    pub multiplier: Option<f64>,
    /// Principal axis (0 or 1) of a tabular point.
    pub axis: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleConfig {
    pub count: usize,
    pub magnitude_low: f64,
    pub magnitude_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShortTermConfig {
    pub count: usize,
    /// Rate of the exponential increments.
    pub rate: f64,
    pub duration_low: usize,
    pub duration_high: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongTermConfig {
    pub count: usize,
    pub multiplier_low: f64,
    pub multiplier_high: f64,
    pub duration_low: usize,
    pub duration_high: usize,
    pub noise_mean: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularAxisConfig {
    pub per_axis: usize,
    pub axis1_low: f64,
    pub axis1_high: f64,
    pub axis2_low: f64,
    pub axis2_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub single: SingleConfig,
    pub short_term: ShortTermConfig,
    pub long_term: LongTermConfig,
    pub tabular: TabularAxisConfig,
    /// Placement attempts per episode before giving up.
    pub max_attempts: usize,
}

impl Default for SingleConfig {
    fn default() -> Self {
        Self {
            count: 30,
            magnitude_low: 2.0,
            magnitude_high: 5.0,
        }
    }
}

impl Default for ShortTermConfig {
    fn default() -> Self {
        Self {
            count: 20,
            rate: 2.0,
            duration_low: 3,
            duration_high: 12,
        }
    }
}

impl Default for LongTermConfig {
    fn default() -> Self {
        Self {
            count: 3,
            multiplier_low: 30.0,
            multiplier_high: 200.0,
            duration_low: 30,
            duration_high: 200,
            noise_mean: 0.0,
            noise_sd: 5.0,
        }
    }
}

impl Default for TabularAxisConfig {
    fn default() -> Self {
        Self {
            per_axis: 450,
            axis1_low: -10000.0,
            axis1_high: 10000.0,
            axis2_low: -5000.0,
            axis2_high: 5000.0,
        }
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            single: SingleConfig::default(),
            short_term: ShortTermConfig::default(),
            long_term: LongTermConfig::default(),
            tabular: TabularAxisConfig::default(),
            max_attempts: 100,
        }
    }
}

impl GeneratorConfig {
    /// No injections at all.
    pub fn empty() -> Self {
        let mut c = Self::default();
        c.single.count = 0;
        c.short_term.count = 0;
        c.long_term.count = 0;
        c.tabular.per_axis = 0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("generator config: {m}")));
        let s = &self.single;
        if !(s.magnitude_low > 0.0 && s.magnitude_low <= s.magnitude_high) {
            return bad("single magnitudes need 0 < low <= high");
        }
        let st = &self.short_term;
        if !(st.rate > 0.0) || st.duration_low < 1 || st.duration_low > st.duration_high {
            return bad("short-term needs rate > 0 and 1 <= duration_low <= duration_high");
        }
        let l = &self.long_term;
        if !(l.multiplier_low > 0.0 && l.multiplier_low <= l.multiplier_high)
            || l.duration_low < 1
            || l.duration_low > l.duration_high
            || !(l.noise_sd >= 0.0)
            || !l.noise_mean.is_finite()
        {
            return bad("long-term needs 0 < multiplier_low <= multiplier_high, 1 <= duration_low <= duration_high, noise_sd >= 0");
        }
        let t = &self.tabular;
        if !(t.axis1_low <= t.axis1_high && t.axis2_low <= t.axis2_high) {
            return bad("tabular ranges need low <= high");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        Ok(())
    }
}

/// Writes records as CSV with a header row.
pub fn write_injection_records<W: Write>(writer: W, records: &[InjectionRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(writer);
    if records.is_empty() {
        w.write_record([
            "station_id",
            "start",
            "duration",
            "kind",
            "sign",
            "magnitude",
            "multiplier",
            "axis",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<injection records>", e))?;
    Ok(())
}
