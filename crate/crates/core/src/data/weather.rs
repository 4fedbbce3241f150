//! Synthetic road weather corpus: seasonal and diurnal sinusoids per station
//! with AR(1) disturbances, sampled every 30 minutes.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::frame::{Channel, TimeSeriesFrame, RWIS_CHANNELS};
use super::segment::GRID_SECONDS;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// 2016-01-01T00:00:00Z
pub const DEFAULT_START: i64 = 1_451_606_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherConfig {
    pub n_stations: usize,
    pub days: usize,
    pub seed: u64,
    /// Multiplies every stochastic term; 0 yields the pure sinusoid model.
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default = "default_start")]
    pub start: i64,
}

fn one() -> f64 {
    1.0
}

fn default_start() -> i64 {
    DEFAULT_START
}

impl WeatherConfig {
    pub fn new(n_stations: usize, days: usize, seed: u64) -> Self {
        Self {
            n_stations,
            days,
            seed,
            noise_scale: 1.0,
            start: DEFAULT_START,
        }
    }
}

/// Deterministic part of one station's climate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationClimate {
    pub offset: f64,
    pub seasonal_amplitude: f64,
    pub diurnal_amplitude: f64,
    /// Hours added to the 15:00 diurnal peak.
    pub phase_hours: f64,
    pub pressure_phase: f64,
}

impl StationClimate {
    fn draw<R: Rng>(rng: &mut R) -> Self {
        Self {
            offset: rng.random_range(-6.0..6.0),
            seasonal_amplitude: rng.random_range(8.0..14.0),
            diurnal_amplitude: rng.random_range(2.5..6.0),
            phase_hours: rng.random_range(-0.5..0.5),
            pressure_phase: rng.random_range(0.0..TAU),
        }
    }

    fn seasonal(&self, ts: i64) -> f64 {
        let day = (ts - DEFAULT_START).rem_euclid(31_557_600) as f64 / 86_400.0;
        -self.seasonal_amplitude * (TAU * (day - 15.0) / 365.25).cos()
    }

    fn diurnal(&self, ts: i64, lag_hours: f64) -> f64 {
        let hour = ts.rem_euclid(86_400) as f64 / 3600.0;
        self.diurnal_amplitude * (TAU * (hour - 9.0 - self.phase_hours - lag_hours) / 24.0).sin()
    }

    /// Noise-free value of `channel` at `ts`.
    pub fn clean_value(&self, channel: &str, ts: i64) -> f64 {
        let season = self.seasonal(ts);
        match channel {
            "air_temp" => self.offset + season + self.diurnal(ts, 0.0),
            "road_temp" => 2.0 + self.offset + season + 1.3 * self.diurnal(ts, 0.0),
            "subsurface_temp" => 2.5 + self.offset + season + 0.3 * self.diurnal(ts, 3.0),
            "pressure" => {
                let day = ts as f64 / 86_400.0;
                1013.0 + 6.0 * (TAU * day / 5.3 + self.pressure_phase).sin()
            }
            "humidity" => 75.0 - 2.5 * self.diurnal(ts, 0.0),
            _ => 0.0,
        }
    }
}

/// AR(1) with coefficient `phi`.
struct Ar1 {
    phi: f64,
    sigma: f64,
    state: f64,
}

impl Ar1 {
    fn step<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.state = self.phi * self.state + self.sigma * z;
        self.state
    }
}

pub fn station_climate(seed: u64, station: usize) -> StationClimate {
    StationClimate::draw(&mut rng_from_seed(derive_seed(seed, 2 * station as u64)))
}

pub fn gen_weather_corpus(n_stations: usize, days: usize, seed: u64) -> Result<Vec<TimeSeriesFrame>> {
    WeatherConfig::new(n_stations, days, seed).generate()
}

impl WeatherConfig {
    pub fn generate(&self) -> Result<Vec<TimeSeriesFrame>> {
        if self.n_stations == 0 || self.days == 0 {
            return Err(Error::invalid(format!(
                "corpus needs at least one station and one day (got {} stations, {} days)",
                self.n_stations, self.days
            )));
        }
        let n = self.days * (86_400 / GRID_SECONDS as usize);
        (0..self.n_stations)
            .map(|s| self.generate_station(s, n))
            .collect()
    }

    fn generate_station(&self, s: usize, n: usize) -> Result<TimeSeriesFrame> {
        let climate = station_climate(self.seed, s);
        let mut rng = rng_from_seed(derive_seed(self.seed, 2 * s as u64 + 1));
        let k = self.noise_scale;
        // shared synoptic disturbance plus per-channel sensor noise
        let mut front = Ar1 { phi: 0.995, sigma: 0.15 * k, state: 0.0 };
        let mut road_n = Ar1 { phi: 0.9, sigma: 0.35 * k, state: 0.0 };
        let mut air_n = Ar1 { phi: 0.9, sigma: 0.3 * k, state: 0.0 };
        let mut sub_n = Ar1 { phi: 0.98, sigma: 0.05 * k, state: 0.0 };
        let mut pres_n = Ar1 { phi: 0.99, sigma: 0.2 * k, state: 0.0 };
        let mut hum_n = Ar1 { phi: 0.95, sigma: 1.0 * k, state: 0.0 };

        let timestamps: Vec<i64> = (0..n as i64).map(|i| self.start + i * GRID_SECONDS).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); RWIS_CHANNELS.len()];
        for &ts in &timestamps {
            let w = front.step(&mut rng);
            let noise = [
                w + air_n.step(&mut rng),
                w + road_n.step(&mut rng),
                0.5 * w + sub_n.step(&mut rng),
                -2.0 * w + pres_n.step(&mut rng),
                -1.5 * w + hum_n.step(&mut rng),
            ];
            for (c, name) in RWIS_CHANNELS.iter().enumerate() {
                let mut v = climate.clean_value(name, ts) + noise[c];
                if *name == "humidity" {
                    v = v.clamp(5.0, 100.0);
                }
                cols[c].push(v);
            }
        }
        let channels = RWIS_CHANNELS
            .iter()
            .zip(cols)
            .map(|(name, values)| Channel {
                name: (*name).to_owned(),
                values,
            })
            .collect();
        TimeSeriesFrame::new(format!("ST{s:03}"), timestamps, channels)
    }
}
