use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;

use super::{GeneratorConfig, InjectionKind, InjectionRecord};
use crate::data::Segment;
use crate::rng::{derive_seed, hash_str, rng_from_seed, DetRng};
use crate::{Error, Result};

/// A perturbed series with its artificial labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub series: Vec<f64>,
    pub labels: Vec<bool>,
    pub records: Vec<InjectionRecord>,
}

/// One station's target channel, with the tick indices where a new
/// contiguous segment starts. Episodes never straddle a break.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station_id: String,
    pub values: Vec<f64>,
    pub breaks: Vec<usize>,
}

struct Canvas<'a> {
    original: &'a [f64],
    series: Vec<f64>,
    labels: Vec<bool>,
    segment: Vec<usize>,
    records: Vec<InjectionRecord>,
    station_id: &'a str,
    max_attempts: usize,
}

impl<'a> Canvas<'a> {
    fn new(original: &'a [f64], breaks: &[usize], station_id: &'a str, max_attempts: usize) -> Self {
        let mut segment = vec![0; original.len()];
        let mut id = 0;
        for (t, s) in segment.iter_mut().enumerate() {
            if t > 0 && breaks.contains(&t) {
                id += 1;
            }
            *s = id;
        }
        Self {
            original,
            series: original.to_vec(),
            labels: vec![false; original.len()],
            segment,
            records: Vec::new(),
            station_id,
            max_attempts,
        }
    }

    fn fits(&self, start: usize, len: usize) -> bool {
        let end = start + len;
        end <= self.labels.len()
            && self.segment[start] == self.segment[end - 1]
            && self.labels[start..end].iter().all(|&l| !l)
    }

    /// Draws an episode length and a start until the window is free.
    fn place(
        &self,
        rng: &mut DetRng,
        len_range: (usize, usize),
        what: &str,
    ) -> Result<(usize, usize)> {
        let n = self.labels.len();
        for _ in 0..self.max_attempts {
            let len = rng.random_range(len_range.0..=len_range.1);
            if len > n {
                continue;
            }
            let start = rng.random_range(0..=n - len);
            if self.fits(start, len) {
                return Ok((start, len));
            }
        }
        Err(Error::Infeasible(format!(
            "could not place a {what} episode on station `{}` without overlap after {} attempts",
            self.station_id, self.max_attempts
        )))
    }

    fn record(&mut self, start: usize, duration: usize, kind: InjectionKind) -> &mut InjectionRecord {
        self.labels[start..start + duration].iter_mut().for_each(|l| *l = true);
        self.records.push(InjectionRecord {
            station_id: self.station_id.to_string(),
            start,
            duration,
            kind,
            sign: None,
            magnitude: None,
            multiplier: None,
            axis: None,
        });
        self.records.last_mut().expect("just pushed")
    }

    fn singles(&mut self, cfg: &GeneratorConfig, rng: &mut DetRng) -> Result<()> {
        let c = &cfg.single;
        for _ in 0..c.count {
            let (t, _) = self.place(rng, (1, 1), "single")?;
            let p = rng.random_range(c.magnitude_low..=c.magnitude_high);
            let sign: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
            self.series[t] = self.original[t] + f64::from(sign) * p;
            let r = self.record(t, 1, InjectionKind::Single);
            r.sign = Some(sign);
            r.magnitude = Some(p);
        }
        Ok(())
    }

    fn short_terms(&mut self, cfg: &GeneratorConfig, rng: &mut DetRng) -> Result<()> {
        let c = &cfg.short_term;
        if c.count == 0 {
            return Ok(());
        }
        let exp = Exp::new(c.rate).map_err(|e| Error::invalid(format!("short-term rate: {e}")))?;
        for _ in 0..c.count {
            let (t, d) = self.place(rng, (c.duration_low, c.duration_high), "short-term")?;
            let sign: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
            let p = cumulative_drift(d, || exp.sample(rng));
            for (i, v) in p.iter().enumerate() {
                self.series[t + i] = self.original[t + i] + f64::from(sign) * v;
            }
            let r = self.record(t, d, InjectionKind::ShortTerm);
            r.sign = Some(sign);
            r.magnitude = p.last().copied();
        }
        Ok(())
    }

    fn long_terms(&mut self, cfg: &GeneratorConfig, rng: &mut DetRng) -> Result<()> {
        let c = &cfg.long_term;
        if c.count == 0 {
            return Ok(());
        }
        let noise = Normal::new(c.noise_mean, c.noise_sd)
            .map_err(|e| Error::invalid(format!("long-term noise: {e}")))?;
        for _ in 0..c.count {
            let (t, d) = self.place(rng, (c.duration_low, c.duration_high), "long-term")?;
            let mult = rng.random_range(c.multiplier_low..=c.multiplier_high);
            for i in 0..d {
                let p = if i == 0 { 0.0 } else { noise.sample(rng) };
                self.series[t + i] = mult * self.original[t + i] + p;
            }
            let r = self.record(t, d, InjectionKind::LongTerm);
            r.multiplier = Some(mult);
        }
        Ok(())
    }

    fn finish(self) -> Injection {
        Injection {
            series: self.series,
            labels: self.labels,
            records: self.records,
        }
    }
}

/// `p[0] = 0`, `p[i] = p[i−1] + incrementᵢ`.
pub(crate) fn cumulative_drift(d: usize, mut increment: impl FnMut() -> f64) -> Vec<f64> {
    let mut p = vec![0.0; d];
    for i in 1..d {
        p[i] = p[i - 1] + increment();
    }
    p
}

fn check_room(n: usize, needed: usize, what: &str) -> Result<()> {
    if n < needed {
        return Err(Error::invalid(format!(
            "series of length {n} is too short for {what} injection (needs at least {needed})"
        )));
    }
    Ok(())
}

/// Spikes of size `U(low, high)` with a random sign at distinct ticks.
pub fn gen_single(series: &[f64], cfg: &GeneratorConfig, seed: u64) -> Result<Injection> {
    cfg.validate()?;
    check_room(series.len(), cfg.single.count + 1, "single-outlier")?;
    let mut canvas = Canvas::new(series, &[], "", cfg.max_attempts);
    canvas.singles(cfg, &mut rng_from_seed(seed))?;
    Ok(canvas.finish())
}

/// Episodes of cumulative exponential drift.
pub fn gen_short_term(series: &[f64], cfg: &GeneratorConfig, seed: u64) -> Result<Injection> {
    cfg.validate()?;
    if cfg.short_term.count > 0 {
        check_room(series.len(), cfg.short_term.duration_high + 2, "short-term")?;
    }
    let mut canvas = Canvas::new(series, &[], "", cfg.max_attempts);
    canvas.short_terms(cfg, &mut rng_from_seed(seed))?;
    Ok(canvas.finish())
}

/// Episodes where the series is scaled by a large multiplier plus noise.
pub fn gen_long_term(series: &[f64], cfg: &GeneratorConfig, seed: u64) -> Result<Injection> {
    cfg.validate()?;
    if cfg.long_term.count > 0 {
        check_room(series.len(), cfg.long_term.duration_high + 2, "long-term")?;
    }
    let mut canvas = Canvas::new(series, &[], "", cfg.max_attempts);
    canvas.long_terms(cfg, &mut rng_from_seed(seed))?;
    Ok(canvas.finish())
}

/// Applies all three generators to every station. Long episodes are placed
/// first since they need the largest free windows. Each station draws from
/// its own stream keyed by its id.
pub fn contaminate_series(stations: &[StationSeries], cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Injection>> {
    cfg.validate()?;
    stations
        .par_iter()
        .map(|s| {
            let mut rng = rng_from_seed(derive_seed(seed, hash_str(&s.station_id)));
            let mut canvas = Canvas::new(&s.values, &s.breaks, &s.station_id, cfg.max_attempts);
            canvas.long_terms(cfg, &mut rng)?;
            canvas.short_terms(cfg, &mut rng)?;
            canvas.singles(cfg, &mut rng)?;
            Ok(canvas.finish())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Contaminates `channel` of prepared segments, grouping them by station.
/// Returned segments carry labels that are the union of any existing labels
/// and the injected ticks.
pub fn contaminate_segments(
    segments: &[Segment],
    channel: &str,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(Vec<Segment>, Vec<InjectionRecord>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        let id = s.station_id();
        if !groups.contains_key(id) {
            order.push(id);
        }
        groups.entry(id).or_default().push(i);
        if s.frame.channel(channel).is_none() {
            return Err(Error::Schema(format!("segment of `{id}` has no channel `{channel}`")));
        }
    }
    let stations: Vec<StationSeries> = order
        .iter()
        .map(|id| {
            let mut values = Vec::new();
            let mut breaks = Vec::new();
            for &i in &groups[id] {
                breaks.push(values.len());
                values.extend_from_slice(segments[i].frame.channel(channel).expect("checked"));
            }
            StationSeries {
                station_id: id.to_string(),
                values,
                breaks,
            }
        })
        .collect();
    let injected = contaminate_series(&stations, cfg, seed)?;
    let mut out: Vec<Option<Segment>> = vec![None; segments.len()];
    let mut records = Vec::new();
    for ((id, st), inj) in order.iter().zip(&stations).zip(injected) {
        for (&i, &offset) in groups[id].iter().zip(&st.breaks) {
            let seg = &segments[i];
            let len = seg.len();
            let mut frame = seg.frame.clone();
            frame
                .channel_mut(channel)
                .expect("checked")
                .copy_from_slice(&inj.series[offset..offset + len]);
            let mut labels = inj.labels[offset..offset + len].to_vec();
            if let Some(old) = seg.frame.labels() {
                labels.iter_mut().zip(old).for_each(|(l, o)| *l |= *o);
            }
            out[i] = Some(Segment {
                source_range: seg.source_range.clone(),
                frame: frame.with_labels(labels)?,
            });
        }
        records.extend(inj.records);
    }
    Ok((out.into_iter().map(|s| s.expect("every segment grouped")).collect(), records))
}
