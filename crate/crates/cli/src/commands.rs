//! Subcommand implementations. Each returns what it wrote so callers and
//! tests can inspect it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use synthresh_core::calibration::write_sweep_csv;
use synthresh_core::data::{
    format_timestamp, read_shuttle, read_tabular_csv, read_timeseries_csv, write_tabular_csv,
    write_timeseries_csv, FeatureSet, WeatherConfig,
};
use synthresh_core::synthgen::write_injection_records;

use crate::artifact::{self, ModelPayload};
use crate::config::{Mode, PipelineConfig};
use crate::pipeline::{prepare_segments, run_pipeline, CalibrationData, RunOutcome};
use crate::{CliError, StageExt};

pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MODEL_FILE: &str = "ensemble.json";
pub const INJECTIONS_FILE: &str = "injections.csv";
pub const TEST_INJECTIONS_FILE: &str = "test_injections.csv";
pub const CALIBRATION_FILE: &str = "calibration.csv";

/// Files staged next to their destination and renamed into place only once
/// every one of them was written.
struct Staging {
    dir: PathBuf,
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staging {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let tmp = self.dir.join(format!(".{name}.tmp-{}", std::process::id()));
        let dst = self.dir.join(name);
        self.files.push((tmp.clone(), dst));
        let file = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(&tmp, e))?;
        Ok(())
    }

    fn write_str(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        self.write(name, |w| w.write_all(text.as_bytes()).map_err(|e| CliError::io(&path, e)))
    }

    fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let files = std::mem::take(&mut self.files);
        let mut out = Vec::new();
        for (i, (tmp, dst)) in files.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dst) {
                for (t, _) in &files[i..] {
                    let _ = fs::remove_file(t);
                }
                return Err(CliError::io(dst, e));
            }
            out.push(dst.clone());
        }
        Ok(out)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = fs::remove_file(tmp);
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub files: Vec<PathBuf>,
    pub stations: Vec<(String, usize)>,
}

pub fn cmd_gen_corpus(stations: usize, days: usize, seed: u64, out: &Path) -> Result<CorpusSummary, CliError> {
    if stations == 0 || days == 0 {
        return Err(CliError::Validation(format!(
            "--stations and --days must be at least 1 (got {stations} and {days})"
        )));
    }
    let frames = WeatherConfig::new(stations, days, seed).generate().stage("generate")?;
    let mut staging = Staging::new(out)?;
    let mut summary = Vec::new();
    for f in &frames {
        let name = format!("{}.csv", f.station_id());
        staging.write(&name, |w| {
            write_timeseries_csv(w, std::slice::from_ref(f)).stage("write")
        })?;
        summary.push((f.station_id().to_string(), f.len()));
    }
    let files = staging.commit()?;
    Ok(CorpusSummary {
        files,
        stations: summary,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub outcome: RunOutcome,
    pub files: Vec<PathBuf>,
    pub output_dir: PathBuf,
}

/// Loads, overrides and materializes a config. Fails before any compute.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o.to_path_buf());
    }
    if cfg.output_dir.is_none() {
        return Err(CliError::Validation("no output directory: set output_dir or pass --out".into()));
    }
    cfg.materialize()
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<RunOutput, CliError> {
    let cfg = load_config(config, seed, out)?;
    let output_dir = cfg.output_dir.clone().expect("checked");
    let outcome = run_pipeline(&cfg)?;
    let files = write_outputs(&cfg, &outcome, &output_dir)?;
    Ok(RunOutput {
        outcome,
        files,
        output_dir,
    })
}

pub fn write_outputs(cfg: &PipelineConfig, o: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut st = Staging::new(dir)?;
    st.write_str(REPORT_FILE, &(o.report.to_json() + "\n"))?;
    st.write(SWEEP_FILE, |w| write_sweep_csv(w, &o.sweep.curve).stage("write"))?;
    let payload = ModelPayload::new(cfg, o.report.threshold, o.report.calibration.radius, o.ensemble.clone());
    st.write_str(MODEL_FILE, &artifact::encode(&payload)?)?;
    st.write(INJECTIONS_FILE, |w| write_injection_records(w, &o.injections).stage("write"))?;
    if let Some(t) = &o.test_injections {
        st.write(TEST_INJECTIONS_FILE, |w| write_injection_records(w, t).stage("write"))?;
    }
    st.write(CALIBRATION_FILE, |w| match &o.calibration_data {
        CalibrationData::Timeseries(frames) => write_timeseries_csv(w, frames).stage("write"),
        CalibrationData::Tabular(d) => write_tabular_csv(w, d).stage("write"),
    })?;
    st.commit()
}

/// Input layout for `score` in tabular mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Csv,
    Shuttle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    /// `station_id` and timestamp for series, row index for tables.
    pub key: String,
    pub timestamp: Option<String>,
    pub score: f64,
    pub flag: bool,
}

fn missing_columns(header: &[String], required: &[String]) -> Vec<String> {
    required.iter().filter(|c| !header.contains(c)).cloned().collect()
}

fn csv_header(text: &str) -> Result<Vec<String>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    Ok(rdr
        .headers()
        .map_err(|e| CliError::Validation(format!("data header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect())
}

fn schema_error(missing: Vec<String>) -> CliError {
    CliError::Validation(format!("data is missing columns required by the model: {}", missing.join(", ")))
}

/// Scores every row of `data` with the stored ensemble and flags those at or
/// above the stored threshold.
pub fn score_rows(model: &ModelPayload, data: &Path, format: ScoreFormat) -> Result<Vec<ScoredRow>, CliError> {
    let text = fs::read_to_string(data).map_err(|e| CliError::io(data, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let t = model.threshold;
    let ens = &model.ensemble;
    match model.mode {
        Mode::Timeseries => {
            let channels = model.channels.clone().unwrap_or_default();
            let mut required = vec!["station_id".to_string(), "timestamp".to_string()];
            required.extend(channels.iter().cloned());
            let missing = missing_columns(&csv_header(&text)?, &required);
            if !missing.is_empty() {
                return Err(schema_error(missing));
            }
            let schema: Vec<&str> = channels.iter().map(String::as_str).collect();
            let frames = read_timeseries_csv(text.as_bytes(), &schema).stage("load")?;
            let prep = model.preparation.clone().ok_or_else(|| {
                CliError::Validation("model file lacks preparation settings".into())
            })?;
            let segments = prepare_segments(
                &frames,
                prep.max_gap_hours.unwrap_or(synthresh_core::data::DEFAULT_MAX_GAP_HOURS),
                prep.min_duration_hours.unwrap_or(synthresh_core::data::DEFAULT_MIN_DURATION_HOURS),
            )?;
            if segments.is_empty() {
                return Ok(Vec::new());
            }
            let spec = model.features.clone().unwrap_or_default();
            let fs = FeatureSet::from_segments(&segments, &spec).stage("features")?;
            let scores = ens.score(&fs.matrix, Some(&fs.target)).stage("score")?;
            let keys = fs.matrix.keys().expect("series rows are keyed");
            Ok(keys
                .iter()
                .zip(scores)
                .map(|(k, s)| ScoredRow {
                    key: k.station_id.clone(),
                    timestamp: Some(format_timestamp(k.timestamp)),
                    score: s,
                    flag: s >= t,
                })
                .collect())
        }
        Mode::Tabular => {
            let d = match format {
                ScoreFormat::Shuttle => read_shuttle(text.as_bytes()),
                ScoreFormat::Csv => {
                    let missing = missing_columns(&csv_header(&text)?, &ens.input_columns);
                    if !missing.is_empty() {
                        return Err(schema_error(missing));
                    }
                    read_tabular_csv(text.as_bytes())
                }
            }
            .stage("load")?;
            if d.matrix.is_empty() {
                return Ok(Vec::new());
            }
            let missing = missing_columns(d.matrix.column_names(), &ens.input_columns);
            if !missing.is_empty() {
                return Err(schema_error(missing));
            }
            let x = d.matrix.select_named(&ens.input_columns).stage("load")?;
            let scores = ens.score(&x, None).stage("score")?;
            Ok(scores
                .into_iter()
                .enumerate()
                .map(|(i, s)| ScoredRow {
                    key: i.to_string(),
                    timestamp: None,
                    score: s,
                    flag: s >= t,
                })
                .collect())
        }
    }
}

pub fn write_scores<W: Write>(w: W, mode: Mode, rows: &[ScoredRow]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Stage {
        stage: "write",
        source: e.into(),
    };
    match mode {
        Mode::Timeseries => wtr.write_record(["station_id", "timestamp", "score", "flag"]),
        Mode::Tabular => wtr.write_record(["row", "score", "flag"]),
    }
    .map_err(csv_err)?;
    for r in rows {
        let flag = if r.flag { "1" } else { "0" };
        let score = r.score.to_string();
        match &r.timestamp {
            Some(ts) => wtr.write_record([r.key.as_str(), ts, &score, flag]),
            None => wtr.write_record([r.key.as_str(), &score, flag]),
        }
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::io("<scores>", e))
}

pub fn cmd_score(model: &Path, data: &Path, out: Option<&Path>, format: ScoreFormat) -> Result<Vec<ScoredRow>, CliError> {
    let payload = artifact::load(model)?;
    let rows = score_rows(&payload, data, format)?;
    info!(
        "scored {} rows, {} flagged at threshold {}",
        rows.len(),
        rows.iter().filter(|r| r.flag).count(),
        payload.threshold
    );
    match out {
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let name = path
                .file_name()
                .ok_or_else(|| CliError::Validation(format!("invalid output path {}", path.display())))?
                .to_string_lossy()
                .into_owned();
            let mut st = Staging::new(dir)?;
            st.write(&name, |w| write_scores(w, payload.mode, &rows))?;
            st.commit()?;
        }
        None => write_scores(std::io::stdout().lock(), payload.mode, &rows)?,
    }
    Ok(rows)
}
