//! Split, contaminate, fit, calibrate and evaluate, without touching disk
//! beyond reading the inputs.

use log::{info, warn};
use synthresh_core::calibration::{
    apply_threshold, neighborhood_metric_segmented, select_threshold, MetricKind, MetricReport,
    Segmentation, ThresholdResult,
};
use synthresh_core::data::{
    interpolate_linear, load_shuttle, load_tabular_csv, load_timeseries_csv, split_on_gaps,
    split_rows, split_stations, FeatureSet, FeatureSpec, Segment, TabularData, TimeSeriesFrame,
};
use synthresh_core::ensemble::{
    combine, feature_bag_fit, model_average_fit, CombinerKind, EnsembleModel, FeatureBagConfig,
    TargetSource,
};
use synthresh_core::rng::derive_seed;
use synthresh_core::synthgen::{contaminate_segments, contaminate_tabular, GeneratorConfig, InjectionRecord};
use synthresh_core::{FeatureMatrix, LabelVector};

use crate::config::{DataFormat, Mode, ModelConfig, PipelineConfig};
use crate::report::{CalibrationSummary, RunReport, TestSummary, REPORT_SCHEMA_VERSION};
use crate::{CliError, StageExt};

const THRESH_STREAM: u64 = 0x7468_7265_7368;
const TEST_STREAM: u64 = 0x7465_7374;
const FIT_STREAM: u64 = 0x6669_7473;

/// One split ready for scoring.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: FeatureMatrix,
    pub target: Option<Vec<f64>>,
    pub labels: Option<LabelVector>,
    pub breaks: Vec<usize>,
}

impl Prepared {
    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn segmentation(&self) -> Result<Segmentation, CliError> {
        Segmentation::new(self.n_rows(), &self.breaks).stage("evaluate")
    }
}

/// The contaminated threshold split in its input layout, so it can be
/// scored again from disk.
#[derive(Debug, Clone)]
pub enum CalibrationData {
    Timeseries(Vec<TimeSeriesFrame>),
    Tabular(TabularData),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub ensemble: EnsembleModel,
    pub sweep: ThresholdResult,
    pub injections: Vec<InjectionRecord>,
    pub test_injections: Option<Vec<InjectionRecord>>,
    pub calibration_data: CalibrationData,
    pub test_scores: Vec<f64>,
}

/// Train, contaminated threshold and test splits of one config.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Prepared,
    pub calibration: Prepared,
    pub test: Prepared,
    pub target_source: TargetSource,
    pub target_column: Option<String>,
    pub injections: Vec<InjectionRecord>,
    pub test_injections: Option<Vec<InjectionRecord>>,
    pub calibration_data: CalibrationData,
}

/// Gap split then 30-minute resampling of every frame.
pub fn prepare_segments(
    frames: &[TimeSeriesFrame],
    max_gap_hours: f64,
    min_duration_hours: f64,
) -> Result<Vec<Segment>, CliError> {
    frames
        .iter()
        .flat_map(|f| split_on_gaps(f, max_gap_hours, min_duration_hours))
        .map(|s| interpolate_linear(&s))
        .collect::<synthresh_core::Result<Vec<_>>>()
        .stage("prepare")
}

fn features(segments: &[Segment], spec: &FeatureSpec, split: &str) -> Result<Prepared, CliError> {
    if segments.is_empty() {
        return Err(CliError::Validation(format!(
            "{split} split has no segment of sufficient duration"
        )));
    }
    let fs = FeatureSet::from_segments(segments, spec).stage("features")?;
    Ok(Prepared {
        matrix: fs.matrix,
        target: Some(fs.target),
        labels: fs.labels,
        breaks: fs.breaks,
    })
}

fn test_seed(cfg: &PipelineConfig) -> u64 {
    cfg.evaluation
        .test_seed
        .unwrap_or_else(|| derive_seed(cfg.seed, TEST_STREAM))
}

fn generator(cfg: &PipelineConfig) -> &GeneratorConfig {
    cfg.generator.as_ref().expect("materialized")
}

fn timeseries_splits(cfg: &PipelineConfig) -> Result<Splits, CliError> {
    let channels = cfg.data.channels.clone().expect("materialized");
    let schema: Vec<&str> = channels.iter().map(String::as_str).collect();
    let mut frames = Vec::new();
    for p in &cfg.data.paths {
        frames.extend(load_timeseries_csv(p, &schema).stage("load")?);
    }
    let plan = cfg.split_plan()?;
    let splits = split_stations(&frames, &plan).stage("split")?;
    let spec = cfg.features.clone().expect("materialized");
    let gap = cfg.preparation.max_gap_hours.expect("materialized");
    let min = cfg.preparation.min_duration_hours.expect("materialized");
    let gen = generator(cfg);

    let train = features(&prepare_segments(&splits.train, gap, min)?, &spec, "training")?;

    let thresh_segments = prepare_segments(&splits.threshold, gap, min)?;
    let (thresh_segments, injections) = contaminate_segments(
        &thresh_segments,
        &spec.target_channel,
        gen,
        derive_seed(cfg.seed, THRESH_STREAM),
    )
    .stage("contaminate")?;
    let calibration = features(&thresh_segments, &spec, "threshold")?;

    let test_segments = prepare_segments(&splits.test, gap, min)?;
    let (test_segments, test_injections) = if cfg.evaluation.inject_test == Some(true) {
        let (s, r) = contaminate_segments(&test_segments, &spec.target_channel, gen, test_seed(cfg))
            .stage("contaminate")?;
        (s, Some(r))
    } else {
        (test_segments, None)
    };
    let test = features(&test_segments, &spec, "test")?;
    info!(
        "stations: {} train, {} threshold, {} test; rows: {} / {} / {}",
        splits.train.len(),
        splits.threshold.len(),
        splits.test.len(),
        train.n_rows(),
        calibration.n_rows(),
        test.n_rows()
    );
    Ok(Splits {
        train,
        calibration,
        test,
        target_source: TargetSource::External,
        target_column: None,
        injections,
        test_injections,
        calibration_data: CalibrationData::Timeseries(thresh_segments.into_iter().map(|s| s.frame).collect()),
    })
}

fn load_tabular(cfg: &PipelineConfig) -> Result<TabularData, CliError> {
    let mut out: Option<TabularData> = None;
    for p in &cfg.data.paths {
        let part = match cfg.data.format.expect("materialized") {
            DataFormat::Shuttle => load_shuttle(p),
            _ => load_tabular_csv(p),
        }
        .stage("load")?;
        out = Some(match out {
            None => part,
            Some(acc) => {
                let labels = match (acc.labels, part.labels) {
                    (Some(a), Some(b)) => Some(a.concat(&b)),
                    (None, None) => None,
                    _ => {
                        return Err(CliError::Validation(
                            "either every tabular input has a label column or none does".into(),
                        ))
                    }
                };
                TabularData {
                    matrix: acc.matrix.vstack(&part.matrix).stage("load")?,
                    labels,
                }
            }
        });
    }
    out.ok_or_else(|| CliError::Validation("no tabular input".into()))
}

/// Overlays real anomaly marks on the leading rows of a contaminated split.
fn merge_labels(contaminated: &mut TabularData, original: Option<&LabelVector>) {
    if let (Some(orig), Some(l)) = (original, contaminated.labels.as_ref()) {
        let mut marks = l.marks().to_vec();
        marks.iter_mut().zip(orig.marks()).for_each(|(m, o)| *m |= *o);
        contaminated.labels = Some(LabelVector::pointwise(marks));
    }
}

fn tabular_prepared(d: TabularData, target_col: Option<usize>) -> Prepared {
    Prepared {
        target: target_col.map(|j| d.matrix.column(j)),
        breaks: Vec::new(),
        matrix: d.matrix,
        labels: d.labels,
    }
}

fn tabular_splits(cfg: &PipelineConfig) -> Result<Splits, CliError> {
    let data = load_tabular(cfg)?;
    if data.matrix.is_empty() {
        return Err(CliError::Validation("tabular input has no rows".into()));
    }
    let plan = cfg.split_plan()?;
    let idx = split_rows(data.matrix.n_rows(), &plan).stage("split")?;
    let train = data.select_rows(&idx.train);
    let mut thresh = data.select_rows(&idx.threshold);
    if cfg.split.normal_only_threshold == Some(true) {
        if let Some(l) = &thresh.labels {
            let keep: Vec<usize> = (0..l.len()).filter(|&i| !l.marks()[i]).collect();
            info!("threshold split: kept {} of {} normal rows", keep.len(), l.len());
            thresh = thresh.select_rows(&keep);
        } else {
            warn!("normal_only_threshold requested but the input has no labels");
        }
    }
    let gen = generator(cfg);
    let (mut calib, injections) = contaminate_tabular(
        &thresh.matrix,
        &train.matrix,
        gen,
        derive_seed(cfg.seed, THRESH_STREAM),
    )
    .stage("contaminate")?;
    merge_labels(&mut calib, thresh.labels.as_ref());

    let test = data.select_rows(&idx.test);
    let (test, test_injections) = if cfg.evaluation.inject_test == Some(true) {
        let (mut t, r) = contaminate_tabular(&test.matrix, &train.matrix, gen, test_seed(cfg))
            .stage("contaminate")?;
        merge_labels(&mut t, test.labels.as_ref());
        (t, Some(r))
    } else {
        (test, None)
    };

    let needs_target = match &cfg.model {
        ModelConfig::Single { detector } => detector.kind().needs_target(),
        ModelConfig::ModelAveraging { detectors } => detectors.iter().any(|d| d.kind().needs_target()),
        ModelConfig::FeatureBagging { base, .. } => base.kind().needs_target(),
    };
    let target_column = if needs_target {
        Some(
            cfg.data
                .target_column
                .clone()
                .unwrap_or_else(|| data.matrix.column_names()[0].clone()),
        )
    } else {
        None
    };
    let target_idx = match &target_column {
        Some(name) => Some(data.matrix.column_index(name).ok_or_else(|| {
            CliError::Validation(format!("target column `{name}` is not an input column"))
        })?),
        None => None,
    };
    info!(
        "rows: {} train, {} threshold ({} injected), {} test",
        train.matrix.n_rows(),
        calib.matrix.n_rows(),
        injections.len(),
        test.matrix.n_rows()
    );
    Ok(Splits {
        train: tabular_prepared(train, target_idx),
        calibration: tabular_prepared(calib.clone(), target_idx),
        test: tabular_prepared(test, target_idx),
        target_source: match &target_column {
            Some(c) => TargetSource::Column(c.clone()),
            None => TargetSource::External,
        },
        target_column,
        injections,
        test_injections,
        calibration_data: CalibrationData::Tabular(calib),
    })
}

/// Target handed to the ensemble: series forecasts need it alongside the
/// matrix; column targets are read from the matrix itself.
pub fn external_target<'a>(p: &'a Prepared, source: &TargetSource) -> Option<&'a [f64]> {
    match source {
        TargetSource::External => p.target.as_deref(),
        TargetSource::Column(_) => None,
    }
}

pub fn fit_ensemble(
    cfg: &PipelineConfig,
    x: &FeatureMatrix,
    target: Option<&[f64]>,
    source: TargetSource,
) -> Result<EnsembleModel, CliError> {
    let seed = derive_seed(cfg.seed, FIT_STREAM);
    let opts = cfg.fit_options();
    match &cfg.model {
        ModelConfig::Single { detector } => model_average_fit(x, target, source, &[*detector], seed, &opts),
        ModelConfig::ModelAveraging { detectors } => {
            model_average_fit(x, target, source, detectors, seed, &opts)
        }
        ModelConfig::FeatureBagging {
            base,
            preset,
            n_models,
            k_min,
            k_max,
        } => {
            let pool = match (&source, base.kind().needs_target()) {
                (TargetSource::Column(_), true) => x.n_cols() - 1,
                _ => x.n_cols(),
            };
            let mut bag = match preset {
                Some(p) => FeatureBagConfig::from_preset(*base, *p, pool, seed),
                None => FeatureBagConfig {
                    base: *base,
                    n_models: 0,
                    k_min: 0,
                    k_max: 0,
                    seed,
                },
            };
            if let Some(v) = n_models {
                bag.n_models = *v;
            }
            if let Some(v) = k_min {
                bag.k_min = *v;
            }
            if let Some(v) = k_max {
                bag.k_max = *v;
            }
            feature_bag_fit(x, target, source, &bag, &opts)
        }
    }
    .stage("fit")
}

fn metric_radius(cfg: &PipelineConfig) -> (MetricKind, usize) {
    let kind = cfg.metric.kind.expect("materialized");
    let radius = match kind {
        MetricKind::Pointwise => 0,
        MetricKind::Neighborhood => cfg.metric.radius.expect("materialized"),
    };
    (kind, radius)
}

pub fn prepare_splits(cfg: &PipelineConfig) -> Result<Splits, CliError> {
    match cfg.mode {
        Mode::Timeseries => timeseries_splits(cfg),
        Mode::Tabular => tabular_splits(cfg),
    }
}

/// A fitted ensemble after calibration, combiner fit, threshold selection
/// and test evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub ensemble: EnsembleModel,
    pub sweep: ThresholdResult,
    pub calibration: CalibrationSummary,
    pub test: TestSummary,
    pub test_scores: Vec<f64>,
}

pub fn evaluate(
    cfg: &PipelineConfig,
    splits: &Splits,
    mut ensemble: EnsembleModel,
    kind: CombinerKind,
) -> Result<Evaluation, CliError> {
    let (metric, radius) = metric_radius(cfg);
    let src = &splits.target_source;
    let calib = &splits.calibration;
    let calib_labels = calib.labels.clone().ok_or_else(|| {
        CliError::Validation("threshold split carries no anomaly labels after contamination".into())
    })?;
    let s = ensemble
        .calibrate(&calib.matrix, external_target(calib, src))
        .stage("calibrate")?;
    let spec = ensemble.fit_combiner(&s, &calib_labels, kind).stage("combine")?.clone();
    let calib_scores = combine(&s, &spec).stage("combine")?;
    let sweep = select_threshold(&calib_scores, &calib_labels, radius, metric, &calib.segmentation()?)
        .stage("threshold")?;
    let threshold = sweep.threshold;
    let calib_point = sweep
        .curve
        .iter()
        .find(|p| p.threshold == threshold)
        .copied()
        .expect("selected threshold is on the curve");
    info!("threshold {threshold} (calibration F1 {:.4})", sweep.f1);

    let test = &splits.test;
    let truth = test.labels.clone().ok_or_else(|| {
        CliError::Validation(
            "test split has no labels; add a label column or set evaluation.inject_test = true".into(),
        )
    })?;
    let test_scores = ensemble
        .score(&test.matrix, external_target(test, src))
        .stage("evaluate")?;
    let seg = test.segmentation()?;
    let pred = apply_threshold(&test_scores, threshold);
    let metrics: MetricReport = neighborhood_metric_segmented(&pred, &truth, radius, &seg).stage("evaluate")?;
    let oracle = if truth.positives() > 0 && truth.positives() < truth.len() {
        Some(select_threshold(&test_scores, &truth, radius, metric, &seg).stage("evaluate")?)
    } else {
        warn!("test split has a single class; oracle threshold not computed");
        None
    };
    info!(
        "test: recall {:.4} precision {:.4} f1 {:.4}",
        metrics.recall, metrics.precision, metrics.f1
    );
    Ok(Evaluation {
        calibration: CalibrationSummary {
            rows: calib.n_rows(),
            injected: splits.injections.len(),
            metric,
            radius,
            f1: sweep.f1,
            n_predicted: calib_point.n_predicted,
        },
        test: TestSummary {
            rows: test.n_rows(),
            positives: truth.positives(),
            recall: metrics.recall,
            precision: metrics.precision,
            f1: metrics.f1,
            metrics,
            oracle_threshold: oracle.as_ref().map(|o| o.threshold),
            oracle_f1: oracle.as_ref().map(|o| o.f1),
        },
        ensemble,
        sweep,
        test_scores,
    })
}

/// Runs the whole pipeline on a materialized config.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome, CliError> {
    let splits = prepare_splits(cfg)?;
    let src = &splits.target_source;
    let ensemble = fit_ensemble(
        cfg,
        &splits.train.matrix,
        external_target(&splits.train, src),
        src.clone(),
    )?;
    info!("fitted {} members", ensemble.n_members());
    let kind = cfg.combiner.expect("materialized");
    let ev = evaluate(cfg, &splits, ensemble, kind)?;
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        seed: cfg.seed,
        config_hash: cfg.hash()?,
        mode: cfg.mode,
        model: cfg.model.label(),
        combiner: kind,
        members: ev.ensemble.n_members(),
        target_column: splits.target_column.clone(),
        threshold: ev.sweep.threshold,
        calibration: ev.calibration,
        test: ev.test,
        config: cfg.clone(),
    };
    Ok(RunOutcome {
        report,
        ensemble: ev.ensemble,
        sweep: ev.sweep,
        injections: splits.injections,
        test_injections: splits.test_injections,
        calibration_data: splits.calibration_data,
        test_scores: ev.test_scores,
    })
}
