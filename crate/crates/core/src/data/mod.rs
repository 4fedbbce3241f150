//! Ingestion and preparation of sensor corpora and tabular data.

mod features;
mod frame;
mod matrix;
mod segment;
mod split;
mod tabular;
mod weather;

pub use features::{
    build_features, cyclic_time, feature_names, FeatureSet, FeatureSpec, SegmentFeatures,
    N_LAG_DIFFS,
};
pub use frame::{
    format_timestamp, index_by_station, load_timeseries_csv, parse_timestamp, read_timeseries_csv,
    write_timeseries_csv, Channel, StationMeta, TimeSeriesFrame, AIR_TEMP, HUMIDITY, PRESSURE,
    ROAD_TEMP, RWIS_CHANNELS, SUBSURFACE_TEMP,
};
pub use matrix::{FeatureMatrix, LabelVector, RowKey};
pub use segment::{
    interpolate_linear, prepare_frame, split_on_gaps, Segment, DEFAULT_MAX_GAP_HOURS,
    DEFAULT_MIN_DURATION_HOURS, GRID_SECONDS,
};
pub use split::{make_splits, split_rows, split_stations, SplitMode, SplitPlan, Splits};
pub use tabular::{
    load_shuttle, load_tabular_csv, read_shuttle, read_tabular_csv, shuttle_label,
    write_tabular_csv, TabularData, SHUTTLE_NORMAL_CLASSES,
};
pub use weather::{gen_weather_corpus, station_climate, StationClimate, WeatherConfig, DEFAULT_START};
