//! Synthetic truths, Monte Carlo experiment drivers and the field-data pipeline.

mod config;
mod experiments;
mod field;
mod synthetic;

pub use config::{load_config, parse_config, EigenSpec};
pub use experiments::{
    bounds_experiment, consistency_trend_experiment, sqrt_schedule, sure_vs_oracle_experiment,
    BoundsConfig, BoundsRow, BoundsTable, SureRunRow, SureStudy, SureStudyConfig, TrendConfig,
    TrendRow, TrendSample, TrendTable,
};
pub use field::{
    field_pipeline, load_field_csv, read_field_csv, AxisRescale, ColumnMapping, FieldBasis,
    FieldConfig, FieldReport, FieldRunRow, FieldSplit,
};
pub use synthetic::{
    generate_dataset, mse_under_mu, sample_truth, MeanSe, MseMethod, SyntheticTruth,
};
