//! Data loading, splitting, windowing, metrics, baselines and the experiment
//! runner behind the command-line tool.

mod config;
mod data;
mod experiment;
mod metrics;
mod supervised;
mod synthetic;

pub use config::{ChaosConfig, DataSource, EmbeddingChoice, ExperimentConfig, CONFIG_SCHEMA_VERSION};
pub use data::{
    fit_normalization, load_csv, split_and_normalize, NormalizationKind, SeriesDataset, Split, SplitSpec,
    MIN_SPLIT_LEN,
};
pub use experiment::{
    analyze_series, execute, load_dataset, predict_pairs, prepare, run_alpha_sweep, run_experiment,
    write_metrics_csv, write_predictions_jsonl, ChaosSummary, DatasetSummary, EmbeddingSummary,
    ExperimentOutput, ExperimentReport, HorizonReport, PredictionRecord, PreparedData, REPORT_SCHEMA_VERSION,
};
pub use metrics::{
    baseline_ar, baseline_persistence, fit_ar, horizon_sweep, metrics, ArModel, HorizonSweep, MetricsRow,
};
pub use supervised::{make_supervised, SupervisedPairs};
pub use synthetic::{ar1_stable, SyntheticSpec};
