//! Configuration, experiment orchestration and result files.

mod config;
mod output;
mod run;
mod tools;

pub use config::{
    config_hash, load_config, parse_config, parse_raw, ExperimentConfig, ModelVariant, NoiseFormName, RawConfig,
    RawDiagnose, RawDomain, RawEstimator, RawInitial, RawModel, RawNoise, RawThreshold, DEFAULT_DT, DEFAULT_N_PATHS,
};
pub use output::{
    emit_outputs, fmt_f64, read_results_csv, summary_of, validate_summary, write_json, write_plot_csv,
    write_results_csv, Environment, OutputPaths, Summary, CSV_COLUMNS, PLOT_COLUMNS, PLOT_CSV, RESULTS_CSV,
    SUMMARY_JSON, SUMMARY_SCHEMA_VERSION,
};
pub use run::{
    configured_travel_times, estimate_cell, run_estimate, run_predict, RunRecord, RunRow, SlopeFitRecord,
};
pub use tools::{run_diagnose, run_flow, sample_u, DiagnoseReport, DiagnoseRow, FlowPointReport, FlowReport};
