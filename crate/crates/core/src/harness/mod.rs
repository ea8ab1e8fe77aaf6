//! Experiment harness: configuration, the round loop, metrics files and
//! plots.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use config::{ExperimentConfig, OutputConfig};
pub use experiment::{
    build_population, compare, evaluate_population, format_compare_table, run_detailed, run_experiment,
    run_on_population, run_to_disk, CompareRow, PopulationEval, RunArtifacts, RunOutcome,
};
pub use metrics::{read_metrics_csv, write_metrics_csv, MetricsSchema, MetricsWriter, RoundReport};
pub use plot::emit_plots;
