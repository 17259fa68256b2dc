//! Datasets, the incremental experiment loop, reference models and the
//! on-disk artifacts consumed by the `medic` command-line tool.

mod config;
mod data;
mod experiment;

pub use config::{
    DataConfig, DosConfig, ExperimentConfig, FinetuneConfig, MemoryConfig, ModelConfig,
    ReferenceConfig, TaskMode, TasksConfig, TrainingConfig, Variant,
};
pub use data::{generate_blobs, stratified_split, Dataset, Split};
pub use experiment::{
    compute_report, incremental_log_name, load_dataset, reference_log_name, reference_logs,
    run_experiment, run_incremental, train_reference, ExperimentReport, IncrementalOutcome,
    ReferenceOutcome, VariantReport, INCOMPLETE_MARKER, RESOLVED_CONFIG_FILE, SUMMARY_FILE,
    TASKS_FILE,
};
