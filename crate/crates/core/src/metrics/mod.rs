//! Evaluation suite: accuracy, average task accuracy, forgetting and
//! intransigence from the accuracy matrix, and the per-sample Sample Dynamics
//! metrics (SDF/SDI and their step averages).

mod accuracy;
mod log;
mod report;
mod sample_dynamics;

pub use accuracy::{
    accuracy_matrix, accuracy_on, average_task_accuracy, forgetting_F, intransigence_I,
    overall_accuracy, AccuracyMatrix,
};
pub use log::{LogEntry, PredictionLog, LOG_HEADER};
pub use report::{compute_metric_report, MetricReport, StepMetrics, REPORT_HEADER, TRACE_HEADER};
pub use sample_dynamics::{sd_averages, sd_f_term, sd_i_term, sd_normalized, sdf, sdi};
