use std::path::Path;

use serde::{Deserialize, Serialize};

use super::accuracy::{
    accuracy_matrix, accuracy_on, average_task_accuracy, forgetting_F, intransigence_I,
    overall_accuracy, AccuracyMatrix,
};
use super::log::PredictionLog;
use super::sample_dynamics::{sd_averages, sd_f_term, sd_i_term, sd_normalized, sdf, sdi};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tasks::TaskSchedule;

/// Column order of the summary CSV.
pub const REPORT_HEADER: &str = "accuracy,A,F,I,SDF,SDI,SDF_avg,SDI_avg";
pub const TRACE_HEADER: &str = "step,accuracy,A,F,I,SDF,SDI,SDF_normalized,SDI_normalized";

/// Metrics of the model after one step. Forgetting and sample-dynamics values
/// are undefined at step 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub accuracy: f64,
    pub average_task_accuracy: f64,
    pub forgetting: Option<f64>,
    pub intransigence: f64,
    pub sdf: Option<f64>,
    pub sdi: Option<f64>,
    /// Mean of the f-terms (divisor `k - 1` instead of `k`).
    pub sdf_normalized: Option<f64>,
    pub sdi_normalized: Option<f64>,
    pub f_terms: Vec<f64>,
    pub i_terms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean over steps of overall accuracy.
    pub accuracy: f64,
    /// Final-step values.
    pub average_task_accuracy: f64,
    pub forgetting: f64,
    pub intransigence: f64,
    pub sdf: f64,
    pub sdi: f64,
    pub sdf_avg: f64,
    pub sdi_avg: f64,
    pub sdf_normalized: f64,
    pub sdi_normalized: f64,
    pub accuracy_matrix: AccuracyMatrix,
    pub trace: Vec<StepMetrics>,
}

/// Computes every metric from incremental and reference logs for steps
/// `1..=T` (T >= 2).
pub fn compute_metric_report(
    incremental: &[PredictionLog],
    reference: &[PredictionLog],
    schedule: &TaskSchedule,
) -> Result<MetricReport> {
    let t = incremental.len();
    if t < 2 {
        return Err(Error::input("a metric report needs at least two steps"));
    }
    if reference.len() != t {
        return Err(Error::input(format!(
            "{t} incremental logs but {} reference logs",
            reference.len()
        )));
    }
    for log in incremental.iter().chain(reference) {
        log.validate(schedule)?;
    }
    let a = accuracy_matrix(incremental, schedule)?;
    let reference_acc = reference
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let k = i + 1;
            if r.step != k {
                return Err(Error::input(format!("missing reference log for step {k}")));
            }
            accuracy_on(r, schedule.new_classes(k))
                .ok_or_else(|| Error::input(format!("reference log {k} lacks group {k} samples")))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut trace = Vec::with_capacity(t);
    for k in 1..=t {
        let (m, r) = (&incremental[k - 1], &reference[k - 1]);
        let f_terms = (2..=k)
            .map(|j| sd_f_term(m, r, schedule, j))
            .collect::<Result<Vec<f64>>>()?;
        let i_terms = (2..=k)
            .map(|j| sd_i_term(m, r, schedule, j))
            .collect::<Result<Vec<f64>>>()?;
        let defined = k >= 2;
        trace.push(StepMetrics {
            step: k,
            accuracy: overall_accuracy(m)?,
            average_task_accuracy: average_task_accuracy(&a, k)?,
            forgetting: defined.then(|| forgetting_F(&a, k)).transpose()?,
            intransigence: intransigence_I(&a, &reference_acc, k)?,
            sdf: defined.then(|| sdf(&f_terms)).transpose()?,
            sdi: defined.then(|| sdi(&i_terms)).transpose()?,
            sdf_normalized: defined.then(|| sd_normalized(&f_terms)).transpose()?,
            sdi_normalized: defined.then(|| sd_normalized(&i_terms)).transpose()?,
            f_terms,
            i_terms,
        });
    }

    let sdf_trace: Vec<f64> = trace.iter().filter_map(|s| s.sdf).collect();
    let sdi_trace: Vec<f64> = trace.iter().filter_map(|s| s.sdi).collect();
    let (sdf_avg, sdi_avg) = sd_averages(&sdf_trace, &sdi_trace)?;
    let last = trace.last().expect("t >= 2");
    Ok(MetricReport {
        accuracy: trace.iter().map(|s| s.accuracy).sum::<f64>() / t as f64,
        average_task_accuracy: last.average_task_accuracy,
        forgetting: last.forgetting.expect("defined at t >= 2"),
        intransigence: last.intransigence,
        sdf: last.sdf.expect("defined at t >= 2"),
        sdi: last.sdi.expect("defined at t >= 2"),
        sdf_avg,
        sdi_avg,
        sdf_normalized: last.sdf_normalized.expect("defined at t >= 2"),
        sdi_normalized: last.sdi_normalized.expect("defined at t >= 2"),
        accuracy_matrix: a,
        trace,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricReport {
    /// The eight headline values, in [`REPORT_HEADER`] order.
    pub fn summary_values(&self) -> [f64; 8] {
        [
            self.accuracy,
            self.average_task_accuracy,
            self.forgetting,
            self.intransigence,
            self.sdf,
            self.sdi,
            self.sdf_avg,
            self.sdi_avg,
        ]
    }

    pub fn summary_row(&self) -> String {
        self.summary_values()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_HEADER}\n{}\n", self.summary_row())
    }

    pub fn trace_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        for s in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.step,
                s.accuracy,
                s.average_task_accuracy,
                opt(s.forgetting),
                s.intransigence,
                opt(s.sdf),
                opt(s.sdi),
                opt(s.sdf_normalized),
                opt(s.sdi_normalized),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `report.csv`, `report_trace.csv` and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("report_trace.csv"), self.trace_csv().as_bytes())?;
        write_atomic(&dir.join("report.json"), self.to_json().as_bytes())
    }
}
