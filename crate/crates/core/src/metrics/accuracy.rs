use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::log::PredictionLog;
use crate::error::{Error, Result};
use crate::tasks::TaskSchedule;

/// Fraction of entries whose prediction equals the true label.
pub fn overall_accuracy(log: &PredictionLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::input(format!("empty prediction log at step {}", log.step)));
    }
    let hits = log
        .entries
        .iter()
        .filter(|e| e.predicted_label == e.true_label)
        .count();
    Ok(hits as f64 / log.len() as f64)
}

/// Accuracy on the entries whose true class is in `classes`; `None` when
/// there are no such entries.
pub fn accuracy_on(log: &PredictionLog, classes: &[usize]) -> Option<f64> {
    let set: HashSet<usize> = classes.iter().copied().collect();
    let (hits, n) = log
        .entries
        .iter()
        .filter(|e| set.contains(&e.true_label))
        .fold((0usize, 0usize), |(h, n), e| {
            (h + usize::from(e.predicted_label == e.true_label), n + 1)
        });
    (n > 0).then(|| hits as f64 / n as f64)
}

/// `a[l][j]`: accuracy after step `l` on test samples of group `j`, `j <= l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    /// Builds from lower-triangular rows (`rows[l-1]` has `l` entries).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != i + 1 {
                return Err(Error::input(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    r.len(),
                    i + 1
                )));
            }
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::input("accuracies must lie in [0, 1]"));
            }
        }
        Ok(Self { rows })
    }

    pub fn n_steps(&self) -> usize {
        self.rows.len()
    }

    /// 1-based `(step, group)` lookup.
    pub fn get(&self, l: usize, j: usize) -> f64 {
        assert!(j >= 1 && j <= l && l <= self.rows.len(), "a[{l}][{j}] not populated");
        self.rows[l - 1][j - 1]
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.rows[l - 1]
    }
}

/// Builds the accuracy matrix from logs for steps `1..=logs.len()`.
pub fn accuracy_matrix(logs: &[PredictionLog], schedule: &TaskSchedule) -> Result<AccuracyMatrix> {
    if logs.is_empty() || logs.len() > schedule.n_steps() {
        return Err(Error::input(format!(
            "need logs for steps 1..=T with 1 <= T <= {}, got {}",
            schedule.n_steps(),
            logs.len()
        )));
    }
    let mut rows = Vec::with_capacity(logs.len());
    for (i, log) in logs.iter().enumerate() {
        let l = i + 1;
        if log.step != l {
            return Err(Error::input(format!("missing log for step {l}")));
        }
        let row = (1..=l)
            .map(|j| {
                accuracy_on(log, schedule.new_classes(j)).ok_or_else(|| {
                    Error::input(format!("step {l} log has no test samples of group {j}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    AccuracyMatrix::from_rows(rows)
}

/// Mean drop from each past group's best earlier accuracy to its accuracy at
/// step `k`: `1/(k-1) * sum_{j<k} (max_{j<=l<k} a[l][j] - a[k][j])`.
#[allow(non_snake_case)]
pub fn forgetting_F(a: &AccuracyMatrix, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::input("forgetting is defined from step 2"));
    }
    if k > a.n_steps() {
        return Err(Error::input(format!("accuracy matrix has no step {k}")));
    }
    let total: f64 = (1..k)
        .map(|j| {
            let best = (j..k).map(|l| a.get(l, j)).fold(f64::NEG_INFINITY, f64::max);
            best - a.get(k, j)
        })
        .sum();
    Ok(total / (k - 1) as f64)
}

/// Reference accuracy on group `k` minus the incremental model's; may be
/// negative. `reference_acc[k-1]` is `R_k`'s accuracy on group `k`.
#[allow(non_snake_case)]
pub fn intransigence_I(a: &AccuracyMatrix, reference_acc: &[f64], k: usize) -> Result<f64> {
    let r = reference_acc
        .get(k.wrapping_sub(1))
        .ok_or_else(|| Error::input(format!("no reference accuracy for step {k}")))?;
    if k > a.n_steps() {
        return Err(Error::input(format!("accuracy matrix has no step {k}")));
    }
    Ok(r - a.get(k, k))
}

/// `A_k = 1/k * sum_{j<=k} a[k][j]`.
pub fn average_task_accuracy(a: &AccuracyMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > a.n_steps() {
        return Err(Error::input(format!("accuracy matrix has no step {k}")));
    }
    Ok(a.row(k).iter().sum::<f64>() / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::LogEntry;

    fn entry(id: u64, t: usize, p: usize) -> LogEntry {
        LogEntry {
            sample_id: id,
            true_label: t,
            predicted_label: p,
        }
    }

    #[test]
    fn overall_accuracy_examples() {
        let all = PredictionLog::new(1, (0..4).map(|i| entry(i, 0, 0)).collect());
        assert_eq!(overall_accuracy(&all).unwrap(), 1.0);
        let none = PredictionLog::new(1, (0..4).map(|i| entry(i, 0, 1)).collect());
        assert_eq!(overall_accuracy(&none).unwrap(), 0.0);
        let mixed = PredictionLog::new(
            1,
            vec![entry(0, 0, 0), entry(1, 0, 0), entry(2, 1, 1), entry(3, 1, 0), entry(4, 0, 1)],
        );
        assert_eq!(overall_accuracy(&mixed).unwrap(), 0.6);
        assert!(overall_accuracy(&PredictionLog::new(1, vec![])).is_err());
    }

    #[test]
    fn forgetting_motivating_numbers() {
        let a = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.8, 0.7]]).unwrap();
        assert!((forgetting_F(&a, 2).unwrap() - 0.1).abs() < 1e-15);
        let flat = AccuracyMatrix::from_rows(vec![vec![0.6], vec![0.6, 0.6], vec![0.6, 0.6, 0.6]]).unwrap();
        assert_eq!(forgetting_F(&flat, 3).unwrap(), 0.0);
        assert!(forgetting_F(&flat, 1).is_err());
    }

    #[test]
    fn intransigence_examples() {
        let a = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.8, 0.7]]).unwrap();
        assert!((intransigence_I(&a, &[0.9, 0.8], 2).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(intransigence_I(&a, &[0.9, 0.7], 2).unwrap(), 0.0);
        assert!(intransigence_I(&a, &[0.9, 0.6], 2).unwrap() < 0.0);
        assert!(intransigence_I(&a, &[0.9], 2).is_err());
    }

    #[test]
    fn average_task_accuracy_examples() {
        let a = AccuracyMatrix::from_rows(vec![vec![0.7], vec![1.0, 0.0]]).unwrap();
        assert_eq!(average_task_accuracy(&a, 1).unwrap(), 0.7);
        assert_eq!(average_task_accuracy(&a, 2).unwrap(), 0.5);
    }

    #[test]
    fn malformed_matrix_rejected() {
        assert!(AccuracyMatrix::from_rows(vec![vec![0.5, 0.5]]).is_err());
        assert!(AccuracyMatrix::from_rows(vec![vec![1.5]]).is_err());
    }
}
