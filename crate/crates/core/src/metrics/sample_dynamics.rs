//! Sample Dynamics forgetting/intransigence.
//!
//! For a boundary `j` (2 <= j <= k) the classes seen at step `k` split into
//! `old_j` (groups `1..j-1`) and `new_j` (group `j`). With `M` the incremental
//! and `R` the reference model after step `k`:
//!
//! ```text
//! f_{k,j} = |{y in old_j, R(x) in old_j, M(x) in new_j}| / |{y in old_j, R(x) in old_j}|
//! i_{k,j} = |{y in new_j, R(x) in new_j, M(x) in old_j}| / |{y in new_j, R(x) in new_j}|
//! SDF_k   = (1/k) * sum_{j=2..k} f_{k,j}      (likewise SDI_k)
//! ```
//!
//! Predictions landing in groups after `j` satisfy neither membership test.
//! An empty denominator yields 0 and a warning.

use std::collections::{HashMap, HashSet};

use super::log::PredictionLog;
use crate::error::{Error, Result};
use crate::tasks::TaskSchedule;

#[derive(Clone, Copy)]
enum Direction {
    Forgetting,
    Intransigence,
}

fn term(
    log_m: &PredictionLog,
    log_r: &PredictionLog,
    schedule: &TaskSchedule,
    j: usize,
    dir: Direction,
) -> Result<f64> {
    if log_m.step != log_r.step {
        return Err(Error::input(format!(
            "incremental log is for step {}, reference log for step {}",
            log_m.step, log_r.step
        )));
    }
    let k = log_m.step;
    if j < 2 || j > k || k > schedule.n_steps() {
        return Err(Error::input(format!("boundary j={j} requires 2 <= j <= k={k}")));
    }
    let old: HashSet<usize> = schedule.old_classes(j).iter().copied().collect();
    let new: HashSet<usize> = schedule.new_classes(j).iter().copied().collect();
    let (source, target) = match dir {
        Direction::Forgetting => (&old, &new),
        Direction::Intransigence => (&new, &old),
    };

    if log_m.len() != log_r.len() {
        return Err(Error::input("incremental and reference logs cover different samples"));
    }
    let reference: HashMap<u64, (usize, usize)> = log_r
        .entries
        .iter()
        .map(|e| (e.sample_id, (e.true_label, e.predicted_label)))
        .collect();
    if reference.len() != log_r.len() {
        return Err(Error::input("duplicate sample id in reference log"));
    }

    let (mut numerator, mut denominator) = (0usize, 0usize);
    for e in &log_m.entries {
        let &(r_true, r_pred) = reference.get(&e.sample_id).ok_or_else(|| {
            Error::input(format!("sample {} missing from the reference log", e.sample_id))
        })?;
        if r_true != e.true_label {
            return Err(Error::input(format!(
                "sample {} has different true labels in the two logs",
                e.sample_id
            )));
        }
        if source.contains(&e.true_label) && source.contains(&r_pred) {
            denominator += 1;
            if target.contains(&e.predicted_label) {
                numerator += 1;
            }
        }
    }
    if denominator == 0 {
        log::warn!("empty sample-dynamics denominator at k={k}, j={j}; term set to 0");
        return Ok(0.0);
    }
    Ok(numerator as f64 / denominator as f64)
}

/// `f_{k,j}` for logs of step `k`.
pub fn sd_f_term(
    log_m: &PredictionLog,
    log_r: &PredictionLog,
    schedule: &TaskSchedule,
    j: usize,
) -> Result<f64> {
    term(log_m, log_r, schedule, j, Direction::Forgetting)
}

/// `i_{k,j}` for logs of step `k`.
pub fn sd_i_term(
    log_m: &PredictionLog,
    log_r: &PredictionLog,
    schedule: &TaskSchedule,
    j: usize,
) -> Result<f64> {
    term(log_m, log_r, schedule, j, Direction::Intransigence)
}

fn sum_over_k(terms: &[f64]) -> Result<(f64, usize)> {
    if terms.is_empty() {
        return Err(Error::input("sample dynamics need k >= 2 (at least one term)"));
    }
    Ok((terms.iter().sum(), terms.len() + 1))
}

/// `SDF_k` from `[f_{k,2}, ..., f_{k,k}]`; divides by `k`.
pub fn sdf(terms: &[f64]) -> Result<f64> {
    let (s, k) = sum_over_k(terms)?;
    Ok(s / k as f64)
}

/// `SDI_k` from `[i_{k,2}, ..., i_{k,k}]`; divides by `k`.
pub fn sdi(terms: &[f64]) -> Result<f64> {
    sdf(terms)
}

/// Mean of the terms (divisor `k - 1`), reported alongside `SDF_k`/`SDI_k`.
pub fn sd_normalized(terms: &[f64]) -> Result<f64> {
    let (s, k) = sum_over_k(terms)?;
    Ok(s / (k - 1) as f64)
}

/// Means of per-step `SDF_k` and `SDI_k` over `k = 2..T`.
pub fn sd_averages(sdf_per_step: &[f64], sdi_per_step: &[f64]) -> Result<(f64, f64)> {
    if sdf_per_step.is_empty() || sdf_per_step.len() != sdi_per_step.len() {
        return Err(Error::input("need matching, non-empty SDF and SDI traces"));
    }
    let n = sdf_per_step.len() as f64;
    Ok((
        sdf_per_step.iter().sum::<f64>() / n,
        sdi_per_step.iter().sum::<f64>() / n,
    ))
}
