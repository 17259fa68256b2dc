//! DropOut Sampling: per mini-batch removal of new-class samples.
//!
//! With `A` the old-class and `B` the new-class members of a batch, the number
//! removed is `max(min(|A|, |B|), floor(|B| / 2))`. During the first `K`
//! epochs the removed members are drawn uniformly at random; afterwards the
//! members with the highest current cross-entropy are removed (ties broken by
//! ascending sample id).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// A mini-batch with the per-sample annotations the filter needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedBatch<T> {
    pub samples: Vec<Sample<T>>,
    /// `true` where the sample's label is an old class.
    pub old_flags: Vec<bool>,
    /// Cross-entropy of each sample under the current model, when computed.
    pub ce_values: Option<Vec<T>>,
}

impl<T: Scalar> AnnotatedBatch<T> {
    pub fn new(samples: Vec<Sample<T>>, old_classes: &BTreeSet<usize>) -> Self {
        let old_flags = samples.iter().map(|s| old_classes.contains(&s.label)).collect();
        Self {
            samples,
            old_flags,
            ce_values: None,
        }
    }

    pub fn with_ce(mut self, ce: Vec<T>) -> Result<Self> {
        if ce.len() != self.samples.len() {
            return Err(Error::input(format!(
                "{} CE values for {} samples",
                ce.len(),
                self.samples.len()
            )));
        }
        self.ce_values = Some(ce);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_old(&self) -> usize {
        self.old_flags.iter().filter(|&&f| f).count()
    }

    pub fn n_new(&self) -> usize {
        self.len() - self.n_old()
    }

    fn validate(&self) -> Result<()> {
        if self.old_flags.len() != self.samples.len() {
            return Err(Error::input("old_flags not aligned with samples"));
        }
        if let Some(ce) = &self.ce_values {
            if ce.len() != self.samples.len() {
                return Err(Error::input("ce_values not aligned with samples"));
            }
            if ce.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("ce_values must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DosParams {
    /// Epochs `1..=K` use random removal; later epochs remove by CE.
    pub random_phase_epochs: usize,
    /// Cap the removal count at `|B| - 1` so one new-class sample survives.
    pub clamp: bool,
}

/// Number of new-class samples removed from a batch with the given counts.
pub fn dropout_count(n_old: usize, n_new: usize, clamp: bool) -> usize {
    let count = n_old.min(n_new).max(n_new / 2);
    if clamp && n_new > 0 {
        count.min(n_new - 1)
    } else {
        count
    }
}

/// Applies DropOut Sampling to one batch. `epoch` is 1-based. Retained samples
/// keep their original relative order.
pub fn dos_filter<T: Scalar>(
    batch: &AnnotatedBatch<T>,
    epoch: usize,
    params: &DosParams,
    seed: u64,
) -> Result<AnnotatedBatch<T>> {
    if batch.is_empty() {
        return Err(Error::input("DOS on an empty batch"));
    }
    batch.validate()?;
    let new_positions: Vec<usize> = (0..batch.len()).filter(|&i| !batch.old_flags[i]).collect();
    let n_remove = dropout_count(batch.n_old(), new_positions.len(), params.clamp);

    let removed: BTreeSet<usize> = if epoch <= params.random_phase_epochs {
        let mut rng = rng_from_seed(seed);
        rand::seq::index::sample(&mut rng, new_positions.len(), n_remove)
            .into_iter()
            .map(|k| new_positions[k])
            .collect()
    } else {
        let ce = batch.ce_values.as_ref().ok_or_else(|| {
            Error::input("curriculum phase of DOS requires per-sample CE values")
        })?;
        let mut ranked = new_positions;
        ranked.sort_by(|&a, &b| {
            ce[b]
                .partial_cmp(&ce[a])
                .expect("finite CE values")
                .then(batch.samples[a].id.cmp(&batch.samples[b].id))
        });
        ranked.into_iter().take(n_remove).collect()
    };

    let keep: Vec<usize> = (0..batch.len()).filter(|i| !removed.contains(i)).collect();
    Ok(AnnotatedBatch {
        samples: keep.iter().map(|&i| batch.samples[i].clone()).collect(),
        old_flags: keep.iter().map(|&i| batch.old_flags[i]).collect(),
        ce_values: batch
            .ce_values
            .as_ref()
            .map(|ce| keep.iter().map(|&i| ce[i]).collect()),
    })
}
