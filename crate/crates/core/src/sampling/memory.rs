//! Fixed-budget exemplar memory filled by seeded random selection, and the
//! class-balanced fine-tuning set.

use std::collections::BTreeMap;

use super::Sample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

pub type ClassPools<T> = BTreeMap<usize, Vec<Sample<T>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarMemory<T> {
    budget: usize,
    per_class: ClassPools<T>,
}

impl<T: Scalar> ExemplarMemory<T> {
    pub fn empty(budget: usize) -> Self {
        Self {
            budget,
            per_class: BTreeMap::new(),
        }
    }

    /// Rebuilds a memory from stored contents, checking budget and labels.
    pub fn from_parts(budget: usize, per_class: ClassPools<T>) -> Result<Self> {
        let memory = Self { budget, per_class };
        if memory.len() > budget {
            return Err(Error::input(format!(
                "{} stored exemplars exceed budget {budget}",
                memory.len()
            )));
        }
        for (&class, samples) in &memory.per_class {
            if samples.iter().any(|s| s.label != class) {
                return Err(Error::input(format!("exemplar filed under wrong class {class}")));
            }
        }
        Ok(memory)
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    /// `floor(budget / classes)`; the whole budget while no class is stored.
    pub fn quota(&self) -> usize {
        quota(self.budget, self.per_class.len())
    }

    pub fn len(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_class.keys().copied()
    }

    pub fn samples_of(&self, class: usize) -> Option<&[Sample<T>]> {
        self.per_class.get(&class).map(Vec::as_slice)
    }

    pub fn per_class(&self) -> &ClassPools<T> {
        &self.per_class
    }

    /// All stored samples, ordered by class then insertion.
    pub fn samples(&self) -> impl Iterator<Item = &Sample<T>> {
        self.per_class.values().flatten()
    }
}

fn quota(budget: usize, n_classes: usize) -> usize {
    budget.checked_div(n_classes).unwrap_or(budget)
}

/// Seeded uniform subset of `size` elements, kept in original order.
fn subset<T: Clone>(items: &[T], size: usize, seed: u64) -> Vec<T> {
    if size >= items.len() {
        return items.to_vec();
    }
    let mut idx = rand::seq::index::sample(&mut rng_from_seed(seed), items.len(), size).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

fn check_labels<T>(pools: &ClassPools<T>) -> Result<()> {
    for (&class, samples) in pools {
        if let Some(s) = samples.iter().find(|s| s.label != class) {
            return Err(Error::input(format!(
                "sample {} has label {} but is pooled under class {class}",
                s.id, s.label
            )));
        }
    }
    Ok(())
}

fn check_budget(budget: usize, n_classes: usize) -> Result<()> {
    if budget > 0 && budget < n_classes {
        return Err(Error::config(format!(
            "budget {budget} cannot hold one exemplar for each of {n_classes} classes"
        )));
    }
    Ok(())
}

/// Fills a fresh memory with `floor(budget / classes)` random samples per class.
pub fn reserve_memory<T: Scalar>(
    pools: &ClassPools<T>,
    budget: usize,
    seed: u64,
) -> Result<ExemplarMemory<T>> {
    if budget > 0 && pools.values().all(Vec::is_empty) {
        return Err(Error::input("no samples available to fill the memory"));
    }
    rebalance_memory(&ExemplarMemory::empty(budget), pools, seed)
}

/// Adds new classes under the same total budget: old classes are down-sampled
/// to the new quota (subsets of what they held) and new classes filled to it.
pub fn rebalance_memory<T: Scalar>(
    memory: &ExemplarMemory<T>,
    new_classes: &ClassPools<T>,
    seed: u64,
) -> Result<ExemplarMemory<T>> {
    if let Some(c) = new_classes.keys().find(|c| memory.per_class.contains_key(c)) {
        return Err(Error::input(format!("class {c} is already stored in memory")));
    }
    check_labels(new_classes)?;
    let total = memory.per_class.len() + new_classes.len();
    check_budget(memory.budget, total)?;
    let q = quota(memory.budget, total);

    let mut per_class = BTreeMap::new();
    for (&class, stored) in &memory.per_class {
        per_class.insert(class, subset(stored, q, derive_seed(seed, &[0, class as u64])));
    }
    for (&class, pool) in new_classes {
        per_class.insert(class, subset(pool, q, derive_seed(seed, &[1, class as u64])));
    }
    Ok(ExemplarMemory {
        budget: memory.budget,
        per_class,
    })
}

/// Class-balanced subset for fine-tuning: `m` samples of every old and new
/// class, where `m` is the per-class count held in memory (or the quota the
/// new classes alone would get when memory holds no class).
pub fn balanced_set<T: Scalar>(
    memory: &ExemplarMemory<T>,
    new_class_samples: &ClassPools<T>,
    seed: u64,
) -> Result<Vec<Sample<T>>> {
    if new_class_samples.is_empty() {
        return Err(Error::input("balanced set needs at least one new class"));
    }
    if let Some(c) = new_class_samples.keys().find(|c| memory.per_class.contains_key(c)) {
        return Err(Error::input(format!("class {c} is both stored and new")));
    }
    check_labels(new_class_samples)?;

    let m = match memory.per_class.values().map(Vec::len).min() {
        Some(min) => {
            if memory.per_class.values().any(|v| v.len() != min) {
                log::warn!("memory per-class counts are not uniform; balancing at {min}");
            }
            min
        }
        None => quota(memory.budget, new_class_samples.len()),
    };

    let mut out = Vec::with_capacity(m * (memory.n_classes() + new_class_samples.len()));
    for (&class, stored) in &memory.per_class {
        out.extend(subset(stored, m, derive_seed(seed, &[0, class as u64])));
    }
    for (&class, pool) in new_class_samples {
        if pool.len() < m {
            log::warn!(
                "class {class} has only {} samples for a balanced quota of {m}",
                pool.len()
            );
        }
        out.extend(subset(pool, m, derive_seed(seed, &[1, class as u64])));
    }
    Ok(out)
}
