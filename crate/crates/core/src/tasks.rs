//! Task configurations (ordered, disjoint class groups) and the incremental
//! schedule derived from them.
//!
//! Steps are 1-based: step `k` introduces group `k`, its old classes are the
//! union of groups `1..k-1`, and the model is evaluated on all classes seen
//! through step `k`. Output units of the growing head are assigned in arrival
//! order, so group `k` occupies a contiguous unit range.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrder {
    BestFirst,
    WorstFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfiguration {
    group_size: usize,
    groups: Vec<Vec<usize>>,
}

impl TaskConfiguration {
    /// Validates that `groups` partition `0..n` into chunks of `group_size`
    /// (only the last may be smaller).
    pub fn new(groups: Vec<Vec<usize>>, group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::config("group size must be positive"));
        }
        if groups.is_empty() {
            return Err(Error::config("task configuration has no groups"));
        }
        let last = groups.len() - 1;
        for (i, g) in groups.iter().enumerate() {
            let ok = if i == last {
                !g.is_empty() && g.len() <= group_size
            } else {
                g.len() == group_size
            };
            if !ok {
                return Err(Error::config(format!(
                    "group {} has {} classes, expected {group_size}",
                    i + 1,
                    g.len()
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for &c in groups.iter().flatten() {
            if !seen.insert(c) {
                return Err(Error::config(format!("class {c} appears in more than one group")));
            }
        }
        let n = seen.len();
        if seen.iter().next_back() != Some(&(n - 1)) {
            return Err(Error::config(format!(
                "groups must cover classes 0..{n} exactly"
            )));
        }
        if n % group_size == 0 && groups[last].len() != group_size {
            return Err(Error::config("only a non-divisible universe may end with a short group"));
        }
        Ok(Self { group_size, groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn n_classes(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn n_steps(&self) -> usize {
        self.groups.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            group_size: usize,
            groups: Vec<Vec<usize>>,
        }
        let raw: Raw = serde_json::from_str(text)
            .map_err(|e| Error::input(format!("malformed task configuration: {e}")))?;
        Self::new(raw.groups, raw.group_size)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Input(msg) | Error::Config(msg) => Error::parse(path, 1, msg),
            other => other,
        })
    }
}

fn chunk(order: Vec<usize>, group_size: usize) -> Result<TaskConfiguration> {
    let groups = order.chunks(group_size).map(<[usize]>::to_vec).collect();
    TaskConfiguration::new(groups, group_size)
}

fn check_sizes(n_classes: usize, group_size: usize) -> Result<()> {
    if group_size == 0 || n_classes == 0 || group_size > n_classes {
        return Err(Error::config(format!(
            "need n_classes >= group_size >= 1, got {n_classes} and {group_size}"
        )));
    }
    Ok(())
}

/// Seeded uniform permutation of `0..n_classes`, chunked into groups.
pub fn random_configuration(n_classes: usize, group_size: usize, seed: u64) -> Result<TaskConfiguration> {
    check_sizes(n_classes, group_size)?;
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.shuffle(&mut rng_from_seed(seed));
    chunk(order, group_size)
}

/// Classes ordered by accuracy (descending for best-first, ascending for
/// worst-first; ties by ascending class index), chunked into groups.
pub fn sorted_configuration(
    classwise_accuracy: &BTreeMap<usize, f64>,
    group_size: usize,
    order: TaskOrder,
) -> Result<TaskConfiguration> {
    let n = classwise_accuracy.len();
    check_sizes(n, group_size)?;
    if classwise_accuracy.keys().next_back() != Some(&(n - 1)) {
        let missing = (0..n).find(|c| !classwise_accuracy.contains_key(c)).unwrap_or(n);
        return Err(Error::input(format!("no accuracy for class {missing}")));
    }
    if let Some((c, a)) = classwise_accuracy
        .iter()
        .find(|(_, &a)| !(0.0..=1.0).contains(&a))
    {
        return Err(Error::input(format!("accuracy {a} of class {c} outside [0, 1]")));
    }
    let mut classes: Vec<usize> = (0..n).collect();
    classes.sort_by(|&a, &b| {
        let (x, y) = (classwise_accuracy[&a], classwise_accuracy[&b]);
        let by_acc = match order {
            TaskOrder::BestFirst => y.total_cmp(&x),
            TaskOrder::WorstFirst => x.total_cmp(&y),
        };
        by_acc.then(a.cmp(&b))
    });
    chunk(classes, group_size)
}

/// Per-step old/new/seen class sets and the class-to-output-unit mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSchedule {
    config: TaskConfiguration,
    /// Classes in arrival order; position = output unit.
    unit_order: Vec<usize>,
    unit_of_class: BTreeMap<usize, usize>,
    group_of_class: BTreeMap<usize, usize>,
    /// `offsets[k-1]..offsets[k]` are the units of group `k`.
    offsets: Vec<usize>,
}

pub fn build_schedule(cfg: &TaskConfiguration) -> TaskSchedule {
    let unit_order: Vec<usize> = cfg.groups.iter().flatten().copied().collect();
    let unit_of_class = unit_order.iter().enumerate().map(|(u, &c)| (c, u)).collect();
    let group_of_class = cfg
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, classes)| classes.iter().map(move |&c| (c, g + 1)))
        .collect();
    let mut offsets = vec![0];
    for g in &cfg.groups {
        offsets.push(offsets.last().unwrap() + g.len());
    }
    TaskSchedule {
        config: cfg.clone(),
        unit_order,
        unit_of_class,
        group_of_class,
        offsets,
    }
}

impl TaskSchedule {
    pub fn config(&self) -> &TaskConfiguration {
        &self.config
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps()
    }

    pub fn n_classes(&self) -> usize {
        self.unit_order.len()
    }

    fn check_step(&self, k: usize) {
        assert!(
            (1..=self.n_steps()).contains(&k),
            "step {k} outside 1..={}",
            self.n_steps()
        );
    }

    /// Classes of group `k`.
    pub fn new_classes(&self, k: usize) -> &[usize] {
        self.check_step(k);
        &self.config.groups[k - 1]
    }

    /// Union of groups `1..k-1`, in arrival order.
    pub fn old_classes(&self, k: usize) -> &[usize] {
        self.check_step(k);
        &self.unit_order[..self.offsets[k - 1]]
    }

    /// Union of groups `1..=k`, in arrival order.
    pub fn seen_classes(&self, k: usize) -> &[usize] {
        self.check_step(k);
        &self.unit_order[..self.offsets[k]]
    }

    /// Class represented by each output unit, for a model at step `k`.
    pub fn units(&self, k: usize) -> &[usize] {
        self.seen_classes(k)
    }

    pub fn unit_of(&self, class: usize) -> Option<usize> {
        self.unit_of_class.get(&class).copied()
    }

    /// 1-based step at which `class` is introduced.
    pub fn step_of(&self, class: usize) -> Option<usize> {
        self.group_of_class.get(&class).copied()
    }

    /// Output units of group `k`.
    pub fn group_units(&self, k: usize) -> Vec<usize> {
        self.check_step(k);
        (self.offsets[k - 1]..self.offsets[k]).collect()
    }

    /// Output units of every group before step `k`, one list per group.
    pub fn past_group_units(&self, k: usize) -> Vec<Vec<usize>> {
        (1..k).map(|j| self.group_units(j)).collect()
    }
}
