use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tasks::TaskSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub sample_id: u64,
    pub true_label: usize,
    pub predicted_label: usize,
}

/// Predictions of one model (incremental or reference) after step `step` on
/// the test samples of every class seen so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionLog {
    pub step: usize,
    pub entries: Vec<LogEntry>,
}

pub const LOG_HEADER: &str = "sample_id,true_label,predicted_label";

impl PredictionLog {
    pub fn new(step: usize, entries: Vec<LogEntry>) -> Self {
        Self { step, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks ids are unique and both labels belong to the classes seen by
    /// step `self.step`.
    pub fn validate(&self, schedule: &TaskSchedule) -> Result<()> {
        if self.step == 0 || self.step > schedule.n_steps() {
            return Err(Error::input(format!(
                "log step {} outside 1..={}",
                self.step,
                schedule.n_steps()
            )));
        }
        let seen: HashSet<usize> = schedule.seen_classes(self.step).iter().copied().collect();
        let mut ids = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !ids.insert(e.sample_id) {
                return Err(Error::input(format!(
                    "sample {} logged twice at step {}",
                    e.sample_id, self.step
                )));
            }
            if !seen.contains(&e.true_label) || !seen.contains(&e.predicted_label) {
                return Err(Error::input(format!(
                    "sample {} has a label outside the classes seen at step {}",
                    e.sample_id, self.step
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * (self.entries.len() + 1));
        out.push_str(LOG_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.sample_id, e.true_label, e.predicted_label));
        }
        out
    }

    pub fn from_csv(text: &str, step: usize, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse(origin, 1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != LOG_HEADER {
            return Err(Error::parse(origin, 1, format!("expected header `{LOG_HEADER}`")));
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                Error::parse(origin, e.position().map_or(0, |p| p.line()), e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 3 {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("expected 3 fields, found {}", record.len()),
                ));
            }
            let field = |i: usize| -> Result<u64> {
                record[i].trim().parse().map_err(|_| {
                    Error::parse(origin, line, format!("bad integer `{}`", &record[i]))
                })
            };
            entries.push(LogEntry {
                sample_id: field(0)?,
                true_label: field(1)? as usize,
                predicted_label: field(2)? as usize,
            });
        }
        Ok(Self { step, entries })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read_csv(path: &Path, step: usize) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::from_csv(&text, step, path)
    }

    /// Accuracy per true class.
    pub fn classwise_accuracy(&self) -> BTreeMap<usize, f64> {
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for e in &self.entries {
            let c = counts.entry(e.true_label).or_default();
            c.1 += 1;
            if e.true_label == e.predicted_label {
                c.0 += 1;
            }
        }
        counts
            .into_iter()
            .map(|(class, (hit, n))| (class, hit as f64 / n as f64))
            .collect()
    }
}
