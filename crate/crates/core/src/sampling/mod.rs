//! Mini-batch DropOut Sampling, exemplar memory and balanced fine-tuning sets.

mod dos;
mod memory;

use std::path::Path;

pub use dos::{dos_filter, dropout_count, AnnotatedBatch, DosParams};
pub use memory::{balanced_set, rebalance_memory, reserve_memory, ClassPools, ExemplarMemory};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::Scalar;

/// One labelled datapoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: u64,
    pub features: Vec<T>,
    pub label: usize,
}

impl<T> Sample<T> {
    pub fn new(id: u64, features: Vec<T>, label: usize) -> Self {
        Self {
            id,
            features,
            label,
        }
    }
}

/// Groups samples by label.
pub fn pools_by_class<'a, T: Scalar>(
    samples: impl IntoIterator<Item = &'a Sample<T>>,
) -> ClassPools<T> {
    let mut pools = ClassPools::new();
    for s in samples {
        pools.entry(s.label).or_insert_with(Vec::new).push(s.clone());
    }
    pools
}

/// Renders samples as `id,label,f0,...,f{d-1}` CSV.
pub fn samples_to_csv<T: Scalar>(samples: &[Sample<T>], dim: usize) -> Result<String> {
    let mut out = String::from("id,label");
    for j in 0..dim {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::input(format!(
                "sample {} has {} features, expected {dim}",
                s.id,
                s.features.len()
            )));
        }
        out.push_str(&format!("{},{}", s.id, s.label));
        for v in &s.features {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_samples_csv<T: Scalar>(path: &Path, samples: &[Sample<T>], dim: usize) -> Result<()> {
    write_atomic(path, samples_to_csv(samples, dim)?.as_bytes())
}

/// Parses dataset CSV text; `origin` names the source in error messages.
/// Returns the samples and the feature dimension.
pub fn parse_samples_csv<T: Scalar>(text: &str, origin: &Path) -> Result<(Vec<Sample<T>>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::parse(origin, 1, "expected header `id,label,f0,...`"));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::parse(origin, 1, format!("unexpected column `{name}`")));
        }
    }
    let dim = header.len() - 2;
    let mut samples = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::parse(
                origin,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let id: u64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad id `{}`", &record[0])))?;
        let label: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad label `{}`", &record[1])))?;
        let features = record
            .iter()
            .skip(2)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(T::of)
                    .ok_or_else(|| Error::parse(origin, line, format!("bad feature `{f}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        if !seen.insert(id) {
            return Err(Error::parse(origin, line, format!("duplicate sample id {id}")));
        }
        samples.push(Sample::new(id, features, label));
    }
    Ok((samples, dim))
}

pub fn read_samples_csv<T: Scalar>(path: &Path) -> Result<(Vec<Sample<T>>, usize)> {
    let text = crate::io::read_to_string(path)?;
    parse_samples_csv(&text, path)
}

impl<T: Scalar> ExemplarMemory<T> {
    /// Writes the stored exemplars in dataset CSV form.
    pub fn write_csv(&self, path: &Path, dim: usize) -> Result<()> {
        let samples: Vec<Sample<T>> = self.samples().cloned().collect();
        write_samples_csv(path, &samples, dim)
    }

    /// Restores a memory written by [`ExemplarMemory::write_csv`].
    pub fn read_csv(path: &Path, budget: usize) -> Result<Self> {
        let (samples, _) = read_samples_csv::<T>(path)?;
        ExemplarMemory::from_parts(budget, pools_by_class(&samples))
    }
}
