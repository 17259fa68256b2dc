//! Versioned JSON checkpoints: layer specs, row-major parameters, class count.
//! Floats are written in shortest round-trip form, so loading reproduces every
//! parameter bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{validate_arch, ClassifierModel, DenseLayer, LayerSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct LayerRecord<T> {
    spec: LayerSpec,
    weights: Vec<T>,
    bias: Vec<T>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct CheckpointRecord<T> {
    version: u32,
    n_classes: usize,
    rng_seed: u64,
    layers: Vec<LayerRecord<T>>,
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn to_checkpoint_json(&self) -> String {
        let record = CheckpointRecord {
            version: CHECKPOINT_VERSION,
            n_classes: self.n_classes(),
            rng_seed: self.rng_seed,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    spec: l.spec,
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&record).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let record: CheckpointRecord<T> = serde_json::from_str(text)
            .map_err(|e| Error::input(format!("malformed checkpoint: {e}")))?;
        if record.version != CHECKPOINT_VERSION {
            return Err(Error::input(format!(
                "unsupported checkpoint version {}",
                record.version
            )));
        }
        let arch: Vec<LayerSpec> = record.layers.iter().map(|l| l.spec).collect();
        validate_arch(&arch)?;
        let mut layers = Vec::with_capacity(record.layers.len());
        for l in record.layers {
            let weights = Array2::from_shape_vec((l.spec.output_dim, l.spec.input_dim), l.weights)
                .map_err(|e| Error::input(format!("checkpoint weight shape: {e}")))?;
            if l.bias.len() != l.spec.output_dim {
                return Err(Error::input("checkpoint bias length mismatch"));
            }
            layers.push(DenseLayer {
                spec: l.spec,
                weights,
                bias: Array1::from(l.bias),
            });
        }
        let model = ClassifierModel {
            layers,
            rng_seed: record.rng_seed,
        };
        if model.n_classes() != record.n_classes {
            return Err(Error::input("checkpoint n_classes disagrees with final layer"));
        }
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_checkpoint_json().as_bytes())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}
