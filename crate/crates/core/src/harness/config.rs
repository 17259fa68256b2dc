//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! variants = ["full", "no_mer", "no_dos", "no_mer_no_dos"]
//!
//! [data]
//! source = "blobs"
//! n_classes = 10
//! samples_per_class = 100
//! dim = 2
//! separation = 2.0
//!
//! [tasks]
//! mode = "random"
//! group_size = 2
//!
//! [memory]
//! budget = 50
//! ```
//!
//! Every other section is optional and falls back to [`Default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ObjectiveConfig;
use crate::sampling::DosParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Blobs {
        n_classes: usize,
        samples_per_class: usize,
        dim: usize,
        separation: f64,
    },
    /// Dataset CSV files; without `test`, the train file is split 80/20.
    Csv {
        train: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Random,
    BestFirst,
    WorstFirst,
    /// Load a saved configuration from `tasks.file`.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TasksConfig {
    pub mode: TaskMode,
    pub group_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for TasksConfig {
    fn default() -> Self {
        Self {
            mode: TaskMode::Random,
            group_size: 2,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths (ReLU).
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub budget: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { budget: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DosConfig {
    pub enabled: bool,
    /// Random-removal phase length K; defaults to half the epochs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_phase_epochs: Option<usize>,
    pub clamp: bool,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            random_phase_epochs: None,
            clamp: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub enabled: bool,
    /// Defaults to 20% of the per-task epochs (at least one).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    pub lr_multiplier: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            epochs: None,
            lr_multiplier: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Defaults to the per-task epoch count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
}

/// Ablation variants: which of the entropy regularizer and DropOut Sampling
/// are active. `Custom` keeps whatever the configuration says.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoMer,
    NoDos,
    NoMerNoDos,
    Custom,
}

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [
        Variant::Full,
        Variant::NoMer,
        Variant::NoDos,
        Variant::NoMerNoDos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMer => "no_mer",
            Variant::NoDos => "no_dos",
            Variant::NoMerNoDos => "no_mer_no_dos",
            Variant::Custom => "custom",
        }
    }

    fn flags(self) -> Option<(bool, bool)> {
        match self {
            Variant::Full => Some((true, true)),
            Variant::NoMer => Some((false, true)),
            Variant::NoDos => Some((true, false)),
            Variant::NoMerNoDos => Some((false, false)),
            Variant::Custom => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Variant::Custom]
            .into_iter()
            .chain(Variant::ABLATIONS)
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Empty means a single `custom` run using the flags below.
    #[serde(default)]
    pub variants: Vec<Variant>,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub tasks: TasksConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub dos: DosConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig<f64>,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
            Error::parse(path, line, e.message().to_string())
        })?;
        // Relative data/task paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataConfig::Csv { train, test } = &mut cfg.data {
            *train = rebase(base, train);
            if let Some(t) = test {
                *t = rebase(base, t);
            }
        }
        if let Some(f) = &mut cfg.tasks.file {
            *f = rebase(base, f);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills the derived defaults (K, fine-tuning and reference epochs) and
    /// validates every numeric field.
    pub fn resolved(&self) -> Result<Self> {
        let mut cfg = self.clone();
        let epochs = cfg.training.epochs;
        cfg.dos.random_phase_epochs.get_or_insert(epochs / 2);
        cfg.finetune.epochs.get_or_insert((epochs / 5).max(1));
        cfg.reference.epochs.get_or_insert(epochs);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be >= 1"));
        }
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        if self.tasks.group_size == 0 {
            return Err(Error::config("group_size must be >= 1"));
        }
        if self.tasks.mode == TaskMode::Pinned && self.tasks.file.is_none() {
            return Err(Error::config("tasks.mode = \"pinned\" needs tasks.file"));
        }
        if !(self.finetune.lr_multiplier.is_finite() && self.finetune.lr_multiplier > 0.0) {
            return Err(Error::config("finetune.lr_multiplier must be > 0"));
        }
        if self.finetune.epochs == Some(0) || self.reference.epochs == Some(0) {
            return Err(Error::config("fine-tuning and reference epochs must be >= 1"));
        }
        self.objective.validate()?;
        if let DataConfig::Blobs {
            n_classes,
            samples_per_class,
            dim,
            separation,
        } = self.data
        {
            if n_classes == 0 || samples_per_class < 2 || dim == 0 {
                return Err(Error::config(
                    "blobs need n_classes >= 1, samples_per_class >= 2 and dim >= 1",
                ));
            }
            if !(separation.is_finite() && separation >= 0.0) {
                return Err(Error::config("separation must be >= 0"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(v) = self.variants.iter().find(|v| !seen.insert(**v)) {
            return Err(Error::config(format!("variant `{}` listed twice", v.name())));
        }
        Ok(())
    }

    /// Variants to run, in order.
    pub fn variant_list(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant::Custom]
        } else {
            self.variants.clone()
        }
    }

    /// This configuration with a variant's ablation flags applied.
    pub fn for_variant(&self, variant: Variant) -> Self {
        let mut cfg = self.clone();
        if let Some((mer, dos)) = variant.flags() {
            cfg.objective.mer_enabled = mer;
            cfg.dos.enabled = dos;
        }
        cfg.variants = vec![variant];
        cfg
    }

    pub fn dos_params(&self) -> DosParams {
        DosParams {
            random_phase_epochs: self
                .dos
                .random_phase_epochs
                .unwrap_or(self.training.epochs / 2),
            clamp: self.dos.clamp,
        }
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
