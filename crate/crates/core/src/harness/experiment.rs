//! End-to-end incremental training, reference models and on-disk artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::config::{DataConfig, ExperimentConfig, TaskMode, Variant};
use super::data::{generate_blobs, stratified_split, Dataset};
use crate::error::{Error, Result, StageContext};
use crate::io::write_atomic;
use crate::losses::ObjectiveConfig;
use crate::metrics::{compute_metric_report, LogEntry, MetricReport, PredictionLog};
use crate::nncore::{
    init_model, log_softmax, mlp_arch, train_step, ClassifierModel, MiniBatch, OptimizerState,
    TeacherSnapshot,
};
use crate::sampling::{
    balanced_set, dos_filter, pools_by_class, read_samples_csv, rebalance_memory, AnnotatedBatch,
    ExemplarMemory, Sample,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::tasks::{
    build_schedule, random_configuration, sorted_configuration, TaskConfiguration, TaskOrder,
    TaskSchedule,
};

// Seed-derivation tags; one per randomized component.
const TAG_DATA: u64 = 1;
const TAG_TASKS: u64 = 2;
const TAG_REFERENCE: u64 = 3;
const TAG_INIT: u64 = 4;
const TAG_EXPAND: u64 = 5;
const TAG_SHUFFLE: u64 = 6;
const TAG_DOS: u64 = 7;
const TAG_MEMORY: u64 = 8;
const TAG_BALANCED: u64 = 9;
const TAG_FINETUNE: u64 = 10;

/// File holding the incremental model's predictions after step `k`.
pub fn incremental_log_name(k: usize) -> String {
    format!("incremental_step{k}.csv")
}

pub fn reference_log_name(k: usize) -> String {
    format!("reference_step{k}.csv")
}

pub const TASKS_FILE: &str = "tasks.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Loads or generates the dataset described by the configuration.
pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset<f64>> {
    match &cfg.data {
        DataConfig::Blobs {
            n_classes,
            samples_per_class,
            dim,
            separation,
        } => {
            let (train, test) = generate_blobs(
                *n_classes,
                *samples_per_class,
                *dim,
                *separation,
                derive_seed(seed, &[TAG_DATA]),
            )?;
            Dataset::new(train, test, *dim)
        }
        DataConfig::Csv { train, test } => {
            let (train_samples, dim) = read_samples_csv::<f64>(train)?;
            let (train_samples, test_samples) = match test {
                Some(path) => {
                    let (t, d) = read_samples_csv::<f64>(path)?;
                    if d != dim {
                        return Err(Error::input(format!(
                            "{} has {d} features but {} has {dim}",
                            path.display(),
                            train.display()
                        )));
                    }
                    (train_samples, t)
                }
                None => stratified_split(train_samples, derive_seed(seed, &[TAG_DATA])),
            };
            Dataset::new(train_samples, test_samples, dim)
        }
    }
}

/// Optimization settings shared by incremental and reference training.
#[derive(Debug, Clone, Copy)]
struct Sgd {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
}

fn feature_matrix(samples: &[&Sample<f64>], dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((samples.len(), dim));
    for (i, s) in samples.iter().enumerate() {
        for (j, &v) in s.features.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    x
}

fn units_for(samples: &[&Sample<f64>], unit_of: &BTreeMap<usize, usize>) -> Vec<usize> {
    samples.iter().map(|s| unit_of[&s.label]).collect()
}

/// Predictions of `model` on `test`, with output units mapped back to classes.
fn evaluate(
    model: &ClassifierModel<f64>,
    test: &[&Sample<f64>],
    unit_classes: &[usize],
    dim: usize,
    step: usize,
) -> Result<PredictionLog> {
    let predicted = model.predict(feature_matrix(test, dim).view())?;
    Ok(PredictionLog::new(
        step,
        test.iter()
            .zip(predicted)
            .map(|(s, u)| LogEntry {
                sample_id: s.id,
                true_label: s.label,
                predicted_label: unit_classes[u],
            })
            .collect(),
    ))
}

/// A reference model trained from scratch on every class it covers.
#[derive(Debug, Clone)]
pub struct ReferenceOutcome {
    pub model: ClassifierModel<f64>,
    pub classwise_accuracy: BTreeMap<usize, f64>,
    pub log: PredictionLog,
}

/// Trains a model from scratch with plain cross-entropy on all training
/// samples of `classes` (output unit `u` is `classes[u]`), then evaluates it
/// on their test samples. The returned log is tagged with `step`.
pub fn train_reference(
    data: &Dataset<f64>,
    classes: &[usize],
    hidden: &[usize],
    training: &super::config::TrainingConfig,
    epochs: usize,
    seed: u64,
    step: usize,
) -> Result<ReferenceOutcome> {
    let wanted: BTreeSet<usize> = classes.iter().copied().collect();
    let train: Vec<&Sample<f64>> = data.train.iter().filter(|s| wanted.contains(&s.label)).collect();
    let test: Vec<&Sample<f64>> = data.test.iter().filter(|s| wanted.contains(&s.label)).collect();
    let present: BTreeSet<usize> = train.iter().map(|s| s.label).collect();
    if let Some(missing) = wanted.difference(&present).next() {
        return Err(Error::input(format!("no training data for class {missing}")));
    }
    let unit_of: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(u, &c)| (c, u)).collect();
    let mut model = init_model(
        &mlp_arch(data.dim, hidden, classes.len()),
        derive_seed(seed, &[TAG_INIT]),
    )?;
    let sgd = Sgd {
        epochs,
        batch_size: training.batch_size,
        learning_rate: training.learning_rate,
        momentum: training.momentum,
    };
    let plain = ObjectiveConfig {
        alpha: 0.0,
        ..Default::default()
    };
    let mut opt = OptimizerState::new(&model, sgd.learning_rate, sgd.momentum)?;
    for epoch in 1..=sgd.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(seed, &[TAG_SHUFFLE, epoch as u64])));
        for chunk in order.chunks(sgd.batch_size) {
            let batch: Vec<&Sample<f64>> = chunk.iter().map(|&i| train[i]).collect();
            let x = feature_matrix(&batch, data.dim);
            let labels = units_for(&batch, &unit_of);
            train_step(
                &mut model,
                &MiniBatch {
                    features: x.view(),
                    labels: &labels,
                },
                &plain,
                None,
                &[],
                &mut opt,
            )?;
        }
    }
    let log = evaluate(&model, &test, classes, data.dim, step)?;
    Ok(ReferenceOutcome {
        classwise_accuracy: log.classwise_accuracy(),
        model,
        log,
    })
}

/// Everything one incremental run (one variant) produced.
#[derive(Debug, Clone)]
pub struct IncrementalOutcome {
    pub logs: Vec<PredictionLog>,
    pub checkpoints: Vec<ClassifierModel<f64>>,
    pub memories: Vec<ExemplarMemory<f64>>,
    /// Step index of the teacher used while training each step (`None` at step 1).
    pub teacher_steps: Vec<Option<usize>>,
}

fn ce_per_sample(
    model: &ClassifierModel<f64>,
    batch: &[&Sample<f64>],
    unit_of: &BTreeMap<usize, usize>,
    dim: usize,
) -> Result<Vec<f64>> {
    let logits = model.forward(feature_matrix(batch, dim).view())?;
    batch
        .iter()
        .zip(logits.outer_iter())
        .map(|(s, row)| {
            let lq = log_softmax(row.as_slice().expect("standard layout"))?;
            Ok(-lq[unit_of[&s.label]])
        })
        .collect()
}

/// Runs the incremental learner over every step of `schedule` with the
/// objective, DOS and fine-tuning settings of `cfg` (a resolved config).
pub fn run_incremental(
    cfg: &ExperimentConfig,
    data: &Dataset<f64>,
    schedule: &TaskSchedule,
    seed: u64,
) -> Result<IncrementalOutcome> {
    let dim = data.dim;
    let sgd = Sgd {
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        learning_rate: cfg.training.learning_rate,
        momentum: cfg.training.momentum,
    };
    let dos = cfg.dos_params();
    let objective = cfg.objective;
    let unit_of: BTreeMap<usize, usize> = schedule
        .seen_classes(schedule.n_steps())
        .iter()
        .enumerate()
        .map(|(u, &c)| (c, u))
        .collect();

    let mut model: Option<ClassifierModel<f64>> = None;
    let mut teacher: Option<TeacherSnapshot<f64>> = None;
    let mut memory = ExemplarMemory::empty(cfg.memory.budget);
    let mut out = IncrementalOutcome {
        logs: Vec::new(),
        checkpoints: Vec::new(),
        memories: Vec::new(),
        teacher_steps: Vec::new(),
    };

    for k in 1..=schedule.n_steps() {
        let new_classes = schedule.new_classes(k);
        let mut m = match model.take() {
            None => init_model(
                &mlp_arch(dim, &cfg.model.hidden, new_classes.len()),
                derive_seed(seed, &[TAG_INIT]),
            )
            .stage(format!("step {k}: init"))?,
            Some(prev) => prev
                .expand_head(new_classes.len(), derive_seed(seed, &[TAG_EXPAND, k as u64]))
                .stage(format!("step {k}: expand head"))?,
        };
        let past = schedule.past_group_units(k);
        let old: BTreeSet<usize> = schedule.old_classes(k).iter().copied().collect();
        let new_train: Vec<&Sample<f64>> = data.train_of(new_classes).collect();
        let train_set: Vec<&Sample<f64>> = memory.samples().chain(new_train.iter().copied()).collect();
        let teacher_ref = if past.is_empty() { None } else { teacher.as_ref() };
        out.teacher_steps.push(teacher_ref.map(|t| t.step_index()));

        let mut opt = OptimizerState::new(&m, sgd.learning_rate, sgd.momentum)?;
        for epoch in 1..=sgd.epochs {
            let mut order: Vec<usize> = (0..train_set.len()).collect();
            order.shuffle(&mut rng_from_seed(derive_seed(
                seed,
                &[TAG_SHUFFLE, k as u64, epoch as u64],
            )));
            for (b, chunk) in order.chunks(sgd.batch_size).enumerate() {
                let mut batch: Vec<&Sample<f64>> = chunk.iter().map(|&i| train_set[i]).collect();
                if cfg.dos.enabled && k >= 2 {
                    let owned: Vec<Sample<f64>> = batch.iter().map(|&s| s.clone()).collect();
                    let mut annotated = AnnotatedBatch::new(owned, &old);
                    if epoch > dos.random_phase_epochs {
                        let ce = ce_per_sample(&m, &batch, &unit_of, dim)
                            .stage(format!("step {k}: curriculum CE"))?;
                        annotated = annotated.with_ce(ce)?;
                    }
                    let filtered = dos_filter(
                        &annotated,
                        epoch,
                        &dos,
                        derive_seed(seed, &[TAG_DOS, k as u64, epoch as u64, b as u64]),
                    )
                    .stage(format!("step {k}: dropout sampling"))?;
                    let kept: BTreeSet<u64> = filtered.samples.iter().map(|s| s.id).collect();
                    batch.retain(|s| kept.contains(&s.id));
                }
                if batch.is_empty() {
                    continue;
                }
                let x = feature_matrix(&batch, dim);
                let labels = units_for(&batch, &unit_of);
                train_step(
                    &mut m,
                    &MiniBatch {
                        features: x.view(),
                        labels: &labels,
                    },
                    &objective,
                    teacher_ref,
                    &past,
                    &mut opt,
                )
                .stage(format!("step {k}: train epoch {epoch}"))?;
            }
        }

        if cfg.finetune.enabled && k >= 2 {
            let pools = pools_by_class(new_train.iter().copied());
            let balanced = balanced_set(&memory, &pools, derive_seed(seed, &[TAG_BALANCED, k as u64]))
                .stage(format!("step {k}: balanced set"))?;
            let lr = sgd.learning_rate * cfg.finetune.lr_multiplier;
            let mut opt = OptimizerState::new(&m, lr, sgd.momentum)?;
            let epochs = cfg.finetune.epochs.unwrap_or(1);
            for epoch in 1..=epochs {
                let mut order: Vec<usize> = (0..balanced.len()).collect();
                order.shuffle(&mut rng_from_seed(derive_seed(
                    seed,
                    &[TAG_FINETUNE, k as u64, epoch as u64],
                )));
                for chunk in order.chunks(sgd.batch_size) {
                    let batch: Vec<&Sample<f64>> = chunk.iter().map(|&i| &balanced[i]).collect();
                    let x = feature_matrix(&batch, dim);
                    let labels = units_for(&batch, &unit_of);
                    train_step(
                        &mut m,
                        &MiniBatch {
                            features: x.view(),
                            labels: &labels,
                        },
                        &objective,
                        teacher_ref,
                        &past,
                        &mut opt,
                    )
                    .stage(format!("step {k}: balanced fine-tuning"))?;
                }
            }
        }

        teacher = Some(m.snapshot(k));
        let pools = pools_by_class(new_train.iter().copied());
        memory = rebalance_memory(&memory, &pools, derive_seed(seed, &[TAG_MEMORY, k as u64]))
            .stage(format!("step {k}: memory update"))?;
        if memory.len() > memory.budget() {
            return Err(Error::Stage {
                stage: format!("step {k}: memory update"),
                source: Box::new(Error::input("memory exceeds its budget")),
            });
        }

        let test: Vec<&Sample<f64>> = data.test_of(schedule.seen_classes(k)).collect();
        let log = evaluate(&m, &test, schedule.units(k), dim, k).stage(format!("step {k}: evaluate"))?;
        out.logs.push(log);
        out.checkpoints.push(m.clone());
        out.memories.push(memory.clone());
        model = Some(m);
    }
    Ok(out)
}

/// Metric report and artifacts of one variant.
#[derive(Debug, Clone)]
pub struct VariantReport {
    pub variant: Variant,
    pub report: MetricReport,
    pub outcome: IncrementalOutcome,
    pub config: ExperimentConfig,
    pub directory: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub task_configuration: TaskConfiguration,
    pub reference_logs: Vec<PredictionLog>,
    pub variants: Vec<VariantReport>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }

    /// `method,accuracy,A,F,I,SDF,SDI,SDF_avg,SDI_avg`, one row per variant.
    pub fn summary_csv(&self) -> String {
        let mut out = format!("method,{}\n", crate::metrics::REPORT_HEADER);
        for v in &self.variants {
            out.push_str(&format!("{},{}\n", v.variant.name(), v.report.summary_row()));
        }
        out
    }
}

fn resolve_tasks(
    cfg: &ExperimentConfig,
    data: &Dataset<f64>,
    seed: u64,
) -> Result<(TaskConfiguration, Option<BTreeMap<usize, f64>>)> {
    let group_size = cfg.tasks.group_size;
    let order = match cfg.tasks.mode {
        TaskMode::Random => {
            let tc = random_configuration(data.n_classes, group_size, derive_seed(seed, &[TAG_TASKS]))?;
            return Ok((tc, None));
        }
        TaskMode::Pinned => {
            let path = cfg.tasks.file.as_ref().expect("validated");
            let tc = TaskConfiguration::load(path)?;
            if tc.n_classes() != data.n_classes {
                return Err(Error::config(format!(
                    "pinned configuration covers {} classes, dataset has {}",
                    tc.n_classes(),
                    data.n_classes
                )));
            }
            return Ok((tc, None));
        }
        TaskMode::BestFirst => TaskOrder::BestFirst,
        TaskMode::WorstFirst => TaskOrder::WorstFirst,
    };
    let all: Vec<usize> = (0..data.n_classes).collect();
    let full = train_reference(
        data,
        &all,
        &cfg.model.hidden,
        &cfg.training,
        cfg.reference.epochs.unwrap_or(cfg.training.epochs),
        derive_seed(seed, &[TAG_REFERENCE, 0]),
        1,
    )?;
    let tc = sorted_configuration(&full.classwise_accuracy, group_size, order)?;
    Ok((tc, Some(full.classwise_accuracy)))
}

/// Per-step reference logs `R_1..R_T`, each trained from scratch on `seen(k)`.
pub fn reference_logs(
    cfg: &ExperimentConfig,
    data: &Dataset<f64>,
    schedule: &TaskSchedule,
    seed: u64,
) -> Result<Vec<PredictionLog>> {
    (1..=schedule.n_steps())
        .map(|k| {
            train_reference(
                data,
                schedule.seen_classes(k),
                &cfg.model.hidden,
                &cfg.training,
                cfg.reference.epochs.unwrap_or(cfg.training.epochs),
                derive_seed(seed, &[TAG_REFERENCE, k as u64]),
                k,
            )
            .map(|r| r.log)
            .stage(format!("reference model, step {k}"))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn write_variant(dir: &Path, vr: &VariantReport, tasks: &TaskConfiguration, refs: &[PredictionLog], dim: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tasks.save(&dir.join(TASKS_FILE))?;
    write_text(&dir.join(RESOLVED_CONFIG_FILE), &vr.config.to_toml())?;
    for (i, log) in vr.outcome.logs.iter().enumerate() {
        log.write_csv(&dir.join(incremental_log_name(i + 1)))?;
    }
    for (i, log) in refs.iter().enumerate() {
        log.write_csv(&dir.join(reference_log_name(i + 1)))?;
    }
    for (i, (model, memory)) in vr.outcome.checkpoints.iter().zip(&vr.outcome.memories).enumerate() {
        model.save_checkpoint(&dir.join(format!("checkpoint_step{}.json", i + 1)))?;
        memory.write_csv(&dir.join(format!("memory_step{}.csv", i + 1)), dim)?;
    }
    vr.report.write_to(dir)
}

/// Runs every configured variant. `cfg.seed` must be set. When
/// `cfg.output_dir` is set, all artifacts are written there; an `INCOMPLETE`
/// marker stays in place if the run fails part way.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let cfg = cfg.resolved()?;
    let seed = cfg
        .seed
        .ok_or_else(|| Error::config("a master seed is required"))?;
    let out_dir = cfg.output_dir.clone();
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join(INCOMPLETE_MARKER), "run in progress or failed\n")?;
        write_text(&dir.join(RESOLVED_CONFIG_FILE), &cfg.to_toml())?;
    }

    let data = load_dataset(&cfg, seed).stage("load data")?;
    if cfg.memory.budget > 0 && cfg.memory.budget < data.n_classes {
        return Err(Error::config(format!(
            "memory budget {} is smaller than the {} classes",
            cfg.memory.budget, data.n_classes
        )))
        .stage("validate config");
    }
    let (tasks, classwise) = resolve_tasks(&cfg, &data, seed).stage("task configuration")?;
    let schedule = build_schedule(&tasks);
    let refs = reference_logs(&cfg, &data, &schedule, seed)?;

    if let Some(dir) = &out_dir {
        tasks.save(&dir.join(TASKS_FILE))?;
        if let Some(acc) = &classwise {
            let mut text = String::from("class,accuracy\n");
            for (c, a) in acc {
                text.push_str(&format!("{c},{a}\n"));
            }
            write_text(&dir.join("reference_classwise.csv"), &text)?;
        }
    }

    let mut variants = Vec::new();
    for variant in cfg.variant_list() {
        let vcfg = cfg.for_variant(variant);
        let stage = format!("variant {}", variant.name());
        let outcome = run_incremental(&vcfg, &data, &schedule, seed).stage(stage.clone())?;
        let report = compute_metric_report(&outcome.logs, &refs, &schedule).stage(stage.clone())?;
        let directory = out_dir.as_ref().map(|d| d.join(variant.name()));
        let vr = VariantReport {
            variant,
            report,
            outcome,
            config: vcfg,
            directory: directory.clone(),
        };
        if let Some(dir) = &directory {
            write_variant(dir, &vr, &tasks, &refs, data.dim).stage(stage)?;
        }
        variants.push(vr);
    }

    let report = ExperimentReport {
        config: cfg,
        task_configuration: tasks,
        reference_logs: refs,
        variants,
        output_dir: out_dir.clone(),
    };
    if let Some(dir) = &out_dir {
        write_text(&dir.join(SUMMARY_FILE), &report.summary_csv())?;
        let marker = dir.join(INCOMPLETE_MARKER);
        std::fs::remove_file(&marker).map_err(|e| Error::io(marker, e))?;
    }
    Ok(report)
}

/// Recomputes the metric report purely from a directory holding
/// `tasks.json`, `incremental_step{k}.csv` and `reference_step{k}.csv`.
pub fn compute_report(log_directory: &Path) -> Result<MetricReport> {
    let tasks = TaskConfiguration::load(&log_directory.join(TASKS_FILE))?;
    let schedule = build_schedule(&tasks);
    let mut incremental = Vec::new();
    let mut reference = Vec::new();
    for k in 1..=schedule.n_steps() {
        let inc_path = log_directory.join(incremental_log_name(k));
        if !inc_path.exists() {
            break;
        }
        incremental.push(PredictionLog::read_csv(&inc_path, k)?);
        reference.push(PredictionLog::read_csv(&log_directory.join(reference_log_name(k)), k)?);
    }
    if incremental.is_empty() {
        return Err(Error::input(format!(
            "no {} in {}",
            incremental_log_name(1),
            log_directory.display()
        )));
    }
    compute_metric_report(&incremental, &reference, &schedule)
}
