use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use medic::harness::{
    compute_report, generate_blobs, run_experiment, ExperimentConfig, TaskMode, Variant,
};
use medic::io::write_atomic;
use medic::sampling::write_samples_csv;
use medic::tasks::{random_configuration, sorted_configuration, TaskOrder};
use medic::{Error, Result};

#[derive(Parser)]
#[command(name = "medic", version, about = "Class-incremental learning experiments and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-blob dataset as train.csv / test.csv.
    GenData(GenDataArgs),
    /// Run a full experiment from a config file.
    Run(Box<RunArgs>),
    /// Recompute the metric report from a directory of prediction logs.
    Metrics(MetricsArgs),
    /// Emit a task configuration (class groups) as JSON.
    Tasks(TasksArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n_classes: usize,
    #[arg(long, default_value_t = 100)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Random,
    BestFirst,
    WorstFirst,
    Pinned,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; determines data, tasks, initialization and sampling.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated: full, no_mer, no_dos, no_mer_no_dos, custom.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    task_mode: Option<ModeArg>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    tasks_file: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    no_mer: bool,
    #[arg(long)]
    no_dos: bool,
    /// Random-phase length K of DropOut Sampling.
    #[arg(long)]
    dos_k: Option<usize>,
    #[arg(long)]
    dos_clamp: bool,
    #[arg(long)]
    no_finetune: bool,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    finetune_lr_multiplier: Option<f64>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory with tasks.json and incremental/reference step logs.
    #[arg(long)]
    dir: PathBuf,
    /// Also write report.csv / report_trace.csv / report.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Random,
    BestFirst,
    WorstFirst,
}

#[derive(Args)]
struct TasksArgs {
    #[arg(long)]
    group_size: usize,
    #[arg(long, value_enum, default_value = "random")]
    order: OrderArg,
    /// Needed for random order.
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `class,accuracy` CSV for best/worst-first order.
    #[arg(long)]
    accuracies: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let (train, test) = generate_blobs::<f64>(
        args.n_classes,
        args.samples_per_class,
        args.dim,
        args.separation,
        args.seed,
    )?;
    write_samples_csv(&args.out_dir.join("train.csv"), &train, args.dim)?;
    write_samples_csv(&args.out_dir.join("test.csv"), &test, args.dim)?;
    println!(
        "wrote {} train and {} test samples to {}",
        train.len(),
        test.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &RunArgs) -> Result<()> {
    cfg.seed = Some(a.seed);
    if let Some(d) = &a.output_dir {
        cfg.output_dir = Some(d.clone());
    }
    if let Some(vs) = &a.variants {
        cfg.variants = vs.iter().map(|s| s.parse::<Variant>()).collect::<Result<_>>()?;
    }
    if let Some(h) = &a.hidden {
        cfg.model.hidden = h.clone();
    }
    if let Some(m) = a.task_mode {
        cfg.tasks.mode = match m {
            ModeArg::Random => TaskMode::Random,
            ModeArg::BestFirst => TaskMode::BestFirst,
            ModeArg::WorstFirst => TaskMode::WorstFirst,
            ModeArg::Pinned => TaskMode::Pinned,
        };
    }
    if let Some(g) = a.group_size {
        cfg.tasks.group_size = g;
    }
    if let Some(f) = &a.tasks_file {
        cfg.tasks.file = Some(f.clone());
    }
    if let Some(b) = a.budget {
        cfg.memory.budget = b;
    }
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.training.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.training.learning_rate = lr;
    }
    if let Some(m) = a.momentum {
        cfg.training.momentum = m;
    }
    if let Some(al) = a.alpha {
        cfg.objective.alpha = al;
    }
    if let Some(t) = a.temperature {
        cfg.objective.temperature = t;
    }
    if a.no_mer {
        cfg.objective.mer_enabled = false;
    }
    if a.no_dos {
        cfg.dos.enabled = false;
    }
    if let Some(k) = a.dos_k {
        cfg.dos.random_phase_epochs = Some(k);
    }
    if a.dos_clamp {
        cfg.dos.clamp = true;
    }
    if a.no_finetune {
        cfg.finetune.enabled = false;
    }
    if let Some(e) = a.finetune_epochs {
        cfg.finetune.epochs = Some(e);
    }
    if let Some(m) = a.finetune_lr_multiplier {
        cfg.finetune.lr_multiplier = m;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    apply_overrides(&mut cfg, &args)?;
    if cfg.output_dir.is_none() {
        return Err(Error::Config(
            "no output directory: set output_dir in the config or pass --output-dir".into(),
        ));
    }
    let report = run_experiment(&cfg)?;
    if let Some(dir) = &report.output_dir {
        let source = std::fs::read(&args.config).map_err(|e| Error::Io {
            path: args.config.clone(),
            source: e,
        })?;
        write_atomic(&dir.join("config.source.toml"), &source)?;
    }
    print!("{}", report.summary_csv());
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let report = compute_report(&args.dir)?;
    if let Some(out) = &args.out_dir {
        report.write_to(out)?;
    }
    print!("{}", report.to_csv());
    Ok(())
}

fn read_accuracies(path: &Path) -> Result<BTreeMap<usize, f64>> {
    let text = medic::io::read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_error(path, 1, e.to_string()))?;
    if header.iter().map(str::trim).ne(["class", "accuracy"]) {
        return Err(parse_error(path, 1, "expected header `class,accuracy`".into()));
    }
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<(usize, f64)>() {
        let (class, accuracy) = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        out.insert(class, accuracy);
    }
    Ok(out)
}

fn parse_error(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message,
    }
}

fn tasks(args: TasksArgs) -> Result<()> {
    let cfg = match args.order {
        OrderArg::Random => {
            let n = args
                .n_classes
                .ok_or_else(|| Error::Config("--n-classes is required for random order".into()))?;
            let seed = args
                .seed
                .ok_or_else(|| Error::Config("--seed is required for random order".into()))?;
            random_configuration(n, args.group_size, seed)?
        }
        OrderArg::BestFirst | OrderArg::WorstFirst => {
            let path = args.accuracies.as_ref().ok_or_else(|| {
                Error::Config("--accuracies is required for sorted orders".into())
            })?;
            let order = match args.order {
                OrderArg::BestFirst => TaskOrder::BestFirst,
                _ => TaskOrder::WorstFirst,
            };
            sorted_configuration(&read_accuracies(path)?, args.group_size, order)?
        }
    };
    match &args.out {
        Some(path) => cfg.save(path)?,
        None => print!("{}", cfg.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(*a),
        Command::Metrics(a) => metrics(a),
        Command::Tasks(a) => tasks(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
