use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use metaod_core::data::{
    load_corpus, load_csv, write_testbed, Corpus, FoldAssignment, TestbedConfig,
};
use metaod_core::eval::{default_methods, parse_methods, run_cv, CvConfig, CvInputs, Method};
use metaod_core::metafeatures::stack;
use metaod_core::metalearner::{self, extract_corpus, select_model, train_from_parts};
use metaod_core::perf_io::{
    build_performance_matrix_resumable, journal_path, read_performance_csv, write_performance_csv,
};
use metaod_core::rankmf::PerformanceMatrix;
use metaod_core::{enumerate_model_set, Dataset, Error, TrainConfig};

#[derive(Parser, Debug)]
#[command(
    name = "metaod",
    version,
    about = "Single-shot outlier-detection model selection"
)]
struct Cli {
    /// Base seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for scoring and extraction.
    #[arg(long, global = true, env = "METAOD_THREADS")]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic motherset/childset testbed.
    GenTestbed(GenTestbedArgs),
    /// Build the performance matrix of a labeled corpus.
    BuildP(BuildPArgs),
    /// Train a meta-learner.
    Train(TrainArgs),
    /// Pick a model for one dataset.
    Select(SelectArgs),
    /// Cross-validate methods on a corpus.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenTestbedArgs {
    #[arg(long, default_value_t = 10)]
    mothersets: usize,
    #[arg(long, default_value_t = 5)]
    siblings: usize,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    dims: usize,
    /// Outlier frequency.
    #[arg(long, default_value_t = 0.05)]
    freq: f64,
    #[arg(long, default_value_t = 1.0)]
    clusteredness: f64,
    #[arg(long, default_value_t = 0.0)]
    irrelevant: f64,
    /// Number of folds; defaults to the sibling count.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CorpusArgs {
    /// Directory of CSV files, optionally with folds.json.
    #[arg(long)]
    corpus: PathBuf,
    /// Label column name; defaults to the manifest's or `is_outlier`.
    #[arg(long)]
    label_col: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct BuildPArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    /// Seeds averaged per randomized model.
    #[arg(long, default_value_t = 5)]
    trials: usize,
}

#[derive(Args, Debug, Serialize)]
struct OptimizerArgs {
    /// Latent dimension.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr_base: Option<f64>,
    #[arg(long)]
    lr_max: Option<f64>,
    /// Seeds averaged per randomized model when P is built here.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Precomputed performance matrix; built from the corpus when absent.
    #[arg(long)]
    p: Option<PathBuf>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[arg(long)]
    learner: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Column to drop before selection; its values are never read.
    #[arg(long)]
    label_col: Option<String>,
    /// Print the N best predicted models.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Poc,
    Loocv,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    p: Option<PathBuf>,
    /// Fold count for POC mode; siblings are dealt round-robin.
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated method names; all comparison methods by default.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Poc)]
    mode: Mode,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::FileNotFound(_) | Error::UnknownMethod(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    threads: usize,
    args: &'a T,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<&'a TrainConfig>,
}

fn print_config<T: Serialize>(cli: &Cli, command: &str, args: &T, train: Option<&TrainConfig>) {
    let resolved = Resolved {
        command,
        seed: cli.seed,
        threads: rayon::current_num_threads(),
        args,
        train,
    };
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(&resolved).unwrap_or_default()
    );
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenTestbed(a) => gen_testbed(cli, a),
        Command::BuildP(a) => build_p(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Select(a) => select(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
    }
}

fn gen_testbed(cli: &Cli, a: &GenTestbedArgs) -> CliResult<()> {
    print_config(cli, "gen-testbed", a, None);
    let cfg = TestbedConfig {
        n_mothersets: a.mothersets,
        siblings_per_motherset: a.siblings,
        samples_per_childset: a.samples,
        dims: a.dims,
        outlier_frequency: a.freq,
        clusteredness: a.clusteredness,
        irrelevant_feature_fraction: a.irrelevant,
        seed: cli.seed,
    };
    let manifest =
        write_testbed(&a.out, &cfg, a.folds.unwrap_or(a.siblings)).map_err(|e| match e {
            Error::InvalidConfig(m) => Failure::Usage(m),
            other => other.into(),
        })?;
    println!(
        "wrote {} datasets and folds.json to {}",
        manifest.datasets.len(),
        a.out.display()
    );
    Ok(())
}

fn load(args: &CorpusArgs) -> CliResult<Corpus> {
    Ok(load_corpus(&args.corpus, args.label_col.as_deref())?)
}

fn build_p(cli: &Cli, a: &BuildPArgs) -> CliResult<()> {
    print_config(cli, "build-p", a, None);
    let corpus = load(&a.corpus)?;
    let models = enumerate_model_set();
    let journal = journal_path(&a.out);
    let p = build_performance_matrix_resumable(
        &corpus.datasets,
        &models,
        a.trials,
        cli.seed,
        &journal,
    )?;
    write_performance_csv(&p, &a.out)?;
    std::fs::remove_file(&journal).map_err(Error::from)?;
    println!(
        "wrote {}x{} performance matrix to {}",
        p.n_datasets(),
        p.n_models(),
        a.out.display()
    );
    Ok(())
}

fn train_config(cli: &Cli, o: &OptimizerArgs) -> TrainConfig {
    let mut cfg = TrainConfig::default().with_seed(cli.seed);
    if let Some(k) = o.k {
        cfg.k = k;
    }
    if let Some(e) = o.epochs {
        cfg.optimizer.max_epochs = e;
    }
    if let Some(v) = o.alpha {
        cfg.optimizer.alpha = v;
    }
    if let Some(v) = o.lr_base {
        cfg.optimizer.lr_base = v;
    }
    if let Some(v) = o.lr_max {
        cfg.optimizer.lr_max = v;
    }
    if let Some(t) = o.trials {
        cfg.n_trials = t;
    }
    cfg
}

/// Reads `path` if given, else scores the corpus. Rows follow corpus order.
fn performance_for(
    cli: &Cli,
    corpus: &[Dataset],
    path: Option<&Path>,
    n_trials: usize,
) -> CliResult<PerformanceMatrix> {
    let models = enumerate_model_set();
    let p = match path {
        Some(path) => read_performance_csv(path)?,
        None => metalearner::build_performance_matrix(corpus, &models, n_trials, cli.seed)?,
    };
    let expected: Vec<String> = models.iter().map(|m| m.id()).collect();
    if p.model_ids != expected {
        return Err(Failure::Runtime(Error::InvalidConfig(
            "performance matrix columns do not match the model grid".into(),
        )));
    }
    let rows = corpus
        .iter()
        .map(|d| {
            p.dataset_ids
                .iter()
                .position(|id| id == d.name())
                .ok_or_else(|| {
                    Failure::Runtime(Error::InvalidConfig(format!(
                        "dataset {} has no row in the performance matrix",
                        d.name()
                    )))
                })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(p.select_rows(&rows))
}

fn train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(cli, &a.optimizer);
    print_config(cli, "train", a, Some(&cfg));
    if let Some(p) = &a.p {
        if !p.exists() {
            return Err(Failure::Usage(format!(
                "performance matrix {} not found",
                p.display()
            )));
        }
    }
    let corpus = load(&a.corpus)?;
    if let Some(d) = corpus.datasets.iter().find(|d| d.labels().is_none()) {
        return Err(Error::Unlabeled(d.name().to_owned()).into());
    }
    let p = performance_for(cli, &corpus.datasets, a.p.as_deref(), cfg.n_trials)?;
    let features = extract_corpus(&corpus.datasets, cfg.seed)?;
    let (learner, report) = train_from_parts(&stack(&features), &p, &enumerate_model_set(), &cfg)?;
    metalearner::save(&learner, &a.out)?;
    let report_path = PathBuf::from(format!("{}.report.json", a.out.display()));
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).map_err(Error::from)?,
    )
    .map_err(Error::from)?;
    println!(
        "trained k={} on {} datasets in {:.1}s; training regret {:.4} (global best {:.4}); wrote {}",
        report.k_used,
        p.n_datasets(),
        report.seconds,
        report.training_regret,
        report.global_best_regret,
        a.out.display()
    );
    Ok(())
}

fn select(cli: &Cli, a: &SelectArgs) -> CliResult<()> {
    print_config(cli, "select", a, None);
    let learner = metalearner::load(&a.learner)?;
    let data = load_csv(&a.data, a.label_col.as_deref())?.without_labels();
    let sel = select_model(&learner, &data, cli.seed)?;
    match a.top {
        Some(n) => {
            for (rank, j) in sel.top(n).into_iter().enumerate() {
                println!(
                    "{}\t{}\t{:.6}",
                    rank + 1,
                    learner.model_list[j].id(),
                    sel.predicted[j]
                );
            }
        }
        None => println!("{}", sel.chosen.id()),
    }
    Ok(())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult<()> {
    let methods: Vec<Method> = match &a.methods {
        Some(list) => parse_methods(list)?,
        None => default_methods(),
    };
    let train = train_config(cli, &a.optimizer);
    print_config(cli, "evaluate", a, Some(&train));
    let corpus = load(&a.corpus)?;
    let n = corpus.datasets.len();
    let groups = corpus
        .manifest
        .as_ref()
        .map(|m| m.folds().group_of_dataset.unwrap_or_default());
    let folds = match a.mode {
        Mode::Loocv => FoldAssignment {
            group_of_dataset: groups,
            ..FoldAssignment::leave_one_out(n)
        },
        Mode::Poc => {
            let manifest = corpus
                .manifest
                .as_ref()
                .ok_or_else(|| Failure::Usage("POC mode needs a corpus with folds.json".into()))?;
            match a.folds {
                Some(0) => return Err(Failure::Usage("--folds must be positive".into())),
                Some(k) => FoldAssignment {
                    n_folds: k,
                    fold_of_dataset: manifest.datasets.iter().map(|d| d.sibling % k).collect(),
                    group_of_dataset: groups,
                },
                None => manifest.folds(),
            }
        }
    };
    let p = performance_for(cli, &corpus.datasets, a.p.as_deref(), train.n_trials)?;
    let features = extract_corpus(&corpus.datasets, train.seed)?;
    let models = enumerate_model_set();
    let cfg = CvConfig {
        train,
        seed: cli.seed,
        measure_timing: true,
        ..Default::default()
    };
    let inputs = CvInputs {
        p: &p,
        meta: &features,
        folds: &folds,
        models: &models,
        datasets: Some(&corpus.datasets),
    };
    let report = run_cv(&inputs, &methods, &cfg)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let table = report.to_table();
    std::fs::write(a.out.join("report.json"), report.to_json()?).map_err(Error::from)?;
    std::fs::write(a.out.join("report.txt"), &table).map_err(Error::from)?;
    print!("{table}");
    Ok(())
}
