mod manifest;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ove::bounds::AlphaSolver;
use ove::data::{self, DataError, SparseDataset};
use ove::eval::{self, EvalError, MethodReport};
use ove::model::{self, LinearModel, ModelError, ObjectiveKind};
use ove::nonparam::{self, CountVector, NonparamError, SgdEstimateConfig};
use ove::optim::AscentOptions;
use ove::sgd::{self, TrainConfig, TrainError};
use ove::{BoundsError, Model};

use manifest::RunManifest;

/// Thread count for data-parallel evaluation; results do not depend on it.
const THREADS_ENV: &str = "OVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ove", version, about = "Softmax lower bounds: estimation, training and comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate category probabilities from counts or a label stream.
    Estimate(EstimateArgs),
    /// Train a linear classifier.
    Train(TrainArgs),
    /// Score candidate checkpoints against a reference checkpoint.
    Compare(CompareArgs),
    /// Write a synthetic dataset.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EstimateMethod {
    Exact,
    Ove,
    OveSgd,
    Bouchard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Generator {
    Powerlaw,
    Toy,
    Sparse,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    method: EstimateMethod,
    /// Comma-separated category counts.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["labels", "gen"])]
    counts: Option<Vec<u64>>,
    /// File with one 1-based label per line.
    #[arg(long, conflicts_with = "gen")]
    labels: Option<PathBuf>,
    /// Draw labels from a generator instead.
    #[arg(long, value_enum)]
    gen: Option<Generator>,
    /// Number of categories (required with --gen; otherwise inferred).
    #[arg(long = "K")]
    classes: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "b", default_value_t = 100)]
    batch_size: usize,
    #[arg(long = "S", default_value_t = 10)]
    remaining: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    lr_decay: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    log_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TrainObjective {
    Soft,
    Ove,
    Bouchard,
    OveSgd,
}

/// Where the train/test data come from.
#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Training file (libsvm format, 1-based labels and indices).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test file in the same format.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Read files as multilabel rows reduced to their first label.
    #[arg(long)]
    multilabel: bool,
    /// Directory holding the four raw MNIST IDX files.
    #[arg(long, conflicts_with_all = ["train", "test"])]
    mnist: Option<PathBuf>,
    /// Use the generated 5-class toy problem.
    #[arg(long, conflicts_with_all = ["train", "test", "mnist"])]
    toy: bool,
    /// Toy training set size (the test set has the same size).
    #[arg(long, default_value_t = 200)]
    toy_n: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    objective: TrainObjective,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "b", default_value_t = 200)]
    batch_size: usize,
    #[arg(long = "S", default_value_t = 1)]
    remaining: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    lr_decay: f64,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full-batch stopping tolerance on the gradient's largest entry.
    #[arg(long, default_value_t = 1e-4)]
    grad_tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Start from this checkpoint instead of zeros.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Reference (exact softmax) checkpoint.
    #[arg(long)]
    reference: PathBuf,
    /// Candidate as NAME=CHECKPOINT; repeatable.
    #[arg(long = "candidate", value_parser = parse_candidate)]
    candidates: Vec<(String, PathBuf)>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Generator,
    #[arg(long = "K", default_value_t = 1000)]
    classes: usize,
    #[arg(long = "D", default_value_t = 50_000)]
    features: usize,
    #[arg(long = "N", default_value_t = 200)]
    n: usize,
    /// Active features per row of the sparse generator.
    #[arg(long, default_value_t = 20)]
    nnz: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_candidate(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=CHECKPOINT, got {s:?}")),
    }
}

/// Failure classes and their exit codes.
#[derive(Debug)]
enum CliError {
    Numeric(String),
    Config(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Numeric(m) | CliError::Config(m) | CliError::Data(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::NonFinite { .. } | BoundsError::NonFiniteAlpha | BoundsError::AlphaNotConverged { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NotConverged { .. } => CliError::Numeric(e.to_string()),
            ModelError::Bounds(b) => b.into(),
            ModelError::Checkpoint(_)
            | ModelError::Io(_)
            | ModelError::ShapeMismatch { .. }
            | ModelError::FeatureOutOfRange { .. }
            | ModelError::LabelOutOfRange { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Bounds(b) => b.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<NonparamError> for CliError {
    fn from(e: NonparamError) -> Self {
        match e {
            NonparamError::NotConverged { .. } | NonparamError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            NonparamError::Bounds(b) => b.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ShapeMismatch(_) | EvalError::LengthMismatch(..) => CliError::Data(e.to_string()),
            EvalError::Model(m) => m.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).expect("serializable");
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ProbsOutput<'a> {
    method: &'a str,
    classes: usize,
    total: u64,
    probs: &'a [f64],
    scores: &'a [Option<f64>],
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l1_error: Option<f64>,
}

fn read_label_file(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.parse::<usize>() {
            Ok(l) if l >= 1 => labels.push(l - 1),
            _ => return Err(CliError::Data(format!("{}: line {}: bad label {line:?}", path.display(), i + 1))),
        }
    }
    if labels.is_empty() {
        return Err(CliError::Data(format!("{}: no labels", path.display())));
    }
    Ok(labels)
}

fn cmd_estimate(args: &EstimateArgs, m: &mut RunManifest) -> Result<(), CliError> {
    let start = Instant::now();
    // (labels, classes, true probabilities if generated)
    let (labels, classes, truth): (Option<Vec<usize>>, usize, Option<Vec<f64>>) =
        match (&args.counts, &args.labels, args.gen) {
            (Some(c), None, None) => {
                if args.method == EstimateMethod::OveSgd {
                    // expand counts into a stream
                    let stream = c.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat_n(k, n as usize)).collect();
                    (Some(stream), c.len(), None)
                } else {
                    (None, c.len(), None)
                }
            }
            (None, Some(path), None) => {
                m.add_input(path)?;
                let labels = read_label_file(path)?;
                let inferred = labels.iter().max().map_or(0, |&l| l + 1);
                let classes = args.classes.unwrap_or(inferred);
                if classes < inferred {
                    return Err(CliError::Data(format!("label {inferred} exceeds --K {classes}")));
                }
                (Some(labels), classes, None)
            }
            (None, None, Some(Generator::Powerlaw)) => {
                let (Some(k), Some(n)) = (args.classes, args.n) else {
                    return Err(CliError::Config("--gen needs --K and --N".into()));
                };
                let s = data::gen_powerlaw_categorical(k, n, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
                (Some(s.labels), k, Some(s.probs))
            }
            (None, None, Some(g)) => return Err(CliError::Config(format!("generator {g:?} does not produce labels"))),
            _ => return Err(CliError::Config("give exactly one of --counts, --labels, --gen".into())),
        };
    let counts = match (&args.counts, &labels) {
        (Some(c), _) => CountVector::new(c.clone())?,
        (None, Some(l)) => CountVector::from_labels(l, classes)?,
        (None, None) => unreachable!("one source is always present"),
    };
    let freq = counts.frequencies();
    m.timing("load_ms", start);

    let t = Instant::now();
    let opts = AscentOptions::default();
    let result = match args.method {
        EstimateMethod::Exact => nonparam::exact_mle::<f64>(&counts),
        EstimateMethod::Ove => nonparam::ove_fit(&counts, &opts)?,
        EstimateMethod::Bouchard => nonparam::bouchard_fit(&counts, &opts)?,
        EstimateMethod::OveSgd => {
            let cfg = SgdEstimateConfig {
                batch_size: args.batch_size,
                remaining: args.remaining,
                lr0: args.lr,
                lr_decay: args.lr_decay,
                epochs: args.epochs,
                seed: args.seed,
                log_every: args.log_every,
            };
            let stream = labels.as_deref().expect("stream exists for the stochastic method");
            nonparam::ove_sgd_fit(stream, classes, &cfg, Some(&freq))?
        }
    };
    m.timing("fit_ms", t);

    prepare_out(&args.out)?;
    let out = ProbsOutput {
        method: result.method.as_str(),
        classes,
        total: counts.total(),
        probs: &result.probs,
        scores: &result.f_hat,
        alpha: result.alpha,
        l1_error: Some(result.l1_error(truth.as_deref().unwrap_or(&freq))),
    };
    let probs_path = args.out.join("probs.json");
    write_json(&probs_path, &out)?;
    m.add_output(&probs_path)?;

    let trace_path = args.out.join("trace.csv");
    let mut w = create(&trace_path)?;
    let header = if args.method == EstimateMethod::OveSgd { "iteration,l1_error" } else { "iteration,objective" };
    writeln!(w, "{header}").map_err(|e| io_err(&trace_path, e))?;
    for (i, v) in &result.trace {
        writeln!(w, "{i},{v}").map_err(|e| io_err(&trace_path, e))?;
    }
    w.flush().map_err(|e| io_err(&trace_path, e))?;
    m.add_output(&trace_path)?;

    if let Some(truth) = truth {
        let truth_path = args.out.join("true_probs.json");
        write_json(&truth_path, &truth)?;
        m.add_output(&truth_path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train / compare
// ---------------------------------------------------------------------------

fn load_data(d: &DataArgs, m: &mut RunManifest) -> Result<(SparseDataset<f64>, SparseDataset<f64>), CliError> {
    if d.toy {
        let train = data::gen_toy_5class(d.toy_n, d.data_seed).map_err(|e| CliError::Config(e.to_string()))?;
        let test =
            data::gen_toy_5class(d.toy_n, d.data_seed.wrapping_add(1)).map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((train, test));
    }
    if let Some(dir) = &d.mnist {
        let files =
            ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];
        for f in files {
            m.add_input(&dir.join(f))?;
        }
        let train = data::load_idx(&dir.join(files[0]), &dir.join(files[1]), "mnist-train")?;
        let test = data::load_idx(&dir.join(files[2]), &dir.join(files[3]), "mnist-test")?;
        return Ok((train, test));
    }
    let (Some(train), Some(test)) = (&d.train, &d.test) else {
        return Err(CliError::Config("give --train and --test, --mnist, or --toy".into()));
    };
    m.add_input(train)?;
    m.add_input(test)?;
    if d.multilabel {
        let (tr, r1) = data::reduce_multilabel::<f64>(train)?;
        let (te, r2) = data::reduce_multilabel::<f64>(test)?;
        m.note("dropped_unlabelled_rows", serde_json::json!({ "train": r1.dropped, "test": r2.dropped }));
        let (k, dd) = (tr.classes().max(te.classes()), tr.features().max(te.features()));
        Ok((tr.with_dims(k, dd)?, te.with_dims(k, dd)?))
    } else {
        Ok(data::load_train_test(train, test)?)
    }
}

fn read_checkpoint(path: &Path, m: &mut RunManifest) -> Result<Model, CliError> {
    m.add_input(path)?;
    let f = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    LinearModel::read_checkpoint(std::io::BufReader::new(f))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_train(args: &TrainArgs, m: &mut RunManifest) -> Result<(), CliError> {
    let t = Instant::now();
    let (train, test) = load_data(&args.data, m)?;
    m.timing("load_ms", t);
    let (k, d) = (train.classes(), train.features());
    let init = match &args.init {
        Some(p) => {
            let init = read_checkpoint(p, m)?;
            if (init.classes(), init.features()) != (k, d) {
                return Err(CliError::Data(format!(
                    "initial checkpoint is {}x{}, data is {k}x{d}",
                    init.classes(),
                    init.features()
                )));
            }
            init
        }
        None => LinearModel::zeros(k, d),
    };
    if !(args.lambda >= 0.0 && args.lambda.is_finite()) {
        return Err(CliError::Config(format!("lambda must be non-negative, got {}", args.lambda)));
    }
    prepare_out(&args.out)?;
    let trace_path = args.out.join("trace.csv");
    let t = Instant::now();
    let solver = AlphaSolver::default();
    let (model, bound_final, method) = match args.objective {
        TrainObjective::OveSgd => {
            let cfg = TrainConfig {
                batch_size: args.batch_size,
                remaining: args.remaining,
                epochs: args.epochs,
                lr0: args.lr,
                lr_decay: args.lr_decay,
                lambda: args.lambda,
                seed: args.seed,
                objective: ObjectiveKind::Ove,
                log_every: args.log_every,
            };
            let out = sgd::train(init, &train, &cfg)?;
            out.trace.write_csv(create(&trace_path)?).map_err(|e| io_err(&trace_path, e))?;
            m.add_output_masked(&trace_path, "elapsed_ms")?;
            m.note("train_stats", serde_json::to_value(&out.stats).expect("serializable"));
            let bound = model::ove_loglik(&out.model, &train, args.lambda)?;
            (out.model, bound, "ove-sgd")
        }
        obj => {
            let kind = match obj {
                TrainObjective::Soft => ObjectiveKind::ExactSoftmax,
                TrainObjective::Ove => ObjectiveKind::Ove,
                _ => ObjectiveKind::Bouchard,
            };
            let opts = AscentOptions { grad_tol: args.grad_tol, max_iter: args.max_iter, ..AscentOptions::lbfgs() };
            let fit = model::fit_full_batch(init, &train, kind, args.lambda, &opts, &solver)?;
            let mut w = create(&trace_path)?;
            writeln!(w, "iteration,objective").map_err(|e| io_err(&trace_path, e))?;
            for (i, v) in &fit.trace {
                writeln!(w, "{i},{v}").map_err(|e| io_err(&trace_path, e))?;
            }
            w.flush().map_err(|e| io_err(&trace_path, e))?;
            m.add_output(&trace_path)?;
            m.note("iterations", fit.iterations.into());
            (fit.model, fit.value, kind.as_str())
        }
    };
    m.timing("train_ms", t);

    let t = Instant::now();
    let (error, nlpd) = eval::evaluate_model(&model, &test)?;
    m.timing("eval_ms", t);
    let report = MethodReport { method: method.to_string(), norm: None, error, nlpd, bound_final: Some(bound_final) };

    let ckpt = args.out.join("model.ckpt");
    let mut w = create(&ckpt)?;
    model.write_checkpoint(&mut w).map_err(CliError::from)?;
    w.flush().map_err(|e| io_err(&ckpt, e))?;
    m.add_output(&ckpt)?;
    let report_path = args.out.join("report.json");
    write_json(&report_path, &report)?;
    m.add_output(&report_path)?;
    Ok(())
}

fn cmd_compare(args: &CompareArgs, m: &mut RunManifest) -> Result<(), CliError> {
    let (_, test) = load_data(&args.data, m)?;
    let reference = read_checkpoint(&args.reference, m)?;
    let mut models = vec![("soft".to_string(), reference.clone())];
    for (name, path) in &args.candidates {
        models.push((name.clone(), read_checkpoint(path, m)?));
    }
    let t = Instant::now();
    let mut reports = Vec::new();
    for (i, (name, model)) in models.iter().enumerate() {
        if (model.classes(), model.features()) != (reference.classes(), reference.features()) {
            return Err(CliError::Data(format!("checkpoint {name} does not match the reference shape")));
        }
        let norm = if i == 0 { None } else { Some(eval::param_norm(&reference, model)?) };
        let (error, nlpd) = eval::evaluate_model(model, &test)?;
        reports.push(MethodReport { method: name.clone(), norm, error, nlpd, bound_final: None });
    }
    m.timing("eval_ms", t);
    prepare_out(&args.out)?;
    let table = args.out.join("table.csv");
    eval::write_table_csv(&reports, create(&table)?).map_err(|e| io_err(&table, e))?;
    m.add_output(&table)?;
    let json = args.out.join("reports.json");
    write_json(&json, &reports)?;
    m.add_output(&json)?;
    Ok(())
}

fn cmd_gen(args: &GenArgs, m: &mut RunManifest) -> Result<(), CliError> {
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_out(dir)?;
    }
    let cfg = |e: DataError| CliError::Config(e.to_string());
    match args.kind {
        Generator::Powerlaw => {
            let s = data::gen_powerlaw_categorical(args.classes, args.n, args.seed).map_err(cfg)?;
            let mut w = create(&args.out)?;
            for l in &s.labels {
                writeln!(w, "{}", l + 1).map_err(|e| io_err(&args.out, e))?;
            }
            w.flush().map_err(|e| io_err(&args.out, e))?;
        }
        Generator::Toy | Generator::Sparse => {
            let d = if args.kind == Generator::Toy {
                data::gen_toy_5class::<f64>(args.n, args.seed).map_err(cfg)?
            } else {
                data::gen_sparse_synthetic::<f64>(args.classes, args.features, args.n, args.nnz, args.seed)
                    .map_err(cfg)?
            };
            let mut w = create(&args.out)?;
            data::write_sparse(&d, &mut w).and_then(|_| w.flush()).map_err(|e| io_err(&args.out, e))?;
            data::write_metadata(&args.out, data::Metadata { classes: d.classes(), features: d.features() })?;
        }
    }
    m.add_output(&args.out)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let start = Instant::now();
    let (name, out_dir, config, seed) = match &cli.command {
        Command::Estimate(a) => ("estimate", a.out.clone(), serde_json::to_value(a), Some(a.seed)),
        Command::Train(a) => ("train", a.out.clone(), serde_json::to_value(a), Some(a.seed)),
        Command::Compare(a) => ("compare", a.out.clone(), serde_json::to_value(a), None),
        Command::Gen(a) => {
            ("gen", a.out.parent().map(Path::to_path_buf).unwrap_or_default(), serde_json::to_value(a), Some(a.seed))
        }
    };
    let mut m = RunManifest::new(name, config.expect("arguments serialize"), seed);
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, &mut m)?,
        Command::Train(a) => cmd_train(a, &mut m)?,
        Command::Compare(a) => cmd_compare(a, &mut m)?,
        Command::Gen(a) => cmd_gen(a, &mut m)?,
    }
    m.timing("total_ms", start);
    let path = match &cli.command {
        Command::Gen(a) => {
            let mut p = a.out.as_os_str().to_owned();
            p.push(".manifest.json");
            PathBuf::from(p)
        }
        _ => out_dir.join("manifest.json"),
    };
    write_json(&path, &m)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
