//! `cnnsa`: preprocess text, train and evaluate the convolutional sentence
//! classifier, run grid searches, and report corpus statistics.

mod config;

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnnsa_core::data::{load_dataset, split, LabelSchema, LabeledCorpus};
use cnnsa_core::embeddings::{load_embeddings, EmbeddingTable};
use cnnsa_core::eval::{evaluate, grid_search, heights_label, GridAxes, VectorVariant};
use cnnsa_core::nn::{predict, Nonlinearity};
use cnnsa_core::preprocess::preprocess;
use cnnsa_core::training::{train, Checkpoint, TrainConfig};

use config::{parse_heights, parse_vector_spec, FileConfig, VectorFile};

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<cnnsa_core::Error> for Failure {
    fn from(e: cnnsa_core::Error) -> Self {
        Failure {
            code: if e.is_usage_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "cnnsa", version, about = "Convolutional sentence-level sentiment classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize one document per line through the preprocessing pipeline.
    Preprocess(PreprocessArgs),
    /// Train a model and write its checkpoint and loss history.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled dataset and print its AUC.
    Evaluate(EvaluateArgs),
    /// Classify one line of text.
    Predict(PredictArgs),
    /// Train and evaluate one model per grid cell.
    GridSearch(GridArgs),
    /// Print per-class document, token and vocabulary counts.
    Stats(StatsArgs),
}

#[derive(Args)]
struct Shared {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for training batches, evaluation and grid cells.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input file; standard input when omitted.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DataFlags {
    /// Dataset file of `<label>\t<text>` records.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Label levels: 2 (binary) or 5.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Args)]
struct ModelFlags {
    /// Filter heights, e.g. `3` or `2,3,5`.
    #[arg(long, value_name = "H[,H...]")]
    heights: Option<String>,
    /// Filters per height.
    #[arg(long)]
    per_height: Option<usize>,
    /// relu, tanh or identity.
    #[arg(long)]
    nonlinearity: Option<String>,
    /// Dropout rate on the pooled features during training.
    #[arg(long)]
    dropout: Option<f64>,
    /// Upper bound on training epochs.
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Run all epochs and keep the final parameters.
    #[arg(long)]
    no_early_stopping: bool,
    /// Documents per Adadelta step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed for initialization, shuffling, dropout and the validation split.
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of the training data held out for early stopping.
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Adadelta decay rate.
    #[arg(long)]
    rho: Option<f64>,
    /// Adadelta epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Update the embedding rows of in-batch tokens.
    #[arg(long)]
    finetune_embeddings: bool,
    /// Seed of the hashed vectors given to out-of-vocabulary tokens.
    #[arg(long)]
    oov_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    model: ModelFlags,
    /// Pretrained vector file.
    #[arg(long, value_name = "PATH")]
    vectors: Option<PathBuf>,
    /// Expected vector dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Loss history CSV; defaults to `<checkpoint>.history.csv`.
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,
    /// Hold out this fraction of the dataset and report its AUC after training.
    #[arg(long)]
    eval_fraction: Option<f64>,
    /// Seed of the held-out split.
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    data: DataFlags,
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Vector file used in training; without it every token is looked up as OOV.
    #[arg(long, value_name = "PATH")]
    vectors: Option<PathBuf>,
    /// Seed of the hashed vectors given to out-of-vocabulary tokens.
    #[arg(long)]
    oov_seed: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Vector file used in training; without it every token is looked up as OOV.
    #[arg(long, value_name = "PATH")]
    vectors: Option<PathBuf>,
    /// Seed of the hashed vectors given to out-of-vocabulary tokens.
    #[arg(long)]
    oov_seed: Option<u64>,
    /// Raw text to classify.
    text: String,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    model: ModelFlags,
    /// One grid row per occurrence, e.g. `--grid-heights 2 --grid-heights 2,3`.
    #[arg(long = "grid-heights", value_name = "H[,H...]")]
    grid_heights: Vec<String>,
    /// One grid column per occurrence: `label=path` or a bare path.
    #[arg(long = "grid-vectors", value_name = "LABEL=PATH")]
    grid_vectors: Vec<String>,
    /// Fraction of the dataset each cell is evaluated on.
    #[arg(long)]
    eval_fraction: Option<f64>,
    /// Seed of the shared train/eval split.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Write the report as CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Write the aligned-text report.
    #[arg(long, value_name = "PATH")]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    data: DataFlags,
}

fn setup(shared: &Shared) -> CliResult<FileConfig> {
    let file = FileConfig::load(shared.config.as_deref()).map_err(Failure::usage)?;
    if let Some(jobs) = shared.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    Ok(file)
}

fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| Failure::usage(format!("missing --{name}")))
}

fn schema(levels: Option<usize>, file: &FileConfig) -> CliResult<LabelSchema> {
    Ok(LabelSchema::from_levels(levels.or(file.levels).unwrap_or(2))?)
}

fn load_corpus(data: DataFlags, file: &FileConfig) -> CliResult<LabeledCorpus> {
    let path = required(data.dataset, &file.dataset, "dataset")?;
    let (corpus, report) = load_dataset(&path, schema(data.levels, file)?)?;
    if report.dropped_empty > 0 {
        eprintln!(
            "warning: dropped {} of {} records that were empty after preprocessing",
            report.dropped_empty, report.records
        );
    }
    Ok(corpus)
}

fn train_config(flags: ModelFlags, file: &FileConfig) -> CliResult<TrainConfig> {
    let mut c = TrainConfig::default();
    if let Some(h) = flags.heights.as_deref() {
        c.model.heights = parse_heights(h).map_err(Failure::usage)?;
    } else if let Some(h) = &file.heights {
        c.model.heights = h.clone();
    }
    if let Some(v) = flags.per_height.or(file.per_height) {
        c.model.per_height = v;
    }
    if let Some(v) = flags.nonlinearity.as_ref().or(file.nonlinearity.as_ref()) {
        c.model.nonlinearity = v.parse::<Nonlinearity>()?;
    }
    if let Some(v) = flags.dropout.or(file.dropout) {
        c.model.dropout = v;
    }
    if let Some(v) = flags.max_epochs.or(file.max_epochs) {
        c.max_epochs = v;
    }
    if let Some(v) = flags.patience.or(file.patience) {
        c.patience = Some(v);
    }
    if flags.no_early_stopping || file.early_stopping == Some(false) {
        c.patience = None;
    }
    if let Some(v) = flags.batch_size.or(file.batch_size) {
        c.batch_size = v;
    }
    if let Some(v) = flags.seed.or(file.seed) {
        c.seed = v;
    }
    if let Some(v) = flags.validation_fraction.or(file.validation_fraction) {
        c.validation_fraction = v;
    }
    if let Some(v) = flags.rho.or(file.rho) {
        c.rho = v;
    }
    if let Some(v) = flags.epsilon.or(file.epsilon) {
        c.epsilon = v;
    }
    c.finetune_embeddings = flags.finetune_embeddings || file.finetune_embeddings.unwrap_or(false);
    c.validate()?;
    Ok(c)
}

fn oov_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or(file.oov_seed).unwrap_or(0)
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn cmd_preprocess(args: PreprocessArgs) -> CliResult {
    let input: Box<dyn BufRead> = match &args.input {
        Some(p) => Box::new(io::BufReader::new(
            fs::File::open(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdin().lock()),
    };
    let output: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut output = BufWriter::new(output);
    let mut dropped = 0;
    for line in input.lines() {
        let line = line.map_err(|e| Failure::runtime(e.to_string()))?;
        let tokens = preprocess(&line);
        if tokens.is_empty() {
            dropped += 1;
            continue;
        }
        writeln!(output, "{tokens}").map_err(|e| Failure::runtime(e.to_string()))?;
    }
    output.flush().map_err(|e| Failure::runtime(e.to_string()))?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} lines that were empty after preprocessing");
    }
    Ok(())
}

fn format_patience(c: &TrainConfig) -> String {
    c.patience.map_or_else(|| "none".to_owned(), |p| p.to_string())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let file = setup(&args.shared)?;
    let oov = oov_seed(args.model.oov_seed, &file);
    let config = train_config(args.model, &file)?;
    let dim = args.dim.or(file.dim).unwrap_or(100);
    let checkpoint = required(args.checkpoint, &file.checkpoint, "checkpoint")?;
    let vectors = required(args.vectors, &file.vectors, "vectors")?;
    let eval_fraction = args.eval_fraction.or(file.eval_fraction);
    println!(
        "heights={:?} dim={dim} max_epochs={} dropout={} patience={}",
        config.model.normalized_heights(),
        config.max_epochs,
        config.model.dropout,
        format_patience(&config)
    );

    let (table, report) = load_embeddings(&vectors, Some(dim), oov)?;
    eprintln!("loaded {} vectors of dimension {dim}", report.vectors);
    if report.duplicates > 0 {
        eprintln!("warning: {} duplicate tokens in {}, last occurrence kept", report.duplicates, vectors.display());
    }
    let corpus = load_corpus(args.data, &file)?;
    let (train_part, held_out) = match eval_fraction {
        Some(f) => {
            let (t, e) = split(&corpus, f, args.split_seed.or(file.split_seed).unwrap_or(0))?;
            (t, Some(e))
        }
        None => (corpus, None),
    };

    let outcome = train(&train_part, &config, &table)?;
    let ckpt = outcome.checkpoint();
    ckpt.save(&checkpoint)?;
    let history = args
        .history
        .or(file.history.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.csv", checkpoint.display())));
    write_file(&history, &outcome.history.to_csv())?;

    let h = &outcome.history;
    println!("epochs={} stop={}", h.epochs(), h.stop);
    println!("best_epoch={}", h.best_epoch());
    println!("val_loss={:.6}", h.best_val_loss());
    if let Some(eval_part) = held_out {
        let table = ckpt.embedding_table(&table)?;
        let r = evaluate(&outcome.model, &eval_part, &table)?;
        println!("heldout_auc={:.6}", r.auc);
    }
    Ok(())
}

/// Base table for a checkpoint: the vector file when given, else an empty
/// table so every token takes its OOV vector. Fine-tuned rows are overlaid.
fn checkpoint_table(ckpt: &Checkpoint, vectors: Option<PathBuf>, seed: u64) -> CliResult<EmbeddingTable> {
    let dim = ckpt.model.dim();
    let base = match vectors {
        Some(p) => load_embeddings(&p, Some(dim), seed)?.0,
        None => EmbeddingTable::new(dim, seed)?,
    };
    Ok(ckpt.embedding_table(&base)?)
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let file = setup(&args.shared)?;
    let ckpt = Checkpoint::load(&required(args.checkpoint, &file.checkpoint, "checkpoint")?)?;
    let levels = args.data.levels.or(file.levels).unwrap_or(ckpt.model.classes());
    if levels != ckpt.model.classes() {
        return Err(Failure::usage(format!(
            "checkpoint has {} classes but --levels is {levels}",
            ckpt.model.classes()
        )));
    }
    let table = checkpoint_table(&ckpt, args.vectors.or(file.vectors.clone()), oov_seed(args.oov_seed, &file))?;
    let data = DataFlags { dataset: args.data.dataset, levels: Some(levels) };
    let corpus = load_corpus(data, &file)?;
    print!("{}", evaluate(&ckpt.model, &corpus, &table)?);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult {
    let file = setup(&args.shared)?;
    let ckpt = Checkpoint::load(&required(args.checkpoint, &file.checkpoint, "checkpoint")?)?;
    let table = checkpoint_table(&ckpt, args.vectors.or(file.vectors.clone()), oov_seed(args.oov_seed, &file))?;
    let schema = LabelSchema::from_levels(ckpt.model.classes())?;
    let tokens = preprocess(&args.text);
    let probs = predict(&ckpt.model, &ckpt.model.embed(tokens.as_slice(), &table)?)?;
    println!("class={}", schema.class_name(probs.argmax()));
    for (c, p) in probs.as_slice().iter().enumerate() {
        println!("{}={p:.6}", schema.class_name(c));
    }
    Ok(())
}

fn cmd_grid_search(args: GridArgs) -> CliResult {
    let file = setup(&args.shared)?;
    let seed = oov_seed(args.model.oov_seed, &file);
    let base = train_config(args.model, &file)?;

    let heights: Vec<Vec<usize>> = if !args.grid_heights.is_empty() {
        args.grid_heights
            .iter()
            .map(|h| parse_heights(h))
            .collect::<Result<_, _>>()
            .map_err(Failure::usage)?
    } else if !file.grid.heights.is_empty() {
        file.grid.heights.clone()
    } else {
        vec![vec![2], vec![3], vec![5], vec![7], vec![9]]
    };
    let specs: Vec<VectorFile> = if !args.grid_vectors.is_empty() {
        args.grid_vectors
            .iter()
            .map(|s| parse_vector_spec(s))
            .collect::<Result<_, _>>()
            .map_err(Failure::usage)?
    } else {
        file.grid.vectors.clone()
    };
    if specs.is_empty() {
        return Err(Failure::usage("grid search needs at least one --grid-vectors file"));
    }
    let mut vectors = Vec::new();
    for spec in specs {
        let (table, _) = load_embeddings(&spec.path, None, seed)?;
        vectors.push(VectorVariant { label: spec.label, table });
    }

    let corpus = load_corpus(args.data, &file)?;
    let report = grid_search(
        &corpus,
        &GridAxes { heights, vectors },
        &base,
        args.eval_fraction.or(file.eval_fraction).unwrap_or(0.2),
        args.split_seed.or(file.split_seed).unwrap_or(0),
    )?;

    for cell in report.cells.iter() {
        if let Err(e) = &cell.result {
            eprintln!("cell heights={} vectors={} failed: {e}", heights_label(&cell.heights), cell.vectors);
        }
    }
    if let Some(p) = args.csv.or(file.grid.csv.clone()) {
        write_file(&p, &report.to_csv())?;
    }
    let text = report.render_text();
    if let Some(p) = args.text.or(file.grid.text.clone()) {
        write_file(&p, &text)?;
    }
    print!("{text}");
    if report.failures() == report.cells.len() {
        return Err(Failure::runtime("every grid cell failed"));
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CliResult {
    let file = setup(&args.shared)?;
    let corpus = load_corpus(args.data, &file)?;
    print!("{}", corpus.stats());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::GridSearch(a) => cmd_grid_search(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
