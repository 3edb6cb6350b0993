//! `dqg`: synthesize, label, train, generate and evaluate from the shell.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dqg_core::corpus::{
    build_vocab, generate_synthetic_corpus, load_jsonl, save_jsonl, CorpusError, Example, HintProfile,
    StopwordSet,
};
use dqg_core::evalkit::{
    answer_occurrence_rate, corpus_bleu, gap_report, generate_records, read_generations, rouge_l,
    score_generations, write_generations, EvalError, LabelMode,
};
use dqg_core::labeler::{apply_labels, label_dataset, FeatureReader, LabelError, ReaderOracle, WindowReader};
use dqg_core::model::{composite_grad_check, ModelConfig, ModelError, PositionMode};
use dqg_core::proximity::corpus_proximity_stats;
use dqg_core::trainer::{load_checkpoint, save_checkpoint, train_with_callback, CheckpointError, TrainConfig, TrainError};

use config::Settings;

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
            code: if kind == "usage" { 2 } else { 1 },
        }
    }
}

macro_rules! failure_from {
    ($($ty:ty => $kind:expr),* $(,)?) => {
        $(impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::new($kind(&e), e.to_string())
            }
        })*
    };
}

fn corpus_kind(e: &CorpusError) -> &'static str {
    match e {
        CorpusError::Parse { .. } | CorpusError::Alignment(_) => "schema",
        CorpusError::Contract(_) => "contract",
        CorpusError::Io(_) => "io",
    }
}

failure_from! {
    CorpusError => corpus_kind,
    ModelError => |_: &ModelError| "model",
    TrainError => |e: &TrainError| match e {
        TrainError::Divergence { .. } => "divergence",
        TrainError::Config(_) => "config",
        _ => "training",
    },
    CheckpointError => |_: &CheckpointError| "checkpoint",
    LabelError => |_: &LabelError| "labeling",
    EvalError => |e: &EvalError| match e {
        EvalError::Contract(_) => "contract",
        EvalError::Parse { .. } => "schema",
        EvalError::Io(_) => "io",
        EvalError::Label(_) => "labeling",
        _ => "evaluation",
    },
    std::io::Error => |_: &std::io::Error| "io",
    serde_json::Error => |_: &serde_json::Error| "io",
}

type Outcome = Result<Value, Failure>;

#[derive(Parser)]
#[command(name = "dqg", version, about = "Difficulty-controllable question generation")]
struct Cli {
    /// key = value settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic JSONL corpus.
    Synth(SynthArgs),
    /// Label examples easy/hard with the reader protocol.
    Label(LabelArgs),
    /// Proximity statistics of a dataset.
    Stats(StatsArgs),
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Generate questions from a checkpoint.
    Generate(GenerateArgs),
    /// Score generations against a dataset.
    Eval(EvalArgs),
    /// Finite-difference check of the full model gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    easy_max_dist: Option<usize>,
    #[arg(long)]
    hard_min_dist: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    /// l2a, ans, qwph, qwph-gdc, dlph or dlph-gdc.
    #[arg(long)]
    variant: Option<String>,
    /// none, answer_indicator, qwph or dlph; overrides the variant.
    #[arg(long)]
    position_mode: Option<String>,
    #[arg(long)]
    gdc: Option<bool>,
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    position_dim: Option<usize>,
    #[arg(long)]
    difficulty_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    max_distance: Option<usize>,
    #[arg(long)]
    max_decode_len: Option<usize>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_epsilon: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// easy, hard, gold or reversed.
    #[arg(long)]
    difficulty: Option<String>,
    #[arg(long)]
    beam_size: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled test examples the generations refer to.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Generations conditioned on the true labels.
    #[arg(long)]
    generations: Option<PathBuf>,
    /// Generations conditioned on reversed labels; enables the gap report.
    #[arg(long)]
    reversed: Option<PathBuf>,
    /// Examples the readers are fit on; must not overlap the dataset.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            report(&Failure::new("usage", first.trim_start_matches("error: ")));
            eprint!("{message}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}

fn report(f: &Failure) {
    eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
}

fn run(cli: Cli) -> Outcome {
    let mut s = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => {
            s.set("n", a.n);
            s.set("seed", a.seed);
            s.set("easy_max_dist", a.easy_max_dist);
            s.set("hard_min_dist", a.hard_min_dist);
            s.set("output", a.output.as_deref().map(Path::display));
            synth(&s)
        }
        Command::Label(a) => {
            s.set("input", a.input.as_deref().map(Path::display));
            s.set("output", a.output.as_deref().map(Path::display));
            s.set("report", a.report.as_deref().map(Path::display));
            s.set("k", a.k);
            s.set("seed", a.seed);
            label(&s)
        }
        Command::Stats(a) => {
            s.set("input", a.input.as_deref().map(Path::display));
            s.set("output", a.output.as_deref().map(Path::display));
            stats(&s)
        }
        Command::Train(a) => {
            for (key, value) in [
                ("train", &a.train),
                ("dev", &a.dev),
                ("checkpoint", &a.checkpoint),
                ("log", &a.log),
            ] {
                s.set(key, value.as_deref().map(Path::display));
            }
            s.set("variant", a.variant);
            s.set("position_mode", a.position_mode);
            s.set("gdc", a.gdc);
            for (key, value) in [
                ("word_dim", a.word_dim),
                ("position_dim", a.position_dim),
                ("difficulty_dim", a.difficulty_dim),
                ("hidden", a.hidden),
                ("max_distance", a.max_distance),
                ("max_decode_len", a.max_decode_len),
                ("beam_size", a.beam_size),
                ("min_freq", a.min_freq),
                ("batch_size", a.batch_size),
                ("max_epochs", a.max_epochs),
                ("patience", a.patience),
            ] {
                s.set(key, value);
            }
            for (key, value) in [
                ("learning_rate", a.learning_rate),
                ("beta1", a.beta1),
                ("beta2", a.beta2),
                ("adam_epsilon", a.adam_epsilon),
                ("clip_norm", a.clip_norm),
            ] {
                s.set(key, value);
            }
            s.set("seed", a.seed);
            train(&s)
        }
        Command::Generate(a) => {
            s.set("checkpoint", a.checkpoint.as_deref().map(Path::display));
            s.set("input", a.input.as_deref().map(Path::display));
            s.set("output", a.output.as_deref().map(Path::display));
            s.set("difficulty", a.difficulty);
            s.set("beam_size", a.beam_size);
            generate(&s)
        }
        Command::Eval(a) => {
            for (key, value) in [
                ("dataset", &a.dataset),
                ("generations", &a.generations),
                ("reversed", &a.reversed),
                ("train", &a.train),
                ("output", &a.output),
            ] {
                s.set(key, value.as_deref().map(Path::display));
            }
            eval(&s)
        }
        Command::Gradcheck(a) => {
            s.set("seed", a.seed);
            s.set("eps", a.eps);
            s.set("tolerance", a.tolerance);
            gradcheck(&s)
        }
    }
}

fn echo(command: &str, config: &Value) {
    println!("{}", json!({ "command": command, "config": config }));
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Vec<Example>, Failure> {
    load_jsonl(path).map_err(|e| match e {
        CorpusError::Io(io) => io_failure(path, io),
        other => {
            let f = Failure::from(other);
            Failure::new(f.kind, format!("{}: {}", path.display(), f.message))
        }
    })
}

fn synth(s: &Settings) -> Outcome {
    let n = s.get_or("n", 200usize)?;
    let seed = s.get_or("seed", 7u64)?;
    let profile = HintProfile {
        easy_max_dist: s.get_or("easy_max_dist", HintProfile::default().easy_max_dist)?,
        hard_min_dist: s.get_or("hard_min_dist", HintProfile::default().hard_min_dist)?,
    };
    let output = s.path("output")?;
    echo("synth", &json!({ "n": n, "seed": seed, "profile": profile, "output": output }));
    let corpus = generate_synthetic_corpus(n, seed, profile)?;
    save_jsonl(&corpus, &output).map_err(|e| match e {
        CorpusError::Io(io) => io_failure(&output, io),
        other => other.into(),
    })?;
    Ok(json!({ "written": output, "examples": corpus.len() }))
}

fn label(s: &Settings) -> Outcome {
    let input = s.path("input")?;
    let output = s.path("output")?;
    let report_path = s.path("report")?;
    let k = s.get_or("k", 9usize)?;
    let seed = s.get_or("seed", 7u64)?;
    echo(
        "label",
        &json!({ "input": input, "output": output, "report": report_path, "k": k, "seed": seed }),
    );
    let examples = load(&input)?;
    let mut window = WindowReader::default();
    let mut feature = FeatureReader::default();
    let report = label_dataset(&examples, &mut [&mut window, &mut feature], k, seed)?;
    let labeled = apply_labels(&examples, &report)?;
    save_jsonl(&labeled, &output)?;
    write_json(&report_path, &serde_json::to_value(&report)?)?;
    Ok(json!({ "written": output, "report": report_path, "counts": report.counts }))
}

fn stats(s: &Settings) -> Outcome {
    let input = s.path("input")?;
    let output = s.optional_path("output");
    echo("stats", &json!({ "input": input, "output": output }));
    let examples = load(&input)?;
    let stats = serde_json::to_value(corpus_proximity_stats(&examples, &StopwordSet::english()))?;
    if let Some(path) = &output {
        write_json(path, &stats)?;
    }
    Ok(stats)
}

fn model_config(s: &Settings) -> Result<ModelConfig, Failure> {
    let d = ModelConfig::default();
    let variant: String = s.get_or("variant", "dlph-gdc".to_string())?;
    let (mut position_mode, mut gdc) = ModelConfig::variant(&variant)
        .ok_or_else(|| Failure::new("config", format!("unknown variant {variant:?}")))?;
    if let Some(mode) = s.get::<String>("position_mode")? {
        position_mode = serde_json::from_value::<PositionMode>(Value::String(mode.clone()))
            .map_err(|_| Failure::new("config", format!("unknown position_mode {mode:?}")))?;
    }
    if let Some(g) = s.get::<bool>("gdc")? {
        gdc = g;
    }
    Ok(ModelConfig {
        word_dim: s.get_or("word_dim", d.word_dim)?,
        position_dim: s.get_or("position_dim", d.position_dim)?,
        difficulty_dim: s.get_or("difficulty_dim", d.difficulty_dim)?,
        hidden: s.get_or("hidden", d.hidden)?,
        max_distance: s.get_or("max_distance", d.max_distance)?,
        position_mode,
        gdc,
        vocab_size: d.vocab_size,
        max_decode_len: s.get_or("max_decode_len", d.max_decode_len)?,
        beam_size: s.get_or("beam_size", d.beam_size)?,
    })
}

fn train_config(s: &Settings) -> Result<TrainConfig, Failure> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        learning_rate: s.get_or("learning_rate", d.learning_rate)?,
        beta1: s.get_or("beta1", d.beta1)?,
        beta2: s.get_or("beta2", d.beta2)?,
        adam_epsilon: s.get_or("adam_epsilon", d.adam_epsilon)?,
        clip_norm: s.get_or("clip_norm", d.clip_norm)?,
        batch_size: s.get_or("batch_size", d.batch_size)?,
        max_epochs: s.get_or("max_epochs", d.max_epochs)?,
        seed: s.get_or("seed", d.seed)?,
        patience: s.get_or("patience", d.patience)?,
    })
}

fn train(s: &Settings) -> Outcome {
    let train_path = s.path("train")?;
    let dev_path = s.path("dev")?;
    let ckpt_path = s.path("checkpoint")?;
    let log_path = s.optional_path("log");
    let min_freq = s.get_or("min_freq", 1usize)?;
    let train_set = load(&train_path)?;
    let dev_set = load(&dev_path)?;
    let vocab = build_vocab(&train_set, min_freq)?;
    let mut mc = model_config(s)?;
    mc.vocab_size = vocab.len();
    mc.validate()?;
    let tc = train_config(s)?;
    echo(
        "train",
        &json!({
            "train": train_path, "dev": dev_path, "checkpoint": ckpt_path, "log": log_path,
            "min_freq": min_freq, "model": mc, "training": tc,
        }),
    );
    let mut log = match &log_path {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| io_failure(p, e))?)),
        None => None,
    };
    let mut log_error = None;
    let outcome = train_with_callback(&train_set, &dev_set, &vocab, &mc, &tc, |entry| {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        if let Some(w) = log.as_mut() {
            if let Err(e) = writeln!(w, "{line}") {
                log_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.into());
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
    Ok(json!({
        "written": ckpt_path,
        "epochs_run": outcome.log.len(),
        "best_epoch": outcome.checkpoint.meta.epoch,
        "dev_perplexity": outcome.checkpoint.meta.dev_perplexity,
        "parameters": mc.param_count(),
    }))
}

fn generate(s: &Settings) -> Outcome {
    let ckpt_path = s.path("checkpoint")?;
    let input = s.path("input")?;
    let output = s.path("output")?;
    let mode_name: String = s.get_or("difficulty", "gold".to_string())?;
    let mode = LabelMode::parse(&mode_name)
        .ok_or_else(|| Failure::new("usage", format!("unknown difficulty {mode_name:?}; use easy, hard, gold or reversed")))?;
    let checkpoint = load_checkpoint(&ckpt_path)?;
    let mut model = checkpoint.generator()?;
    if let Some(beam) = s.get::<usize>("beam_size")? {
        model.config.beam_size = beam;
        model.config.validate()?;
    }
    echo(
        "generate",
        &json!({
            "checkpoint": ckpt_path, "input": input, "output": output,
            "difficulty": mode, "beam_size": model.config.beam_size,
        }),
    );
    let examples = load(&input)?;
    let records = generate_records(&model, &examples, mode)?;
    let mut w = BufWriter::new(File::create(&output).map_err(|e| io_failure(&output, e))?);
    write_generations(&records, &mut w)?;
    w.flush()?;
    Ok(json!({ "written": output, "generations": records.len() }))
}

fn eval(s: &Settings) -> Outcome {
    let dataset = s.path("dataset")?;
    let gen_path = s.path("generations")?;
    let reversed_path = s.optional_path("reversed");
    let train_path = s.path("train")?;
    let output = s.optional_path("output");
    echo(
        "eval",
        &json!({
            "dataset": dataset, "generations": gen_path, "reversed": reversed_path,
            "train": train_path, "output": output,
        }),
    );
    let examples = load(&dataset)?;
    let reader_data: Vec<Example> = load(&train_path)?
        .into_iter()
        .filter(|e| e.difficulty.is_labeled())
        .collect();
    let read = |p: &Path| -> Result<_, Failure> {
        let f = File::open(p).map_err(|e| io_failure(p, e))?;
        Ok(read_generations(BufReader::new(f), &examples)?)
    };
    let records = read(&gen_path)?;
    if records.len() != examples.len() {
        return Err(Failure::new(
            "schema",
            format!("{} generations for {} examples", records.len(), examples.len()),
        ));
    }
    let candidates: Vec<Vec<String>> = records.iter().map(|r| r.question.clone()).collect();
    let references: Vec<Vec<String>> = records.iter().map(|r| r.gold_question.clone()).collect();
    let bleu = corpus_bleu(&candidates, &references, 4)?;
    let rouge = rouge_l(&candidates, &references)?;
    let occurrence = answer_occurrence_rate(&records)?;

    if reader_data.len() < 2 {
        return Err(Failure::new("contract", "readers need at least two labeled training examples"));
    }
    let dev_len = (reader_data.len() / 9).max(1);
    let (fit, dev) = reader_data.split_at(reader_data.len() - dev_len);
    let mut window = WindowReader::default();
    let mut feature = FeatureReader::default();
    window.fit(fit, dev)?;
    feature.fit(fit, dev)?;
    let readers: [&dyn ReaderOracle; 2] = [&window, &feature];
    let difficulty = score_generations(&examples, &records, &readers)?;
    let gap = match &reversed_path {
        Some(p) => {
            let reversed = read(p)?;
            Some(gap_report(&difficulty, &score_generations(&examples, &reversed, &readers)?)?)
        }
        None => None,
    };
    let percent = |x: f64| 100.0 * x;
    let report = json!({
        "scale": "percent",
        "bleu": bleu.scores.iter().map(|&b| percent(b)).collect::<Vec<_>>(),
        "bleu_detail": bleu,
        "rouge_l": percent(rouge),
        "answer_occurrence_rate": percent(occurrence),
        "difficulty": difficulty,
        "gap": gap,
    });
    if let Some(path) = &output {
        write_json(path, &report)?;
    }
    Ok(report)
}

fn gradcheck(s: &Settings) -> Outcome {
    let seed = s.get_or("seed", 7u64)?;
    let eps = s.get_or("eps", 1e-4)?;
    let tolerance = s.get_or("tolerance", 1e-4)?;
    echo("gradcheck", &json!({ "seed": seed, "eps": eps, "tolerance": tolerance }));
    let worst = composite_grad_check(seed, eps)?;
    let pass = worst < tolerance;
    let summary = json!({ "worst_relative_error": worst, "tolerance": tolerance, "pass": pass });
    if pass {
        Ok(summary)
    } else {
        println!("{summary}");
        Err(Failure::new(
            "gradcheck",
            format!("worst relative error {worst:e} exceeds {tolerance:e}"),
        ))
    }
}
