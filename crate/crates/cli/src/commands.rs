use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use callintent_core::container::{ModelContainer, TrainingSummary};
use callintent_core::convnet::{train_with, Classifier, CnnModel, EncodedSet};
use callintent_core::corpus::{
    build_vocabulary, encode, load_dataset, split_dataset, write_dataset, Document, LabelSet,
    Vocabulary,
};
use callintent_core::embeddings::{build_cooccurrence, glove_train, load_pretrained, sgns_train};
use callintent_core::eval::{macro_report, ConfusionMatrix, MetricsReport};
use callintent_core::synth::synthesize;
use callintent_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::settings::{
    apply_overrides, sidecar_path, write_file, write_json, GloveSettings, PrepareSettings,
    RunRecord, SgnsSettings, SynthSettings, TrainSettings,
};

#[derive(Debug, Parser)]
#[command(name = "callintent", version, about = "Call-intent text classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/validation/test split of a labelled dataset.
    Prepare(PrepareArgs),
    /// Train GloVe vectors on a dataset's text.
    TrainGlove(EmbedArgs),
    /// Train skip-gram vectors on a dataset's text.
    TrainSgns(EmbedArgs),
    /// Train the convolutional classifier.
    Train(TrainArgs),
    /// Score a model on a labelled set, or score a predictions file.
    Eval(EvalArgs),
    /// Classify text with a trained model.
    Predict(PredictArgs),
    /// Generate a synthetic labelled corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// train,validation,test fractions
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Setting override as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Pretrained vectors in text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "test", conflicts_with = "predictions")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// JSON lines of `{"gold": label, "pred": label}`.
    #[arg(long, required_unless_present = "model")]
    pub predictions: Option<PathBuf>,
    /// Label order for `--predictions`.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// Dataset JSON lines; labels are ignored.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 400)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a, out),
        Command::TrainGlove(a) => cmd_train_glove(a, out),
        Command::TrainSgns(a) => cmd_train_sgns(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out).map(|_| ()),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn label_set(labels: &Option<Vec<String>>) -> Result<LabelSet> {
    match labels {
        Some(l) => LabelSet::new(l.iter().cloned()),
        None => Ok(LabelSet::default()),
    }
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let settings = SynthSettings { per_class: a.per_class, seed: a.seed };
    settings.validate()?;
    let docs = synthesize(settings.per_class, settings.seed);
    write_dataset(&a.out, &docs)?;
    write_json(&sidecar_path(&a.out), &RunRecord::new("synth", &[], &settings))?;
    writeln!(out, "wrote {} documents to {}", docs.len(), a.out.display()).map_err(stdout_err)
}

#[derive(Serialize)]
struct SplitManifest<'a> {
    run: RunRecord,
    counts: &'a [ClassCounts<'a>],
}

#[derive(Serialize)]
struct ClassCounts<'a> {
    label: &'a str,
    train: usize,
    validation: usize,
    test: usize,
}

pub fn cmd_prepare(a: &PrepareArgs, out: &mut dyn Write) -> Result<()> {
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Error::Config("--ratios takes exactly three values".into()))?;
    let settings = PrepareSettings { labels: label_set(&a.labels)?, ratios, seed: a.seed };
    let docs = load_dataset(&a.input, &settings.labels)?;
    if docs.is_empty() {
        return Err(Error::Data(format!("{}: no documents", a.input.display())));
    }
    let split = split_dataset(&docs, settings.ratios, settings.seed, &settings.labels)?;

    let count = |set: &[Document], l: &str| set.iter().filter(|d| d.label.as_deref() == Some(l)).count();
    let counts: Vec<ClassCounts> = settings
        .labels
        .names()
        .iter()
        .map(|l| ClassCounts {
            label: l,
            train: count(&split.train, l),
            validation: count(&split.validation, l),
            test: count(&split.test, l),
        })
        .collect();

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    write_dataset(a.out_dir.join("train.jsonl"), &split.train)?;
    write_dataset(a.out_dir.join("validation.jsonl"), &split.validation)?;
    write_dataset(a.out_dir.join("test.jsonl"), &split.test)?;
    let run = RunRecord::new("prepare", &[("input", &a.input)], &settings);
    write_json(&a.out_dir.join("run.json"), &SplitManifest { run, counts: &counts })?;

    let w = settings.labels.names().iter().map(|l| l.len()).max().unwrap_or(5).max(5);
    let mut table = format!("{:<w$}  {:>6}  {:>10}  {:>6}\n", "class", "train", "validation", "test");
    for c in &counts {
        table += &format!("{:<w$}  {:>6}  {:>10}  {:>6}\n", c.label, c.train, c.validation, c.test);
    }
    table += &format!(
        "{:<w$}  {:>6}  {:>10}  {:>6}\n",
        "total",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    out.write_all(table.as_bytes()).map_err(stdout_err)
}

/// Tokenized documents of an embedding corpus and the vocabulary built from them.
fn embedding_corpus(
    path: &Path,
    labels: &LabelSet,
    tokenizer: &callintent_core::corpus::TokenizerConfig,
    min_count: u64,
) -> Result<(Vec<Vec<u32>>, Vocabulary)> {
    let mut docs = load_dataset(path, labels)?;
    if docs.is_empty() {
        return Err(Error::Data(format!("{}: no documents", path.display())));
    }
    for d in &mut docs {
        d.tokenize(tokenizer);
    }
    let vocab = build_vocabulary(&docs, min_count)?;
    let ids = docs
        .iter()
        .map(|d| encode(&d.tokens, &vocab, d.tokens.len()))
        .collect();
    Ok((ids, vocab))
}

pub fn cmd_train_glove(a: &EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let s: GloveSettings = apply_overrides(&GloveSettings::default(), &a.overrides)?;
    s.validate()?;
    let (ids, vocab) = embedding_corpus(&a.corpus, &s.labels, &s.tokenizer, s.min_count)?;
    let x = build_cooccurrence(&ids, vocab.len(), s.window, s.distance_weighting)?;
    let trained = glove_train(&x, &vocab, &s.glove)?;
    trained.table.save(&a.out)?;
    write_json(&sidecar_path(&a.out), &RunRecord::new("train-glove", &[("corpus", &a.corpus)], &s))?;
    for (e, l) in trained.history.iter().enumerate() {
        writeln!(out, "epoch {e:>3}  loss {l:.6}").map_err(stdout_err)?;
    }
    writeln!(out, "wrote {} vectors of dimension {} to {}", trained.table.len(), s.glove.dim, a.out.display())
        .map_err(stdout_err)
}

pub fn cmd_train_sgns(a: &EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let s: SgnsSettings = apply_overrides(&SgnsSettings::default(), &a.overrides)?;
    s.sgns.validate()?;
    let (ids, vocab) = embedding_corpus(&a.corpus, &s.labels, &s.tokenizer, s.min_count)?;
    let (table, history) = sgns_train(&ids, &vocab, &s.sgns)?;
    table.save(&a.out)?;
    write_json(&sidecar_path(&a.out), &RunRecord::new("train-sgns", &[("corpus", &a.corpus)], &s))?;
    for (e, l) in history.iter().enumerate() {
        writeln!(out, "epoch {e:>3}  loss {l:.6}").map_err(stdout_err)?;
    }
    writeln!(out, "wrote {} vectors of dimension {} to {}", table.len(), s.sgns.dim, a.out.display())
        .map_err(stdout_err)
}

fn history_path(a: &TrainArgs) -> PathBuf {
    a.history.clone().unwrap_or_else(|| {
        let mut name = a.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".history.jsonl");
        a.out.with_file_name(name)
    })
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let s: TrainSettings = apply_overrides(&TrainSettings::default(), &a.overrides)?;
    s.validate()?;

    let mut train_docs = load_dataset(&a.train, &s.labels)?;
    if train_docs.is_empty() {
        return Err(Error::Data(format!("{}: no documents", a.train.display())));
    }
    let val_docs = match &a.validation {
        Some(p) => load_dataset(p, &s.labels)?,
        None => Vec::new(),
    };
    for d in &mut train_docs {
        d.tokenize(&s.tokenizer);
    }
    let vocab = build_vocabulary(&train_docs, s.min_count)?;
    let mut model = CnnModel::<f32>::new(s.cnn.clone(), s.labels.clone(), vocab.len())?;
    if let Some(p) = &a.embeddings {
        let table = load_pretrained(p)?;
        let copied = model.load_embeddings(&table, &vocab)?;
        if !a.quiet {
            eprintln!("initialized {copied} of {} vocabulary rows from {}", vocab.len() - 2, p.display());
        }
    }
    let classifier = Classifier { model, vocab, tokenizer: s.tokenizer.clone() };
    let train_set = classifier.encode_documents(&train_docs)?;
    let val_set = classifier.encode_documents(&val_docs)?;

    let mut history = String::new();
    let quiet = a.quiet;
    let outcome = train_with(classifier.model.clone(), &train_set, &val_set, |r| {
        history.push_str(&serde_json::to_string(r).expect("epoch record serializes"));
        history.push('\n');
        if !quiet {
            eprintln!(
                "epoch {:>3}  lr {:.3e}  loss {:.4}  train {:.4}  val {:.4}",
                r.epoch, r.lr, r.train_loss, r.train_acc, r.val_acc
            );
        }
    })?;
    let hist_path = history_path(a);
    write_file(&hist_path, history.as_bytes())?;

    let mut inputs: Vec<(&str, &Path)> = vec![("train", &a.train)];
    if let Some(p) = &a.validation {
        inputs.push(("validation", p));
    }
    if let Some(p) = &a.embeddings {
        inputs.push(("embeddings", p));
    }
    let run = RunRecord::new("train", &inputs, &s);
    let summary = TrainingSummary { best_epoch: outcome.best_epoch, epochs: outcome.history.clone() };
    let trained = Classifier { model: outcome.model, ..classifier };
    ModelContainer::from_classifier(&trained, Some(summary), run.to_value()).save(&a.out)?;

    let best = &outcome.history[outcome.best_epoch];
    writeln!(
        out,
        "best epoch {} (train acc {:.4}, val acc {:.4}); model written to {}; history to {}",
        best.epoch,
        best.train_acc,
        best.val_acc,
        a.out.display(),
        hist_path.display()
    )
    .map_err(stdout_err)
}

#[derive(Debug, Deserialize)]
struct PredictionRecord {
    gold: String,
    pred: String,
}

fn read_predictions(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (mut gold, mut pred) = (Vec::new(), Vec::new());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, format!("malformed prediction: {e}")))?;
        gold.push(r.gold);
        pred.push(r.pred);
    }
    Ok((gold, pred))
}

/// Labels used in a dataset file that `labels` lacks, in sorted order.
fn foreign_labels(path: &Path, labels: &LabelSet) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut extra = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Document = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, format!("malformed record: {e}")))?;
        if let Some(l) = d.label {
            if labels.index_of(&l).is_err() {
                extra.insert(l);
            }
        }
    }
    Ok(extra.into_iter().collect())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    report: &'a MetricsReport,
    run: RunRecord,
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<MetricsReport> {
    let (cm, run) = if let Some(p) = &a.predictions {
        let labels = label_set(&a.labels)?;
        let (gold, pred) = read_predictions(p)?;
        if gold.is_empty() {
            return Err(Error::Data(format!("{}: no predictions", p.display())));
        }
        let cm = ConfusionMatrix::from_labels(&gold, &pred, &labels)?;
        (cm, RunRecord::new("eval", &[("predictions", p)], &labels))
    } else {
        let model_path = a.model.as_ref().ok_or_else(|| Error::Config("eval needs --model or --predictions".into()))?;
        let test_path = a.test.as_ref().ok_or_else(|| Error::Config("eval --model needs --test".into()))?;
        let container = ModelContainer::load(model_path)?;
        let c = container.classifier();
        let extra = foreign_labels(test_path, &c.model.labels)?;
        if !extra.is_empty() {
            return Err(Error::Data(format!(
                "test labels not in the model's label set [{}]: {}",
                c.model.labels.names().join(", "),
                extra.join(", ")
            )));
        }
        let docs = load_dataset(test_path, &c.model.labels)?;
        if docs.is_empty() {
            return Err(Error::Data(format!("{}: no documents", test_path.display())));
        }
        let set: EncodedSet = c.encode_documents(&docs)?;
        let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        let pred: Vec<usize> = c.predict_many(&texts)?.into_iter().map(|p| p.class).collect();
        let cm = ConfusionMatrix::from_indices(&set.labels, &pred, &c.model.labels)?;
        warn_if_train_below_validation(&container, test_path, &cm);
        let run = RunRecord::new("eval", &[("model", model_path), ("test", test_path)], &container.metadata.run);
        (cm, run)
    };
    let report = macro_report(&cm)?;
    write!(out, "{report}").map_err(stdout_err)?;
    if let Some(p) = &a.out {
        write_json(p, &EvalOutput { report: &report, run })?;
    }
    Ok(report)
}

/// Accuracy on the training file should not fall below the best validation accuracy.
fn warn_if_train_below_validation(container: &ModelContainer, test_path: &Path, cm: &ConfusionMatrix) {
    let trained_on = container.metadata.run.pointer("/inputs/train").and_then(|v| v.as_str());
    let Some(summary) = &container.metadata.training else { return };
    if trained_on != Some(test_path.display().to_string().as_str()) {
        return;
    }
    let Some(best) = summary.epochs.get(summary.best_epoch) else { return };
    let acc = cm.trace() as f64 / cm.total().max(1) as f64;
    if acc + 1e-12 < best.val_acc {
        eprintln!(
            "warning: accuracy on the training set ({acc:.4}) is below the recorded validation accuracy ({:.4})",
            best.val_acc
        );
    }
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    label: &'a str,
    probs: &'a [f64],
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let c = ModelContainer::load(&a.model)?.classifier();
    let docs: Vec<Document> = match (&a.text, &a.input) {
        (Some(t), _) => vec![Document::new("text", None, t.as_str())],
        (None, Some(p)) => load_dataset(p, &c.model.labels)?,
        (None, None) => return Err(Error::Config("predict needs --text or --input".into())),
    };
    let mut buf = String::new();
    for chunk in docs.chunks(256) {
        let texts: Vec<&str> = chunk.iter().map(|d| d.text.as_str()).collect();
        for (d, p) in chunk.iter().zip(c.predict_many(&texts)?) {
            let line = PredictionLine { id: &d.id, label: &p.label, probs: &p.probs };
            buf.push_str(&serde_json::to_string(&line).expect("prediction serializes"));
            buf.push('\n');
        }
    }
    out.write_all(buf.as_bytes()).map_err(stdout_err)
}

/// Exit status for an error: 1 usage/config, 2 data, 3 numeric failure.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric(_) | Error::Diverged { .. } => 3,
        _ => 2,
    }
}

/// One line: `E<code>:<kind>: <message>`.
pub fn error_line(e: &Error) -> String {
    let code = exit_code(e);
    let kind = match code {
        1 => "config",
        3 => "numeric",
        _ => "data",
    };
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("E{code}:{kind}: {msg}")
}
