//! `crs`: command-line front end for the conflict reduction engine.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crs_core::artifacts::{ArtifactPaths, RemoteSettings};
use crs_core::corpus::{
    cohen_kappa, created_between, ingest_path, load_annotations, render_stats_table, sample,
    scan_corpus_with, Format, Projection, RawComment,
};
use crs_core::ml::{
    augment, evaluate, evaluate_multilabel, load_model, save_model, train_binary_report,
    train_multilabel, CorpusBuilder, Example, Featurizer, LabelledDoc, Loss, ModelArtifact,
    Stopwords, Thesaurus, TrainConfig,
};
use crs_core::pipeline::{featurize, prepare_examples, render_highlights, Marker};
use crs_core::sentiment::ValenceLexicon;
use crs_core::{ClassSet, Engine, EngineContext, Mode, NormalizeOptions, OffenceClass, RuleSet};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "crs",
    version,
    about = "Detect, classify, highlight and paraphrase offensive comments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one comment.
    Analyze(AnalyzeArgs),
    /// Scan a comment dump and report offence prevalence.
    Scan(ScanArgs),
    /// Train a model from offensive and clean texts.
    Train(TrainArgs),
    /// Evaluate a model on labelled data.
    Eval(EvalArgs),
    /// Print synonym-augmented copies of each input line.
    Augment(AugmentArgs),
    /// Cohen's kappa between two annotation files.
    Kappa(KappaArgs),
    /// Print the three paraphrase suggestions for a comment.
    Paraphrase(ParaphraseArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Detection policy.
    #[arg(long, default_value_t = Mode::Sensitive)]
    mode: Mode,
    #[arg(long, value_name = "FILE")]
    ruleset: Option<PathBuf>,
    /// Binary model artifact; requires --multilabel-model.
    #[arg(long, value_name = "FILE", requires = "multilabel_model")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "model")]
    multilabel_model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    tox_lexicon: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    valence_lexicon: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    thesaurus: Option<PathBuf>,
    #[arg(long, value_name = "URL")]
    rewriter_url: Option<String>,
}

impl EngineArgs {
    fn engine(&self) -> Result<Engine, Failure> {
        let paths = ArtifactPaths {
            ruleset: self.ruleset.clone(),
            model: self.model.clone(),
            multilabel_model: self.multilabel_model.clone(),
            toxicity_lexicon: self.tox_lexicon.clone(),
            valence_lexicon: self.valence_lexicon.clone(),
            thesaurus: self.thesaurus.clone(),
        };
        let remote = RemoteSettings {
            rewriter_url: self.rewriter_url.clone(),
            ..RemoteSettings::default()
        };
        let ctx = EngineContext::load(&paths, &remote, self.mode).map_err(Failure::engine)?;
        Engine::new(ctx).map_err(Failure::engine)
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true))]
struct TextInput {
    #[arg(long, group = "input")]
    text: Option<String>,
    /// Read the comment from standard input.
    #[arg(long, group = "input")]
    stdin: bool,
}

impl TextInput {
    fn read(&self) -> Result<Vec<u8>, Failure> {
        match &self.text {
            Some(t) => Ok(t.clone().into_bytes()),
            None => {
                let mut buf = Vec::new();
                io::stdin()
                    .read_to_end(&mut buf)
                    .context("reading standard input")
                    .map_err(Failure::data)?;
                Ok(buf)
            }
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: TextInput,
    #[command(flatten)]
    engine: EngineArgs,
    /// Print the report as JSON (the default).
    #[arg(long, conflicts_with = "marked")]
    json: bool,
    /// Print the text with offending spans marked, then the suggestions.
    #[arg(long)]
    marked: bool,
    /// Mark spans with terminal underlining instead of brackets.
    #[arg(long, requires = "marked")]
    ansi: bool,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<Format>,
    /// Keep each record with this probability.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Earliest created_at kept (RFC 3339 or YYYY-MM-DD).
    #[arg(long)]
    from: Option<String>,
    /// Latest created_at kept (RFC 3339 or YYYY-MM-DD, inclusive).
    #[arg(long)]
    to: Option<String>,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, value_name = "FILE")]
    out_stats: PathBuf,
    #[arg(long, value_name = "FILE")]
    out_offensive: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Offensive texts: JSONL `{"text", "classes"}` or one text per line.
    #[arg(long, value_name = "FILE")]
    offensive: PathBuf,
    /// Clean texts: JSONL `{"text"}` or one text per line.
    #[arg(long, value_name = "FILE")]
    clean: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Train the one-vs-rest class models instead of the binary model.
    #[arg(long)]
    multilabel: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value = "hinge")]
    loss: Loss,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// JSONL of `{"text", "label", "classes"}`.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Words replaced per line.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synonym thesaurus (TSV); the shipped one when omitted.
    #[arg(long, value_name = "FILE")]
    thesaurus: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Offensive,
    Personal,
    Racial,
    Swearing,
    LabelSet,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Offensive => Projection::Offensive,
            ProjectionArg::Personal => Projection::Class(OffenceClass::Personal),
            ProjectionArg::Racial => Projection::Class(OffenceClass::Racial),
            ProjectionArg::Swearing => Projection::Class(OffenceClass::Swearing),
            ProjectionArg::LabelSet => Projection::LabelSet,
        }
    }
}

#[derive(Debug, Args)]
struct KappaArgs {
    #[arg(long, value_name = "FILE")]
    a: PathBuf,
    #[arg(long, value_name = "FILE")]
    b: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Offensive)]
    projection: ProjectionArg,
}

#[derive(Debug, Args)]
struct ParaphraseArgs {
    #[command(flatten)]
    input: TextInput,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// TOML configuration; CRS_* variables override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

/// A failed command and its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    const DATA: u8 = 2;
    const ENGINE: u8 = 3;

    fn data(e: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::DATA,
            error: e.into(),
        }
    }

    fn engine(e: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::ENGINE,
            error: e.into(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::data)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(Failure::data)
}

fn write_json(out: &mut impl Write, value: &impl serde::Serialize) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(Failure::data)?;
    writeln!(out).map_err(Failure::data)
}

fn analyze_cmd(args: &AnalyzeArgs) -> Result<(), Failure> {
    let engine = args.engine.engine()?;
    let body = args.input.read()?;
    let report = engine
        .analyze_bytes(&body, args.engine.mode)
        .map_err(Failure::data)?;
    let mut out = io::stdout().lock();
    if args.marked {
        let text = std::str::from_utf8(&body).expect("validated by analyze_bytes");
        let marker = if args.ansi {
            Marker::Ansi
        } else {
            Marker::Brackets
        };
        writeln!(out, "{}", render_highlights(text, &report.matches, marker))
            .map_err(Failure::data)?;
        if !report.suggestions.is_empty() {
            writeln!(out, "\nSuggestions:").map_err(Failure::data)?;
            for (i, s) in report.suggestions.iter().enumerate() {
                let flag = if s.fallback { " (fallback)" } else { "" };
                writeln!(out, "  {}. [{}{flag}] {}", i + 1, s.strategy, s.text)
                    .map_err(Failure::data)?;
            }
        }
        Ok(())
    } else {
        write_json(&mut out, &report)
    }
}

fn scan_cmd(args: &ScanArgs) -> Result<(), Failure> {
    let engine = args.engine.engine()?;
    let mut records = ingest_path(&args.input, args.format).map_err(Failure::data)?;
    let mut export = create(&args.out_offensive)?;
    let mut write_err: Option<io::Error> = None;
    let mut stats = {
        let sampled = sample(&mut records, args.fraction, args.seed).map_err(Failure::data)?;
        let stream: Box<dyn Iterator<Item = RawComment>> =
            if args.from.is_some() || args.to.is_some() {
                Box::new(
                    created_between(sampled, args.from.as_deref(), args.to.as_deref())
                        .map_err(Failure::data)?,
                )
            } else {
                Box::new(sampled)
            };
        scan_corpus_with(stream, &engine, args.engine.mode, |r| {
            if write_err.is_none() {
                let res = serde_json::to_writer(&mut export, &r)
                    .map_err(io::Error::from)
                    .and_then(|_| export.write_all(b"\n"));
                write_err = res.err();
            }
        })
    };
    if let Some(e) = write_err {
        return Err(Failure::data(
            anyhow!(e).context("writing offensive export"),
        ));
    }
    export.flush().map_err(Failure::data)?;
    stats.skipped += records.warnings().len() as u64;
    for w in records.warnings().iter().take(10) {
        eprintln!("warning: record {}: {}", w.record, w.reason);
    }
    if records.warnings().len() > 10 {
        eprintln!(
            "warning: {} more records skipped",
            records.warnings().len() - 10
        );
    }
    let mut f = create(&args.out_stats)?;
    write_json(&mut f, &stats)?;
    f.flush().map_err(Failure::data)?;
    print!("{}", render_stats_table(std::slice::from_ref(&stats)));
    Ok(())
}

#[derive(Deserialize)]
struct TextRecord {
    text: String,
    #[serde(default)]
    classes: ClassSet,
}

/// JSONL records or plain lines; blank lines are ignored.
fn read_texts(path: &Path) -> Result<Vec<TextRecord>, Failure> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line
            .with_context(|| format!("{}: line {}", path.display(), i + 1))
            .map_err(Failure::data)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            let r: TextRecord = serde_json::from_str(trimmed)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))
                .map_err(Failure::data)?;
            out.push(r);
        } else {
            out.push(TextRecord {
                text: line,
                classes: ClassSet::new(),
            });
        }
    }
    Ok(out)
}

fn train_cmd(args: &TrainArgs) -> Result<(), Failure> {
    let offensive: Vec<LabelledDoc> = read_texts(&args.offensive)?
        .into_iter()
        .map(|r| LabelledDoc::offensive(r.text, r.classes))
        .collect();
    let clean: Vec<String> = read_texts(&args.clean)?
        .into_iter()
        .map(|r| r.text)
        .collect();
    let cfg = TrainConfig {
        seed: args.seed,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        l2: args.l2,
        loss: args.loss,
    };
    cfg.validate().map_err(Failure::data)?;
    let docs = CorpusBuilder::builtin()
        .build(&offensive, &clean, args.seed)
        .map_err(Failure::data)?;
    let n_off = docs.iter().filter(|d| d.label).count();
    println!(
        "dataset: {} examples ({} offensive / {} non-offensive)",
        docs.len(),
        n_off,
        docs.len() - n_off
    );
    let (vocab, examples) = prepare_examples(
        &docs,
        RuleSet::builtin(),
        ValenceLexicon::builtin(),
        &NormalizeOptions::default(),
    )
    .map_err(Failure::data)?;
    println!("vocabulary: {} terms", vocab.len());
    let artifact = if args.multilabel {
        let offensive: Vec<Example> = examples.into_iter().filter(|e| e.label).collect();
        let model = train_multilabel(&offensive, &cfg).map_err(Failure::data)?;
        println!(
            "trained one-vs-rest models for {}",
            OffenceClass::ALL.map(|c| c.as_str()).join(", ")
        );
        ModelArtifact::MultiLabel { vocab, model }
    } else {
        let report = train_binary_report(&examples, &cfg).map_err(Failure::data)?;
        let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
        println!("final training loss: {last:.6}");
        ModelArtifact::Binary {
            vocab,
            model: report.model,
        }
    };
    let mut f = create(&args.out)?;
    save_model(&artifact, &mut f).map_err(Failure::data)?;
    f.flush().map_err(Failure::data)?;
    println!("wrote {} model to {}", artifact.kind(), args.out.display());
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<(), Failure> {
    let artifact = load_model(open(&args.model)?).map_err(Failure::data)?;
    let mut docs = Vec::new();
    for (i, line) in open(&args.data)?.lines().enumerate() {
        let line = line.map_err(Failure::data)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: LabelledDoc = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", args.data.display(), i + 1))
            .map_err(Failure::data)?;
        docs.push(doc);
    }
    let featurizer = Featurizer::new(
        std::sync::Arc::new(artifact.vocab().clone()),
        RuleSet::builtin(),
        ValenceLexicon::builtin(),
    );
    let examples =
        featurize(&docs, &featurizer, &NormalizeOptions::default()).map_err(Failure::data)?;
    let mut out = io::stdout().lock();
    match &artifact {
        ModelArtifact::Binary { model, .. } => write_json(
            &mut out,
            &evaluate(model, &examples).map_err(Failure::data)?,
        ),
        ModelArtifact::MultiLabel { model, .. } => write_json(
            &mut out,
            &evaluate_multilabel(model, &examples).map_err(Failure::data)?,
        ),
    }
}

fn augment_cmd(args: &AugmentArgs) -> Result<(), Failure> {
    let thesaurus = match &args.thesaurus {
        Some(p) => {
            let mut text = String::new();
            open(p)?.read_to_string(&mut text).map_err(Failure::data)?;
            std::sync::Arc::new(Thesaurus::parse(&text).map_err(Failure::data)?)
        }
        None => Thesaurus::builtin(),
    };
    let stopwords = Stopwords::builtin();
    let opts = NormalizeOptions::default();
    let mut out = io::stdout().lock();
    for (i, line) in open(&args.input)?.lines().enumerate() {
        let line = line.map_err(Failure::data)?;
        let norm = crs_core::normalize(&line, &opts)
            .with_context(|| format!("line {}", i + 1))
            .map_err(Failure::data)?;
        let text = augment(
            &norm,
            &thesaurus,
            &stopwords,
            args.k,
            args.seed.wrapping_add(i as u64),
        );
        writeln!(out, "{text}").map_err(Failure::data)?;
    }
    Ok(())
}

fn kappa_cmd(args: &KappaArgs) -> Result<(), Failure> {
    let load = |p: &Path| -> Result<_, Failure> {
        let format = match args.format {
            Some(f) => f,
            None => Format::from_path(p).map_err(Failure::data)?,
        };
        load_annotations(open(p)?, format).map_err(Failure::data)
    };
    let (a, b) = (load(&args.a)?, load(&args.b)?);
    let result = cohen_kappa(&a, &b, args.projection.into()).map_err(Failure::data)?;
    write_json(&mut io::stdout().lock(), &result)
}

fn paraphrase_cmd(args: &ParaphraseArgs) -> Result<(), Failure> {
    let engine = args.engine.engine()?;
    let body = args.input.read()?;
    let report = engine
        .analyze_bytes(&body, args.engine.mode)
        .map_err(Failure::data)?;
    if !report.verdict.is_offensive() {
        return Err(Failure::data(anyhow!(
            "no offence found; nothing to paraphrase"
        )));
    }
    write_json(
        &mut io::stdout().lock(),
        &serde_json::json!({ "suggestions": report.suggestions }),
    )
}

fn serve_cmd(args: &ServeArgs) -> Result<(), Failure> {
    use crs_service::{serve, AppState, ServiceConfig};
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    let config = ServiceConfig::load(args.config.as_deref()).map_err(Failure::data)?;
    let state = AppState::new(config.clone(), args.config.clone()).map_err(Failure::engine)?;
    let rt = tokio::runtime::Runtime::new().map_err(Failure::engine)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.addr)
            .await
            .with_context(|| format!("cannot bind {}", config.addr))
            .map_err(Failure::engine)?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(state, listener, shutdown)
            .await
            .map_err(Failure::engine)
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Analyze(a) => analyze_cmd(a),
        Command::Scan(a) => scan_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Augment(a) => augment_cmd(a),
        Command::Kappa(a) => kappa_cmd(a),
        Command::Paraphrase(a) => paraphrase_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
