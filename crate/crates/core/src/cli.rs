//! Command-line front end. Every subcommand returns a process exit code:
//! 0 success, 1 validation, 2 runtime, 3 backend protocol.

use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{load_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::evaluation::{
    argument_prf, frame_accuracy, frame_accuracy_by, EvalCounts, EvalReport, PipelineScores,
};
use crate::ontology::{load_ontology, normalize_lemma, OntologyStore};
use crate::pipeline::{
    load_checkpoint, load_dataset, predict_args, predict_frame, predict_frame_with_backend,
    save_checkpoint, serve, AnnotatedSentence, Backend, BridgeBackend, FramePrediction,
    OracleBackend, SimilarityBackend, TrainConfig, TrainedModel,
};
use crate::prompting::ArgumentSpan;
use crate::retrieval::{candidates_for_lemma, CandidateSet, DEFAULT_FALLBACK_K};

pub const TRAIN_REPORT_FILE: &str = "train_report.json";

#[derive(Debug, Parser)]
#[command(
    name = "framespa",
    version,
    about = "Knowledge-augmented frame semantic parsing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the ontology, embeddings and datasets load and agree.
    Validate(RunConfig),
    /// Train frame and argument memory parameters into a checkpoint.
    Train(RunConfig),
    /// Score a checkpoint on a test set.
    Eval(RunConfig),
    /// Show the candidate frames retrieved for a lemma.
    Retrieve {
        lemma: String,
        #[command(flatten)]
        config: RunConfig,
    },
    /// Serve the builtin or oracle backend over the stdio bridge protocol.
    Bridge(RunConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Builtin,
    Oracle(PathBuf),
    Bridge(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "builtin" {
            return Ok(BackendSpec::Builtin);
        }
        if let Some(path) = s.strip_prefix("oracle:") {
            if !path.is_empty() {
                return Ok(BackendSpec::Oracle(PathBuf::from(path)));
            }
        }
        if let Some(cmd) = s.strip_prefix("bridge:") {
            if !cmd.trim().is_empty() {
                return Ok(BackendSpec::Bridge(cmd.to_string()));
            }
        }
        Err(format!(
            "invalid backend {s:?}; expected builtin, oracle:<path> or bridge:<command>"
        ))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// builtin | oracle:<dataset> | bridge:<command>
    #[arg(long, default_value = "builtin")]
    pub backend: BackendSpec,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub lr_pretrain: Option<f64>,
    #[arg(long)]
    pub lr_finetune: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_FALLBACK_K)]
    pub fallback_k: usize,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alignment_weight: Option<f64>,
    /// Condition argument identification on predicted frames as well.
    #[arg(long)]
    pub pipeline: bool,
    /// Bridge response timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    #[arg(long, short)]
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ontology: None,
            embeddings: None,
            train: None,
            test: None,
            checkpoint: None,
            backend: BackendSpec::Builtin,
            out: None,
            seed: 42,
            jobs: 1,
            pretrain_epochs: None,
            finetune_epochs: None,
            lr_pretrain: None,
            lr_finetune: None,
            fallback_k: DEFAULT_FALLBACK_K,
            batch_size: None,
            alignment_weight: None,
            pipeline: false,
            timeout: 30,
            verbose: false,
        }
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            pretrain_epochs: self.pretrain_epochs.unwrap_or(d.pretrain_epochs),
            finetune_epochs: self.finetune_epochs.unwrap_or(d.finetune_epochs),
            lr_pretrain: self.lr_pretrain.unwrap_or(d.lr_pretrain),
            lr_finetune: self.lr_finetune.unwrap_or(d.lr_finetune),
            seed: self.seed,
            fallback_k: self.fallback_k,
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            alignment_weight: self.alignment_weight.unwrap_or(d.alignment_weight),
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Validation(format!("--{flag} is required")))
}

fn finish(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate(cfg) => cmd_validate(&cfg),
        Command::Train(cfg) => cmd_train(&cfg),
        Command::Eval(cfg) => cmd_eval(&cfg),
        Command::Retrieve { lemma, config } => cmd_retrieve(&config, &lemma),
        Command::Bridge(cfg) => cmd_bridge(&cfg),
    }
}

fn load_resources(cfg: &RunConfig) -> Result<(OntologyStore, EmbeddingTable)> {
    let store = load_ontology(required(&cfg.ontology, "ontology")?)?;
    let table = load_embeddings(required(&cfg.embeddings, "embeddings")?)?;
    Ok((store, table))
}

fn cross_validate(store: &OntologyStore, data: &[AnnotatedSentence], path: &Path) -> Result<()> {
    for sentence in data {
        sentence.check_against(store).map_err(|e| match e {
            Error::UnknownFrame(frame) => Error::Validation(format!(
                "{}: instance {} references unknown frame {frame:?}",
                path.display(),
                sentence.id
            )),
            Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })?;
    }
    Ok(())
}

pub fn cmd_validate(cfg: &RunConfig) -> i32 {
    finish(validate(cfg))
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let store = load_ontology(required(&cfg.ontology, "ontology")?)?;
    let mut summary = format!("ontology: {} frames", store.len());
    if let Some(path) = &cfg.embeddings {
        let table = load_embeddings(path)?;
        summary += &format!(", embeddings: {} tokens (dim {})", table.len(), table.dim());
    }
    for path in [&cfg.train, &cfg.test].into_iter().flatten() {
        let data = load_dataset(path)?;
        cross_validate(&store, &data, path)?;
        summary += &format!(", {}: {} instances", path.display(), data.len());
    }
    println!("ok: {summary}");
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> i32 {
    finish(train(cfg))
}

fn train(cfg: &RunConfig) -> Result<()> {
    let (store, table) = load_resources(cfg)?;
    let train_path = required(&cfg.train, "train")?;
    let checkpoint = required(&cfg.checkpoint, "checkpoint")?;
    let data = load_dataset(train_path)?;
    cross_validate(&store, &data, train_path)?;
    let tc = cfg.train_config();
    let (model, report) = with_jobs(cfg.jobs, || {
        crate::pipeline::train(&store, &table, &data, &tc)
    })?;
    save_checkpoint(checkpoint, &model, &tc)?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&checkpoint.join(TRAIN_REPORT_FILE), &report_json)?;
    if let Some(out) = &cfg.out {
        write_file(out, &report_json)?;
    }
    for phase in &report.phases {
        if phase.skipped {
            println!("{:?}: skipped", phase.phase);
            continue;
        }
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let first = phase.epochs.first().unwrap();
        let last = phase.epochs.last().unwrap();
        println!(
            "{:?}: {} epochs, frame loss {} -> {}, arg loss {} -> {}",
            phase.phase,
            phase.epochs.len(),
            fmt(first.frame_id),
            fmt(last.frame_id),
            fmt(first.arg_id),
            fmt(last.arg_id)
        );
    }
    if !report.skipped.is_empty() {
        println!("skipped instances: {}", report.skipped.len());
    }
    println!("checkpoint written to {}", checkpoint.display());
    Ok(())
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn make_backend<'a>(
    spec: &BackendSpec,
    store: &'a OntologyStore,
    table: &'a EmbeddingTable,
    timeout: u64,
) -> Result<Box<dyn Backend + 'a>> {
    Ok(match spec {
        BackendSpec::Builtin => Box::new(SimilarityBackend::new(store, table)),
        BackendSpec::Oracle(path) => Box::new(OracleBackend::from_dataset(&load_dataset(path)?)?),
        BackendSpec::Bridge(command) => {
            Box::new(BridgeBackend::spawn(command, Duration::from_secs(timeout))?)
        }
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> i32 {
    finish(eval(cfg).and_then(|report| {
        print!("{}", report.to_table(cfg.verbose));
        if let Some(out) = &cfg.out {
            write_file(out, &report.to_json())?;
        }
        Ok(())
    }))
}

/// Runs evaluation and returns the report without printing or writing it.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let (store, table) = load_resources(cfg)?;
    let test_path = required(&cfg.test, "test")?;
    let (model, _) = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
    if model.frame_id.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.frame_id.dim(),
            found: table.dim(),
        });
    }
    let data = load_dataset(test_path)?;
    cross_validate(&store, &data, test_path)?;
    if let Some(s) = data.iter().find(|s| s.gold_frame.is_none()) {
        return Err(Error::MissingGold(s.id));
    }
    let mut backend = make_backend(&cfg.backend, &store, &table, cfg.timeout)?;
    evaluate_dataset(
        &store,
        &table,
        &model,
        &data,
        backend.as_mut(),
        FrameSource::for_backend(&cfg.backend),
        cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSource {
    /// Attention argmax over candidate frames.
    Attention,
    /// The generator's frame_id output.
    Backend,
}

impl FrameSource {
    /// The builtin backend stands in for a generator only on arguments;
    /// frames then come from the trained attention.
    pub fn for_backend(spec: &BackendSpec) -> Self {
        match spec {
            BackendSpec::Builtin => FrameSource::Attention,
            _ => FrameSource::Backend,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FrameSource::Attention => "attention",
            FrameSource::Backend => "backend",
        }
    }
}

pub fn evaluate_dataset(
    store: &OntologyStore,
    table: &EmbeddingTable,
    model: &TrainedModel,
    data: &[AnnotatedSentence],
    backend: &mut dyn Backend,
    source: FrameSource,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let mut request_id = 0u64;
    let mut next_id = || {
        request_id += 1;
        request_id
    };

    let frame_preds: Vec<FramePrediction> = match source {
        FrameSource::Attention => with_jobs(cfg.jobs, || {
            data.par_iter()
                .map(|s| predict_frame(store, table, &model.frame_id, s, cfg.fallback_k))
                .collect::<Result<Vec<_>>>()
        })?,
        FrameSource::Backend => data
            .iter()
            .map(|s| {
                predict_frame_with_backend(
                    store,
                    table,
                    &model.frame_id,
                    s,
                    cfg.fallback_k,
                    backend,
                    next_id(),
                )
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let pairs: Vec<(&AnnotatedSentence, &str)> = data
        .iter()
        .zip(&frame_preds)
        .map(|(s, p)| (s, p.frame.as_str()))
        .collect();
    let acc = frame_accuracy(store, &pairs)?;
    let by_candidates = {
        let ambiguous: std::collections::HashSet<usize> = data
            .iter()
            .zip(&frame_preds)
            .filter(|(_, p)| p.candidates.len() >= 2)
            .map(|(s, _)| s.id)
            .collect();
        frame_accuracy_by(&pairs, |s| ambiguous.contains(&s.id))?
    };

    let mut gold_args = Vec::with_capacity(data.len());
    let mut predicted_args = Vec::with_capacity(data.len());
    let mut malformed = 0;
    for sentence in data {
        let frame = sentence.gold_frame.as_deref().expect("gold checked");
        let pred = predict_args(
            store,
            table,
            &model.arg_id,
            sentence,
            frame,
            backend,
            next_id(),
        )?;
        malformed += pred.malformed;
        gold_args.push(sentence.gold_args.clone());
        predicted_args.push(pred.spans);
    }
    let scores = argument_prf(&gold_args, &predicted_args)?;

    let pipeline = if cfg.pipeline {
        let mut chained: Vec<Vec<ArgumentSpan>> = Vec::with_capacity(data.len());
        let mut pipeline_malformed = 0;
        for (sentence, pred) in data.iter().zip(&frame_preds) {
            if store.frame(&pred.frame).is_none() {
                chained.push(Vec::new());
                continue;
            }
            let args = predict_args(
                store,
                table,
                &model.arg_id,
                sentence,
                &pred.frame,
                backend,
                next_id(),
            )?;
            pipeline_malformed += args.malformed;
            chained.push(args.spans);
        }
        let s = argument_prf(&gold_args, &chained)?;
        Some(PipelineScores {
            arg_precision: s.precision,
            arg_recall: s.recall,
            arg_f1: s.f1,
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
            malformed: pipeline_malformed,
        })
    } else {
        None
    };

    Ok(EvalReport {
        frame_acc_all: acc.acc_all,
        frame_acc_amb: acc.acc_amb,
        frame_acc_amb_by_candidates: by_candidates.acc_amb,
        arg_precision: scores.precision,
        arg_recall: scores.recall,
        arg_f1: scores.f1,
        counts: EvalCounts {
            n_all: acc.n_all,
            n_amb: acc.n_amb,
            n_amb_by_candidates: by_candidates.n_amb,
            tp: scores.tp,
            fp: scores.fp,
            fn_: scores.fn_,
            malformed,
        },
        frame_source: source.name().to_string(),
        pipeline,
    })
}

#[derive(Debug, Serialize)]
pub struct RetrievalReport {
    pub lemma: String,
    pub fallback: bool,
    pub candidates: CandidateSet,
}

pub fn cmd_retrieve(cfg: &RunConfig, lemma: &str) -> i32 {
    finish(retrieve(cfg, lemma).and_then(|report| {
        print!("{}", format_retrieval(&report));
        if let Some(out) = &cfg.out {
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_file(out, &json)?;
        }
        Ok(())
    }))
}

pub fn retrieve(cfg: &RunConfig, lemma: &str) -> Result<RetrievalReport> {
    let (store, table) = load_resources(cfg)?;
    let candidates = candidates_for_lemma(&store, &table, lemma, cfg.fallback_k)?;
    Ok(RetrievalReport {
        lemma: normalize_lemma(lemma),
        fallback: candidates.used_fallback(),
        candidates,
    })
}

pub fn format_retrieval(report: &RetrievalReport) -> String {
    let mut out = format!(
        "lemma: {}\nfallback: {}\ncandidates:\n",
        report.lemma, report.fallback
    );
    for span in &report.candidates.spans {
        out += &format!("  {:<20} {}\n", span.key, span.text);
    }
    if let Some(matches) = &report.candidates.fallback {
        out += "nearest lexical units:\n";
        for m in matches {
            out += &format!(
                "  {:<20} {:.6}  {}\n",
                m.lemma,
                m.cosine,
                m.frames.join(", ")
            );
        }
    }
    out
}

pub fn cmd_bridge(cfg: &RunConfig) -> i32 {
    finish(bridge(cfg))
}

fn bridge(cfg: &RunConfig) -> Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    match &cfg.backend {
        BackendSpec::Oracle(path) => {
            let mut backend = OracleBackend::from_dataset(&load_dataset(path)?)?;
            serve(&mut backend, BufReader::new(stdin.lock()), stdout.lock())?;
        }
        BackendSpec::Builtin => {
            let (store, table) = load_resources(cfg)?;
            let mut backend = SimilarityBackend::new(&store, &table);
            serve(&mut backend, BufReader::new(stdin.lock()), stdout.lock())?;
        }
        BackendSpec::Bridge(_) => {
            return Err(Error::Validation(
                "bridge cannot serve another bridge".into(),
            ))
        }
    }
    Ok(())
}
