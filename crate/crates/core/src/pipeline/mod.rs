//! Datasets, backends, the two-phase training schedule, and prediction.
//!
//! Training runs an exemplar pre-training phase followed by a fine-tuning
//! phase on the regular training data. Frame identification and argument
//! identification keep separate [`MemoryParams`]; within an epoch their
//! batches alternate one to one.

mod backend;
mod bridge;
mod checkpoint;
mod dataset;

pub use backend::{
    Backend, BackendRequest, BackendResponse, OracleBackend, SimilarityBackend, Task,
    DEFAULT_ROLE_THRESHOLD,
};
pub use bridge::{serve, BridgeBackend, DEFAULT_TIMEOUT};
pub use checkpoint::{
    config_hash, load_checkpoint, save_checkpoint, Manifest, ARG_ID_FILE, FRAME_ID_FILE,
    MANIFEST_FILE,
};
pub use dataset::{load_dataset, parse_dataset, AnnotatedSentence, TargetSpan};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::mkem::{
    alignment_grad, attend_input, grad_input, init_params, sgd_step, AttentionResult, MemoryGrads,
    MemoryInput, MemoryParams,
};
use crate::ontology::OntologyStore;
use crate::prompting::{
    arg_id_head, argument_target, frame_id_head, mark_target, parse_arguments, ArgumentSpan,
    DiscretePrompt, PromptBundle,
};
use crate::retrieval::{candidates_for_arg_id, candidates_for_frame_id, DEFAULT_FALLBACK_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    pub seed: u64,
    pub fallback_k: usize,
    pub batch_size: usize,
    /// Weight of the auxiliary `W_out` alignment loss; 0 disables it.
    pub alignment_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 1,
            finetune_epochs: 3,
            lr_pretrain: 5e-4,
            lr_finetune: 2e-4,
            seed: 42,
            fallback_k: DEFAULT_FALLBACK_K,
            batch_size: 8,
            alignment_weight: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [
            ("lr_pretrain", self.lr_pretrain),
            ("lr_finetune", self.lr_finetune),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {lr}"
                )));
            }
        }
        if self.fallback_k == 0 {
            return Err(Error::Validation("fallback_k must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if !(self.alignment_weight >= 0.0 && self.alignment_weight.is_finite()) {
            return Err(Error::Validation(
                "alignment_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Task-specific memory parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub frame_id: MemoryParams,
    pub arg_id: MemoryParams,
}

impl TrainedModel {
    /// Fresh parameters; the argument task draws from `seed + 1`.
    pub fn init(dim: usize, seed: u64) -> Self {
        TrainedModel {
            frame_id: init_params(dim, seed),
            arg_id: init_params(dim, seed.wrapping_add(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub frame_id: Option<f64>,
    pub arg_id: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub lr: f64,
    pub instances: usize,
    pub skipped: bool,
    pub epochs: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedInstance {
    pub id: usize,
    pub task: Task,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub phases: Vec<PhaseReport>,
    pub skipped: Vec<SkippedInstance>,
}

impl TrainReport {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    /// True when no epoch ran in any phase.
    pub fn is_empty(&self) -> bool {
        self.phases.iter().all(|p| p.epochs.is_empty())
    }
}

/// A prepared training example for one task.
struct Example {
    id: usize,
    exemplar: bool,
    input: MemoryInput,
    golds: Vec<usize>,
}

fn prepare(
    store: &OntologyStore,
    table: &EmbeddingTable,
    data: &[AnnotatedSentence],
    fallback_k: usize,
    skipped: &mut Vec<SkippedInstance>,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let mut frames = Vec::new();
    let mut args = Vec::new();
    for sentence in data {
        let Some(gold) = &sentence.gold_frame else {
            skipped.push(SkippedInstance {
                id: sentence.id,
                task: Task::FrameId,
                reason: "no gold frame".into(),
            });
            continue;
        };
        sentence.check_against(store)?;

        let mut candidates = candidates_for_frame_id(store, table, sentence, fallback_k)?;
        if candidates.attach_gold(gold) {
            frames.push(Example {
                id: sentence.id,
                exemplar: sentence.exemplar,
                input: MemoryInput::new(table, &sentence.tokens, &candidates)?,
                golds: vec![candidates.gold_index.unwrap()],
            });
        } else {
            skipped.push(SkippedInstance {
                id: sentence.id,
                task: Task::FrameId,
                reason: format!(
                    "gold frame {gold} not among candidates for {:?}",
                    sentence.target_lemma()
                ),
            });
        }

        let roles = candidates_for_arg_id(store, gold)?;
        if roles.is_empty() || sentence.gold_args.is_empty() {
            continue;
        }
        let golds = sentence
            .gold_args
            .iter()
            .map(|a| {
                roles
                    .position(&a.role)
                    .expect("roles checked against ontology")
            })
            .collect();
        args.push(Example {
            id: sentence.id,
            exemplar: sentence.exemplar,
            input: MemoryInput::new(table, &sentence.tokens, &roles)?,
            golds,
        });
    }
    Ok((frames, args))
}

/// Loss and gradients for one example, averaged over its gold slots.
fn example_grads(
    params: &MemoryParams,
    example: &Example,
    alignment_weight: f64,
) -> Result<(MemoryGrads, f64)> {
    let dim = params.dim();
    let mut grads = MemoryGrads::zeros(dim);
    let mut loss = 0.0;
    let scale = 1.0 / example.golds.len() as f64;
    for &gold in &example.golds {
        let (g, l) = grad_input(params, &example.input, gold)?;
        grads.w_in.add_scaled(scale, &g);
        loss += scale * l;
        if alignment_weight > 0.0 {
            let (g, l) = alignment_grad(params, &example.input, gold)?;
            grads.w_out.add_scaled(scale * alignment_weight, &g);
            loss += scale * alignment_weight * l;
        }
    }
    if !loss.is_finite() {
        return Err(Error::TrainingAborted {
            instance: example.id,
            reason: format!("non-finite loss {loss}"),
        });
    }
    Ok((grads, loss))
}

/// One minibatch update. Per-example work may run in parallel; the sum is
/// taken in batch order so results do not depend on the thread count.
fn batch_step(
    params: &MemoryParams,
    batch: &[&Example],
    lr: f64,
    alignment_weight: f64,
) -> Result<(MemoryParams, f64)> {
    let results: Vec<Result<(MemoryGrads, f64)>> = batch
        .par_iter()
        .map(|ex| example_grads(params, ex, alignment_weight))
        .collect();
    let mut total = MemoryGrads::zeros(params.dim());
    let mut loss_sum = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (result, ex) in results.into_iter().zip(batch) {
        let (g, l) = result?;
        total.w_in.add_scaled(scale, &g.w_in);
        total.w_out.add_scaled(scale, &g.w_out);
        loss_sum += l;
        if !total.w_in.is_finite() || !total.w_out.is_finite() {
            return Err(Error::TrainingAborted {
                instance: ex.id,
                reason: "non-finite gradient".into(),
            });
        }
    }
    Ok((sgd_step(params, &total, lr)?, loss_sum))
}

fn epoch_seed(seed: u64, phase: Phase, epoch: usize) -> u64 {
    let phase_tag = match phase {
        Phase::Pretrain => 1u64,
        Phase::Finetune => 2u64,
    };
    seed ^ (phase_tag << 56) ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs the two-phase schedule and returns the trained parameters.
pub fn train(
    store: &OntologyStore,
    table: &EmbeddingTable,
    data: &[AnnotatedSentence],
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training data is empty".into()));
    }
    let mut model = TrainedModel::init(table.dim(), cfg.seed);
    let mut report = TrainReport::default();
    let (frame_examples, arg_examples) =
        prepare(store, table, data, cfg.fallback_k, &mut report.skipped)?;

    let schedule = [
        (Phase::Pretrain, true, cfg.pretrain_epochs, cfg.lr_pretrain),
        (Phase::Finetune, false, cfg.finetune_epochs, cfg.lr_finetune),
    ];
    for (phase, exemplar, epochs, lr) in schedule {
        let frames: Vec<&Example> = frame_examples
            .iter()
            .filter(|e| e.exemplar == exemplar)
            .collect();
        let args: Vec<&Example> = arg_examples
            .iter()
            .filter(|e| e.exemplar == exemplar)
            .collect();
        let instances = data.iter().filter(|s| s.exemplar == exemplar).count();
        let mut phase_report = PhaseReport {
            phase,
            lr,
            instances,
            skipped: false,
            epochs: Vec::new(),
        };
        if epochs == 0 || (frames.is_empty() && args.is_empty()) {
            if epochs > 0 {
                log::warn!("{phase:?} phase skipped: no eligible instances");
            }
            phase_report.skipped = true;
            report.phases.push(phase_report);
            continue;
        }
        for epoch in 0..epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, phase, epoch));
            let mut frame_order = frames.clone();
            frame_order.shuffle(&mut rng);
            let mut arg_order = args.clone();
            arg_order.shuffle(&mut rng);

            let frame_batches: Vec<&[&Example]> = frame_order.chunks(cfg.batch_size).collect();
            let arg_batches: Vec<&[&Example]> = arg_order.chunks(cfg.batch_size).collect();
            let (mut frame_loss, mut arg_loss) = (0.0, 0.0);
            for i in 0..frame_batches.len().max(arg_batches.len()) {
                if let Some(batch) = frame_batches.get(i) {
                    let (next, loss) =
                        batch_step(&model.frame_id, batch, lr, cfg.alignment_weight)?;
                    model.frame_id = next;
                    frame_loss += loss;
                }
                if let Some(batch) = arg_batches.get(i) {
                    let (next, loss) = batch_step(&model.arg_id, batch, lr, cfg.alignment_weight)?;
                    model.arg_id = next;
                    arg_loss += loss;
                }
            }
            let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
            let entry = EpochLoss {
                epoch: epoch + 1,
                frame_id: mean(frame_loss, frames.len()),
                arg_id: mean(arg_loss, args.len()),
            };
            log::debug!("{phase:?} epoch {}: {entry:?}", epoch + 1);
            phase_report.epochs.push(entry);
        }
        report.phases.push(phase_report);
    }
    Ok((model, report))
}

/// Mean training loss of each task under `model`, without updating it.
pub fn evaluate_loss(
    store: &OntologyStore,
    table: &EmbeddingTable,
    data: &[AnnotatedSentence],
    model: &TrainedModel,
    fallback_k: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut skipped = Vec::new();
    let (frames, args) = prepare(store, table, data, fallback_k, &mut skipped)?;
    let mean = |examples: &[Example], params: &MemoryParams| -> Result<Option<f64>> {
        if examples.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for ex in examples {
            total += example_grads(params, ex, 0.0)?.1;
        }
        Ok(Some(total / examples.len() as f64))
    };
    Ok((mean(&frames, &model.frame_id)?, mean(&args, &model.arg_id)?))
}

pub fn frame_discrete_prompt(sentence: &AnnotatedSentence) -> Result<DiscretePrompt> {
    Ok(DiscretePrompt::new(
        frame_id_head(),
        mark_target(&sentence.tokens, sentence.target_start, sentence.target_end)?,
    ))
}

pub fn arg_discrete_prompt(sentence: &AnnotatedSentence, frame: &str) -> Result<DiscretePrompt> {
    Ok(DiscretePrompt::new(
        arg_id_head(frame)?,
        mark_target(&sentence.tokens, sentence.target_start, sentence.target_end)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePrediction {
    pub frame: String,
    pub weights: Vec<f64>,
    /// Candidate keys, aligned with `weights`.
    pub candidates: Vec<String>,
    pub fallback: bool,
}

/// Frame-identification prompt and the attention that produced `P_C`.
pub fn build_frame_prompt(
    store: &OntologyStore,
    table: &EmbeddingTable,
    params: &MemoryParams,
    sentence: &AnnotatedSentence,
    fallback_k: usize,
) -> Result<(PromptBundle, FramePrediction)> {
    let candidates = candidates_for_frame_id(store, table, sentence, fallback_k)?;
    let attention = attend_input(
        params,
        &MemoryInput::new(table, &sentence.tokens, &candidates)?,
    )?;
    let keys: Vec<String> = candidates.keys().map(String::from).collect();
    let frame = argmax_key(&attention, &keys);
    let bundle = PromptBundle {
        continuous: attention.p_c,
        discrete: frame_discrete_prompt(sentence)?,
        target: sentence.gold_frame.clone(),
    };
    Ok((
        bundle,
        FramePrediction {
            frame,
            weights: attention.weights,
            candidates: keys,
            fallback: candidates.fallback.is_some(),
        },
    ))
}

/// Key with the largest weight; exact ties go to the lexicographically
/// smallest key.
fn argmax_key(attention: &AttentionResult, keys: &[String]) -> String {
    let mut best = 0;
    for i in 1..keys.len() {
        let (w, b) = (attention.weights[i], attention.weights[best]);
        if w > b || (w == b && keys[i] < keys[best]) {
            best = i;
        }
    }
    keys[best].clone()
}

/// Frame identification by attention argmax over the candidate frames.
pub fn predict_frame(
    store: &OntologyStore,
    table: &EmbeddingTable,
    params: &MemoryParams,
    sentence: &AnnotatedSentence,
    fallback_k: usize,
) -> Result<FramePrediction> {
    Ok(build_frame_prompt(store, table, params, sentence, fallback_k)?.1)
}

/// Frame identification by a generator: the backend's output is the frame.
pub fn predict_frame_with_backend(
    store: &OntologyStore,
    table: &EmbeddingTable,
    params: &MemoryParams,
    sentence: &AnnotatedSentence,
    fallback_k: usize,
    backend: &mut dyn Backend,
    request_id: u64,
) -> Result<FramePrediction> {
    let (bundle, mut prediction) = build_frame_prompt(store, table, params, sentence, fallback_k)?;
    let response = send(backend, Task::FrameId, bundle, request_id)?;
    prediction.frame = response.output.trim().to_string();
    Ok(prediction)
}

/// Argument-identification prompt for `frame`. A frame without roles gets
/// a zero continuous prompt.
pub fn build_arg_prompt(
    store: &OntologyStore,
    table: &EmbeddingTable,
    params: &MemoryParams,
    sentence: &AnnotatedSentence,
    frame: &str,
) -> Result<PromptBundle> {
    let roles = candidates_for_arg_id(store, frame)?;
    let continuous = if roles.is_empty() {
        vec![0.0; params.dim()]
    } else {
        attend_input(params, &MemoryInput::new(table, &sentence.tokens, &roles)?)?.p_c
    };
    let target = match &sentence.gold_frame {
        Some(gold) if gold == frame => {
            Some(argument_target(&sentence.tokens, &sentence.gold_args)?)
        }
        _ => None,
    };
    Ok(PromptBundle {
        continuous,
        discrete: arg_discrete_prompt(sentence, frame)?,
        target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgPrediction {
    pub spans: Vec<ArgumentSpan>,
    pub malformed: usize,
    pub raw: String,
}

pub fn predict_args(
    store: &OntologyStore,
    table: &EmbeddingTable,
    params: &MemoryParams,
    sentence: &AnnotatedSentence,
    frame: &str,
    backend: &mut dyn Backend,
    request_id: u64,
) -> Result<ArgPrediction> {
    let mut bundle = build_arg_prompt(store, table, params, sentence, frame)?;
    bundle.target = None;
    let response = send(backend, Task::ArgId, bundle, request_id)?;
    let roles = store.roles_for_frame(frame)?;
    let parsed = parse_arguments(&response.output, &sentence.tokens, roles);
    Ok(ArgPrediction {
        spans: parsed.spans,
        malformed: parsed.malformed,
        raw: response.output,
    })
}

fn send(
    backend: &mut dyn Backend,
    task: Task,
    bundle: PromptBundle,
    request_id: u64,
) -> Result<BackendResponse> {
    let request = BackendRequest {
        id: request_id,
        task,
        continuous: bundle.continuous,
        discrete: bundle.discrete.full(),
        target: bundle.target,
    };
    let response = backend.generate(&request)?;
    if response.id != request_id {
        return Err(Error::Backend {
            request_id,
            message: format!("response id {} does not match", response.id),
        });
    }
    Ok(response)
}

/// Asks the backend to score a training prompt (request carries the
/// target); returns the reported sequence loss, if any.
pub fn score_with_backend(
    backend: &mut dyn Backend,
    task: Task,
    bundle: PromptBundle,
    request_id: u64,
) -> Result<Option<f64>> {
    Ok(send(backend, task, bundle, request_id)?.loss)
}
