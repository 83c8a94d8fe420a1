//! Generator backends. A backend sees exactly what a bridged generator
//! would: the continuous prompt and the discrete prompt text.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::ontology::OntologyStore;
use crate::prompting::{
    argument_target, frame_id_head, serialize_arguments, unmark_target, ArgumentSpan,
    ARG_ID_HEAD_PREFIX, EMPTY_TARGET,
};
use crate::retrieval::{candidates_for_lemma, tokenize_definition, DEFAULT_FALLBACK_K};

use super::dataset::AnnotatedSentence;
use super::{arg_discrete_prompt, frame_discrete_prompt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    FrameId,
    ArgId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendRequest {
    pub id: u64,
    pub task: Task,
    pub continuous: Vec<f64>,
    pub discrete: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendResponse {
    pub id: u64,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

pub trait Backend {
    fn generate(&mut self, request: &BackendRequest) -> Result<BackendResponse>;
}

/// Default cosine threshold for assigning a role to a chunk.
pub const DEFAULT_ROLE_THRESHOLD: f64 = 0.2;

/// Deterministic stand-in generator built from definition similarity.
///
/// Frame identification answers with the candidate whose definition is
/// closest to the sentence. Argument identification splits the sentence
/// into maximal chunks separated by punctuation and the target, and labels
/// each chunk with its closest role when the cosine exceeds the threshold.
pub struct SimilarityBackend<'a> {
    store: &'a OntologyStore,
    table: &'a EmbeddingTable,
    pub threshold: f64,
    pub fallback_k: usize,
}

impl<'a> SimilarityBackend<'a> {
    pub fn new(store: &'a OntologyStore, table: &'a EmbeddingTable) -> Self {
        SimilarityBackend {
            store,
            table,
            threshold: DEFAULT_ROLE_THRESHOLD,
            fallback_k: DEFAULT_FALLBACK_K,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    fn definition_vector(&self, definition: &str) -> Result<Vec<f64>> {
        self.table.embed_sentence(&tokenize_definition(definition))
    }

    /// Chunk boundaries `[start, end)` for a marked sentence.
    pub fn chunks(tokens: &[String], target: (usize, usize)) -> Vec<(usize, usize)> {
        let mut chunks = Vec::new();
        let mut start = None;
        for (i, tok) in tokens.iter().enumerate() {
            let breaks = (target.0..target.1).contains(&i) || is_punctuation(tok);
            match (breaks, start) {
                (true, Some(s)) => {
                    chunks.push((s, i));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            chunks.push((s, tokens.len()));
        }
        chunks
    }

    pub fn label_arguments(
        &self,
        frame: &str,
        tokens: &[String],
        target: (usize, usize),
    ) -> Result<Vec<ArgumentSpan>> {
        let roles = self.store.roles_for_frame(frame)?;
        let role_vectors = roles
            .iter()
            .map(|r| self.definition_vector(&r.definition))
            .collect::<Result<Vec<_>>>()?;
        let mut spans = Vec::new();
        for (start, end) in Self::chunks(tokens, target) {
            let v = self.table.embed_sentence(&tokens[start..end])?;
            let mut best: Option<(f64, &str)> = None;
            for (role, rv) in roles.iter().zip(&role_vectors) {
                let c = cosine(&v, rv)?;
                let better = match best {
                    None => true,
                    Some((b, name)) => c > b || (c == b && role.name.as_str() < name),
                };
                if better {
                    best = Some((c, &role.name));
                }
            }
            if let Some((c, name)) = best {
                if c > self.threshold {
                    spans.push(ArgumentSpan::new(start, end, name));
                }
            }
        }
        Ok(spans)
    }

    pub fn choose_frame(&self, tokens: &[String], target: (usize, usize)) -> Result<String> {
        let lemma = tokens[target.0..target.1].join(" ");
        let candidates = candidates_for_lemma(self.store, self.table, &lemma, self.fallback_k)?;
        let s = self.table.embed_sentence(tokens)?;
        let mut best: Option<(f64, &str)> = None;
        for span in &candidates.spans {
            let c = cosine(&s, &self.table.embed_sentence(&span.tokens)?)?;
            let better = match best {
                None => true,
                Some((b, name)) => c > b || (c == b && span.key.as_str() < name),
            };
            if better {
                best = Some((c, &span.key));
            }
        }
        Ok(best.map(|(_, k)| k.to_string()).unwrap_or_default())
    }
}

fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_alphanumeric)
}

impl Backend for SimilarityBackend<'_> {
    fn generate(&mut self, request: &BackendRequest) -> Result<BackendResponse> {
        let malformed = |what: &str| Error::Backend {
            request_id: request.id,
            message: format!("malformed {what} prompt: {:?}", request.discrete),
        };
        let output = match request.task {
            Task::FrameId => {
                let body = request
                    .discrete
                    .strip_prefix(frame_id_head())
                    .ok_or_else(|| malformed("frame_id"))?;
                let (tokens, start, end) =
                    unmark_target(body).ok_or_else(|| malformed("frame_id"))?;
                self.choose_frame(&tokens, (start, end))?
            }
            Task::ArgId => {
                let rest = request
                    .discrete
                    .strip_prefix(ARG_ID_HEAD_PREFIX)
                    .ok_or_else(|| malformed("arg_id"))?;
                let (frame, body) = rest.split_once(' ').ok_or_else(|| malformed("arg_id"))?;
                let (tokens, start, end) =
                    unmark_target(body).ok_or_else(|| malformed("arg_id"))?;
                let spans = self.label_arguments(frame, &tokens, (start, end))?;
                if spans.is_empty() {
                    EMPTY_TARGET.to_string()
                } else {
                    serialize_arguments(&tokens, &spans)?
                }
            }
        };
        Ok(BackendResponse {
            id: request.id,
            output,
            loss: None,
        })
    }
}

/// Replays gold answers recorded from a dataset, keyed by discrete prompt.
///
/// Prompts it has no record of get an empty frame or the empty argument
/// target.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    answers: HashMap<(Task, String), String>,
}

impl OracleBackend {
    pub fn from_dataset(data: &[AnnotatedSentence]) -> Result<Self> {
        let mut answers = HashMap::new();
        for sentence in data {
            let Some(frame) = &sentence.gold_frame else {
                continue;
            };
            answers
                .entry((Task::FrameId, frame_discrete_prompt(sentence)?.full()))
                .or_insert_with(|| frame.clone());
            answers
                .entry((Task::ArgId, arg_discrete_prompt(sentence, frame)?.full()))
                .or_insert(argument_target(&sentence.tokens, &sentence.gold_args)?);
        }
        Ok(OracleBackend { answers })
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl Backend for OracleBackend {
    fn generate(&mut self, request: &BackendRequest) -> Result<BackendResponse> {
        let output = match self.answers.get(&(request.task, request.discrete.clone())) {
            Some(answer) => answer.clone(),
            None => {
                log::debug!("oracle has no record for request {}", request.id);
                match request.task {
                    Task::FrameId => String::new(),
                    Task::ArgId => EMPTY_TARGET.to_string(),
                }
            }
        };
        Ok(BackendResponse {
            id: request.id,
            output,
            loss: None,
        })
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&mut self, request: &BackendRequest) -> Result<BackendResponse> {
        (**self).generate(request)
    }
}
