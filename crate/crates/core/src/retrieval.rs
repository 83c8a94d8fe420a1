//! Builds the relevant knowledge subset for one task instance: frame
//! definitions for frame identification, role definitions for argument
//! identification.
//!
//! A target lemma missing from the ontology falls back to the lexical units
//! whose lemma embeddings are closest (cosine) to the target's embedding.

use std::collections::HashSet;

use serde::Serialize;

use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::ontology::{normalize_lemma, OntologyStore};
use crate::pipeline::AnnotatedSentence;

pub const DEFAULT_FALLBACK_K: usize = 3;

/// Splits on whitespace after lowercasing; punctuation becomes its own token.
pub fn tokenize_definition(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                current.push(ch);
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnowledgeSpan {
    /// Frame or role name.
    pub key: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl KnowledgeSpan {
    pub fn new(key: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize_definition(&text);
        KnowledgeSpan {
            key: key.into(),
            text,
            tokens,
        }
    }
}

/// One ranked lexical-unit lemma considered by the similarity fallback.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FallbackMatch {
    pub lemma: String,
    pub cosine: f64,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CandidateSet {
    pub spans: Vec<KnowledgeSpan>,
    pub gold_index: Option<usize>,
    /// Present when the target lemma was absent from the ontology.
    pub fallback: Option<Vec<FallbackMatch>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.spans.iter().map(|s| s.key.as_str())
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.spans.iter().position(|s| s.key == key)
    }

    /// Points `gold_index` at the span keyed `key`; false if absent.
    pub fn attach_gold(&mut self, key: &str) -> bool {
        self.gold_index = self.position(key);
        self.gold_index.is_some()
    }

    pub fn used_fallback(&self) -> bool {
        self.fallback.is_some()
    }
}

/// Ranks every distinct lexical-unit lemma by cosine to `lemma`.
/// Ties are broken by lemma in lexicographic order.
pub fn rank_lexical_units(
    store: &OntologyStore,
    table: &EmbeddingTable,
    lemma: &str,
) -> Result<Vec<(String, f64)>> {
    let query_tokens: Vec<&str> = lemma.split(' ').collect();
    let query = table.embed_sentence(&query_tokens)?;
    let mut ranked = Vec::new();
    for candidate in store.lemmas() {
        let tokens: Vec<&str> = candidate.split(' ').collect();
        let v = table.embed_sentence(&tokens)?;
        ranked.push((candidate.to_string(), cosine(&query, &v)?));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

fn frame_span(store: &OntologyStore, name: &str) -> KnowledgeSpan {
    let frame = store.frame(name).expect("indexed frame exists");
    KnowledgeSpan::new(&frame.name, &frame.definition)
}

/// Candidate frames for a target lemma.
pub fn candidates_for_lemma(
    store: &OntologyStore,
    table: &EmbeddingTable,
    lemma: &str,
    fallback_k: usize,
) -> Result<CandidateSet> {
    if store.is_empty() {
        return Err(Error::EmptyOntology);
    }
    if fallback_k == 0 {
        return Err(Error::Validation("fallback_k must be positive".into()));
    }
    let lemma = normalize_lemma(lemma);
    let direct = store.frames_for_lemma(&lemma);
    if !direct.is_empty() {
        return Ok(CandidateSet {
            spans: direct.iter().map(|f| frame_span(store, f)).collect(),
            gold_index: None,
            fallback: None,
        });
    }
    if lemma.is_empty() {
        return Err(Error::EmptyTokens);
    }

    let ranked = rank_lexical_units(store, table, &lemma)?;
    let mut seen = HashSet::new();
    let mut spans = Vec::new();
    let mut matches = Vec::new();
    for (candidate, score) in ranked.into_iter().take(fallback_k) {
        let frames = store.frames_for_lemma(&candidate);
        for frame in &frames {
            if seen.insert(frame.clone()) {
                spans.push(frame_span(store, frame));
            }
        }
        matches.push(FallbackMatch {
            lemma: candidate,
            cosine: score,
            frames,
        });
    }
    if spans.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(CandidateSet {
        spans,
        gold_index: None,
        fallback: Some(matches),
    })
}

/// Candidate frame definitions for the sentence's target.
pub fn candidates_for_frame_id(
    store: &OntologyStore,
    table: &EmbeddingTable,
    sentence: &AnnotatedSentence,
    fallback_k: usize,
) -> Result<CandidateSet> {
    candidates_for_lemma(store, table, &sentence.target_lemma(), fallback_k)
}

/// Role definitions of `frame`, in declaration order.
pub fn candidates_for_arg_id(store: &OntologyStore, frame: &str) -> Result<CandidateSet> {
    let roles = store.roles_for_frame(frame)?;
    Ok(CandidateSet {
        spans: roles
            .iter()
            .map(|r| KnowledgeSpan::new(&r.name, &r.definition))
            .collect(),
        gold_index: None,
        fallback: None,
    })
}
