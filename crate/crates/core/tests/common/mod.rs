#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Raw embedding file, parsed without going through the library, for
/// brute-force oracles.
pub struct RawEmbeddings {
    pub vectors: HashMap<String, Vec<f64>>,
    pub unk: Vec<f64>,
}

impl RawEmbeddings {
    pub fn load() -> Self {
        let text = fs::read_to_string(fixture("embeddings.txt")).unwrap();
        let mut vectors = HashMap::new();
        let mut order = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split(' ');
            let token = parts.next().unwrap().to_string();
            let v: Vec<f64> = parts.map(|x| x.parse().unwrap()).collect();
            if let std::collections::hash_map::Entry::Vacant(slot) = vectors.entry(token.clone()) {
                slot.insert(v);
                order.push(token);
            }
        }
        let dim = vectors[&order[0]].len();
        let mut unk = vec![0.0; dim];
        for t in &order {
            for (u, x) in unk.iter_mut().zip(&vectors[t]) {
                *u += x;
            }
        }
        for u in &mut unk {
            *u /= order.len() as f64;
        }
        RawEmbeddings { vectors, unk }
    }

    pub fn vector(&self, token: &str) -> &[f64] {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(&token.to_lowercase()))
            .unwrap_or(&self.unk)
    }

    pub fn mean(&self, tokens: &[&str]) -> Vec<f64> {
        let mut m = vec![0.0; self.unk.len()];
        for t in tokens {
            for (a, x) in m.iter_mut().zip(self.vector(t)) {
                *a += x;
            }
        }
        m.iter().map(|x| x / tokens.len() as f64).collect()
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

/// Lowercases and splits punctuation off words.
pub fn simple_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_framespa")
}
