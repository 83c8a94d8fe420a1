//! Static word embeddings in the GloVe text format, plus the two vector
//! operations everything else builds on: token-wise mean and cosine.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
}

impl EmbeddingTable {
    /// Parses `token v1 .. vd` lines. The dimension comes from the first
    /// non-blank line; the unknown-token vector is the mean of all entries.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut dim = 0;
        let mut vectors = HashMap::new();
        let mut sum: Vec<f64> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let mut values = Vec::with_capacity(dim);
            for (col, raw) in fields.enumerate() {
                let value: f64 = raw.parse().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: line_no,
                    column: col + 2,
                    message: format!("invalid number {raw:?}"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: line_no,
                        column: col + 2,
                        message: format!("non-finite value {raw:?}"),
                    });
                }
                values.push(value);
            }
            if dim == 0 {
                if values.is_empty() {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: line_no,
                        column: 1,
                        message: format!("token {token:?} has no vector"),
                    });
                }
                dim = values.len();
                sum = vec![0.0; dim];
            } else if values.len() != dim {
                return Err(Error::InconsistentDimension {
                    path: origin.to_path_buf(),
                    line: line_no,
                    expected: dim,
                    found: values.len(),
                });
            }
            if vectors.contains_key(token) {
                log::warn!(
                    "{}:{line_no}: duplicate token {token:?} ignored",
                    origin.display()
                );
                continue;
            }
            for (acc, v) in sum.iter_mut().zip(&values) {
                *acc += v;
            }
            vectors.insert(token.to_string(), values);
        }
        if vectors.is_empty() {
            return Err(Error::EmptyFile(origin.to_path_buf()));
        }
        let n = vectors.len() as f64;
        let unk = sum.into_iter().map(|s| s / n).collect();
        Ok(EmbeddingTable { dim, vectors, unk })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some()
    }

    /// Exact match first, then the lowercased form.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(&token.to_lowercase()))
            .map(Vec::as_slice)
    }

    /// The embedding function: known vector or the unknown-token vector.
    pub fn lookup(&self, token: &str) -> &[f64] {
        self.get(token).unwrap_or(&self.unk)
    }

    /// Token-wise mean of the embeddings.
    pub fn embed_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyTokens);
        }
        // Running mean: n copies of one vector reproduce it bit-for-bit.
        let mut mean = vec![0.0; self.dim];
        for (k, token) in tokens.iter().enumerate() {
            let k = (k + 1) as f64;
            for (m, v) in mean.iter_mut().zip(self.lookup(token.as_ref())) {
                *m += (v - *m) / k;
            }
        }
        Ok(mean)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::from_text(&text, path)
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}
