//! Memory-based knowledge extraction.
//!
//! Each candidate definition is a memory slot. With sentence vector `s` and
//! slot vector `m_i` (token-wise means of the shared embeddings):
//!
//! ```text
//! score_i = sᵀ (W_in m_i)
//! a       = softmax(score)
//! p_c     = Σ_i a_i (W_out m_i)
//! ```
//!
//! `p_c` is the continuous prompt handed to the generator. The training
//! signal available in-process is the likelihood of the gold slot under `a`,
//! which only reaches `W_in`; `W_out` moves only under the optional
//! alignment loss.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::retrieval::CandidateSet;

/// Added inside the log of the gold weight.
pub const LOSS_EPSILON: f64 = 1e-12;

const PARAMS_MAGIC: &str = "framespa-memory-params 1";

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self += scale · u vᵀ`
    pub fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (x, vj) in row.iter_mut().zip(v) {
                *x += scale * ui * vj;
            }
        }
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, scale: f64, other: &Matrix) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += scale * y;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryParams {
    pub w_in: Matrix,
    pub w_out: Matrix,
    /// Seed the matrices were initialized from, when known.
    pub seed: Option<u64>,
}

impl MemoryParams {
    pub fn dim(&self) -> usize {
        self.w_in.dim()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{PARAMS_MAGIC}").unwrap();
        writeln!(out, "dim {}", self.dim()).unwrap();
        match self.seed {
            Some(seed) => writeln!(out, "seed {seed}").unwrap(),
            None => writeln!(out, "seed none").unwrap(),
        }
        for (label, m) in [("w_in", &self.w_in), ("w_out", &self.w_out)] {
            writeln!(out, "{label}").unwrap();
            for i in 0..m.dim() {
                let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(format!("unexpected end of file, expected {what}")))
        };
        let (_, magic) = next("header")?;
        if magic != PARAMS_MAGIC {
            return Err(bad(format!("unrecognized header {magic:?}")));
        }
        let (n, line) = next("dim")?;
        let dim: usize = line
            .strip_prefix("dim ")
            .and_then(|s| s.parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| bad(format!("line {}: expected `dim <n>`", n + 1)))?;
        let (n, line) = next("seed")?;
        let seed = match line.strip_prefix("seed ") {
            Some("none") => None,
            Some(s) => Some(
                s.parse()
                    .map_err(|_| bad(format!("line {}: invalid seed", n + 1)))?,
            ),
            None => return Err(bad(format!("line {}: expected `seed <n>`", n + 1))),
        };
        let mut matrices = Vec::with_capacity(2);
        for label in ["w_in", "w_out"] {
            let (n, line) = next(label)?;
            if line != label {
                return Err(bad(format!("line {}: expected {label}", n + 1)));
            }
            let mut rows = Vec::with_capacity(dim);
            for _ in 0..dim {
                let (n, line) = next("matrix row")?;
                let row = line
                    .split(' ')
                    .map(|x| x.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("line {}: invalid number", n + 1)))?;
                if row.len() != dim || row.iter().any(|x| !x.is_finite()) {
                    return Err(bad(format!("line {}: expected {dim} finite values", n + 1)));
                }
                rows.push(row);
            }
            matrices.push(Matrix::from_rows(&rows)?);
        }
        let w_out = matrices.pop().unwrap();
        let w_in = matrices.pop().unwrap();
        Ok(MemoryParams { w_in, w_out, seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Uniform Glorot-style initialization on `[-√(6/2d), √(6/2d)]`.
pub fn init_params(dim: usize, seed: u64) -> MemoryParams {
    assert!(dim >= 1, "memory dimension must be positive");
    let bound = (6.0 / (2.0 * dim as f64)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let data = (0..dim * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Matrix { dim, data }
    };
    let w_in = draw();
    let w_out = draw();
    MemoryParams {
        w_in,
        w_out,
        seed: Some(seed),
    }
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Embedded sentence and memory slots, computed once per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryInput {
    pub sentence: Vec<f64>,
    pub slots: Vec<Vec<f64>>,
}

impl MemoryInput {
    pub fn new<S: AsRef<str>>(
        table: &EmbeddingTable,
        sentence_tokens: &[S],
        candidates: &CandidateSet,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let sentence = table.embed_sentence(sentence_tokens)?;
        let slots = candidates
            .spans
            .iter()
            .map(|span| table.embed_sentence(&span.tokens))
            .collect::<Result<Vec<_>>>()?;
        Ok(MemoryInput { sentence, slots })
    }

    fn check(&self, params: &MemoryParams) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let d = params.dim();
        for v in std::iter::once(&self.sentence).chain(&self.slots) {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub p_c: Vec<f64>,
}

impl AttentionResult {
    /// Index of the largest weight; the lowest index among exact ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

pub fn attend_input(params: &MemoryParams, input: &MemoryInput) -> Result<AttentionResult> {
    input.check(params)?;
    let scores: Vec<f64> = input
        .slots
        .iter()
        .map(|m| dot(&input.sentence, &params.w_in.matvec(m)))
        .collect();
    let weights = softmax(&scores);
    let mut p_c = vec![0.0; params.dim()];
    for (a, m) in weights.iter().zip(&input.slots) {
        for (acc, v) in p_c.iter_mut().zip(params.w_out.matvec(m)) {
            *acc += a * v;
        }
    }
    Ok(AttentionResult {
        scores,
        weights,
        p_c,
    })
}

pub fn attend<S: AsRef<str>>(
    params: &MemoryParams,
    table: &EmbeddingTable,
    sentence_tokens: &[S],
    candidates: &CandidateSet,
) -> Result<AttentionResult> {
    if params.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: table.dim(),
        });
    }
    attend_input(
        params,
        &MemoryInput::new(table, sentence_tokens, candidates)?,
    )
}

/// `-ln(a_gold + ε)`
pub fn nll_loss(result: &AttentionResult, gold_index: usize) -> Result<f64> {
    let w = result
        .weights
        .get(gold_index)
        .ok_or(Error::IndexOutOfRange {
            index: gold_index,
            len: result.weights.len(),
        })?;
    Ok(-(w + LOSS_EPSILON).ln())
}

/// Gradient of [`nll_loss`] with respect to `W_in`, and the loss itself.
///
/// With `r = a_g / (a_g + ε)`, `∂L/∂score_j = r (a_j − 1[j = g])` and
/// `∂score_j/∂W_in = s m_jᵀ`.
pub fn grad_input(
    params: &MemoryParams,
    input: &MemoryInput,
    gold_index: usize,
) -> Result<(Matrix, f64)> {
    let result = attend_input(params, input)?;
    let loss = nll_loss(&result, gold_index)?;
    let a_gold = result.weights[gold_index];
    let r = a_gold / (a_gold + LOSS_EPSILON);
    let mut g = Matrix::zeros(params.dim());
    for (j, (a, m)) in result.weights.iter().zip(&input.slots).enumerate() {
        let coeff = r * (a - if j == gold_index { 1.0 } else { 0.0 });
        if coeff != 0.0 {
            g.add_outer(coeff, &input.sentence, m);
        }
    }
    Ok((g, loss))
}

pub fn grad<S: AsRef<str>>(
    params: &MemoryParams,
    table: &EmbeddingTable,
    sentence_tokens: &[S],
    candidates: &CandidateSet,
    gold_index: usize,
) -> Result<(Matrix, f64)> {
    if params.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: table.dim(),
        });
    }
    grad_input(
        params,
        &MemoryInput::new(table, sentence_tokens, candidates)?,
        gold_index,
    )
}

/// Auxiliary loss `½‖p_c − m_gold‖²` and its gradient with respect to
/// `W_out`, `(p_c − m_gold) m̄ᵀ` with `m̄ = Σ a_i m_i`. Off unless the
/// training config gives it a positive weight.
pub fn alignment_grad(
    params: &MemoryParams,
    input: &MemoryInput,
    gold_index: usize,
) -> Result<(Matrix, f64)> {
    let result = attend_input(params, input)?;
    let gold = input.slots.get(gold_index).ok_or(Error::IndexOutOfRange {
        index: gold_index,
        len: input.slots.len(),
    })?;
    let residual: Vec<f64> = result.p_c.iter().zip(gold).map(|(p, m)| p - m).collect();
    let loss = 0.5 * dot(&residual, &residual);
    let mut mixed = vec![0.0; params.dim()];
    for (a, m) in result.weights.iter().zip(&input.slots) {
        for (acc, v) in mixed.iter_mut().zip(m) {
            *acc += a * v;
        }
    }
    let mut g = Matrix::zeros(params.dim());
    g.add_outer(1.0, &residual, &mixed);
    Ok((g, loss))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryGrads {
    pub w_in: Matrix,
    pub w_out: Matrix,
}

impl MemoryGrads {
    pub fn zeros(dim: usize) -> Self {
        MemoryGrads {
            w_in: Matrix::zeros(dim),
            w_out: Matrix::zeros(dim),
        }
    }
}

/// Plain gradient descent step. Refuses non-finite gradients.
pub fn sgd_step(params: &MemoryParams, grads: &MemoryGrads, lr: f64) -> Result<MemoryParams> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Validation(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.w_in.dim() != params.dim() || grads.w_out.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: grads.w_in.dim(),
        });
    }
    if !grads.w_in.is_finite() {
        return Err(Error::NonFinite("w_in gradient"));
    }
    if !grads.w_out.is_finite() {
        return Err(Error::NonFinite("w_out gradient"));
    }
    let mut next = params.clone();
    next.w_in.add_scaled(-lr, &grads.w_in);
    next.w_out.add_scaled(-lr, &grads.w_out);
    Ok(next)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}
