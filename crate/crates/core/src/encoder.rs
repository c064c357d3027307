//! A small trainable text encoder with exact reverse-mode gradients.
//!
//! The architecture is deliberately minimal: token embeddings are mean-pooled
//! and passed through one affine projection, and the 2d-real output is read
//! as a d-dimensional complex vector. Single-sentence encoding is therefore
//! invariant under token permutation.
//!
//! Two things distinguish sentence roles, mirroring segment embeddings in
//! BERT-family encoders:
//!
//! - callers framing an NLI sentence prepend a premise or hypothesis marker
//!   token ([`premise_tokens`] / [`hypothesis_tokens`]); without a role
//!   signal, a bag-of-words encoder maps a premise and its entity-swapped
//!   hypothesis to the same point and the componentwise quotient of the two
//!   encodings carries no information at all;
//! - in joint pair encoding, embeddings in the hypothesis segment are
//!   rotated by a quarter turn before pooling, so the pair encoding is not
//!   invariant under swapping the two sentences.
//!
//! Every forward pass records a [`ComputationTape`]; replaying a tape
//! backward yields exact gradients for every parameter it touched.

use crate::complex::{wrap_phase, ComplexVector, PhaseVector};
use crate::error::EncoderError;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Reserved index of the unknown-token fallback.
pub const UNK_INDEX: usize = 0;
/// Reserved index of the sentence separator used in joint pair encoding.
pub const SEP_INDEX: usize = 1;
/// Reserved index of the premise role marker.
pub const PREMISE_MARK_INDEX: usize = 2;
/// Reserved index of the hypothesis role marker.
pub const HYPOTHESIS_MARK_INDEX: usize = 3;

const SPECIAL_TOKENS: [&str; 4] = ["<unk>", "<sep>", "<premise>", "<hypothesis>"];

/// Token → index map with dense indices and reserved special tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.tokens
    }
}

impl Vocabulary {
    /// A vocabulary containing only the special tokens.
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        for t in SPECIAL_TOKENS {
            v.insert(t);
        }
        v
    }

    /// Builds a vocabulary from texts in first-seen order; deterministic.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        for text in texts {
            for token in text.split_whitespace() {
                v.insert(&token.to_lowercase());
            }
        }
        v
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, falling back to [`UNK_INDEX`] for unseen tokens.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Lowercases, splits on whitespace, and maps through the vocabulary
    /// with UNK fallback. Empty text yields an empty sequence.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|t| self.lookup(&t.to_lowercase()))
            .collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

fn role_frame(marker: usize, tokens: Vec<usize>) -> Vec<usize> {
    let mut framed = Vec::with_capacity(tokens.len() + 3);
    framed.push(marker);
    // Edge-token emphasis: the sentence-initial and sentence-final tokens
    // are pooled twice. Those are the slots where a subject/object swap is
    // visible, and doubling them gives mean pooling a coarse positional
    // signal without giving up permutation invariance of the encoder
    // itself.
    if let Some(&first) = tokens.first() {
        framed.push(first);
    }
    if tokens.len() > 1 {
        framed.push(tokens[tokens.len() - 1]);
    }
    framed.extend(tokens);
    framed
}

/// Role-framed token sequence for a premise: role marker, leading-token
/// emphasis, then the tokens.
pub fn premise_tokens(vocab: &Vocabulary, text: &str) -> Vec<usize> {
    role_frame(PREMISE_MARK_INDEX, vocab.tokenize(text))
}

/// Role-framed token sequence for a hypothesis.
pub fn hypothesis_tokens(vocab: &Vocabulary, text: &str) -> Vec<usize> {
    role_frame(HYPOTHESIS_MARK_INDEX, vocab.tokenize(text))
}

/// Token embedding table, affine projection, and the init seed.
///
/// These are the only parameters updated in the encoder-retraining regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Bumped on every in-place update; tapes are only valid against the
    /// revision they were recorded at.
    pub revision: u64,
    /// `vocab_size` rows of 2·dim reals, one interleaved complex vector per token.
    pub embedding: Vec<f64>,
    /// Row-major 2·dim × 2·dim projection.
    pub projection: Vec<f64>,
    /// 2·dim bias.
    pub bias: Vec<f64>,
}

/// Seeded initialization: embeddings uniform in `(-scale, scale)`, projection
/// an identity plus a uniform perturbation of the same scale, bias zero.
pub fn init_params(seed: u64, dim: usize, vocab_size: usize, scale: f64) -> EncoderParams {
    assert!(dim >= 1, "dim must be at least 1");
    assert!(vocab_size >= 2, "vocabulary must hold at least UNK and SEP");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 2 * dim;
    let sample = |rng: &mut ChaCha8Rng| {
        if scale > 0.0 {
            rng.gen_range(-scale..scale)
        } else {
            0.0
        }
    };
    let mut embedding: Vec<f64> = (0..vocab_size * width).map(|_| sample(&mut rng)).collect();
    // The two role markers start from the same embedding: role asymmetry is
    // entirely learned, not an artifact of initialization.
    if vocab_size > HYPOTHESIS_MARK_INDEX {
        let (src, dst) = (PREMISE_MARK_INDEX * width, HYPOTHESIS_MARK_INDEX * width);
        let premise_row: Vec<f64> = embedding[src..src + width].to_vec();
        embedding[dst..dst + width].copy_from_slice(&premise_row);
    }
    let mut projection = vec![0.0; width * width];
    for r in 0..width {
        for c in 0..width {
            let noise = sample(&mut rng);
            projection[r * width + c] = if r == c { 1.0 + noise } else { noise };
        }
    }
    EncoderParams {
        dim,
        vocab_size,
        seed,
        revision: 0,
        embedding,
        projection,
        bias: vec![0.0; width],
    }
}

impl EncoderParams {
    pub fn width(&self) -> usize {
        2 * self.dim
    }

    pub fn embedding_row(&self, token: usize) -> &[f64] {
        let w = self.width();
        &self.embedding[token * w..(token + 1) * w]
    }

    /// Marks the parameters as updated, invalidating outstanding tapes.
    pub fn bump_revision(&mut self) {
        self.revision += 1;
    }
}

/// Which segment of a joint pair pass a pooled token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
enum Segment {
    Premise,
    Hypothesis,
}

/// Ordered record of one forward pass: the tokens pooled (with segments for
/// pair mode), the pooled input, the affine output, and whether a phase
/// readout followed. Replaying it backward yields exact parameter gradients.
#[derive(Debug, Clone)]
pub struct ComputationTape {
    revision: u64,
    dim: usize,
    tokens: Vec<(usize, Segment)>,
    pooled: Vec<f64>,
    output: Vec<f64>,
    phase_readout: bool,
}

impl ComputationTape {
    /// Length the upstream gradient must have: d after a phase readout,
    /// 2d otherwise.
    pub fn upstream_len(&self) -> usize {
        if self.phase_readout {
            self.dim
        } else {
            2 * self.dim
        }
    }
}

/// Gradients for every parameter touched by one or more backward passes.
///
/// Embedding gradients are kept sparse by row; merge order is fixed by the
/// BTreeMap so deterministic accumulation is free.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub dim: usize,
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros(dim: usize) -> Self {
        let width = 2 * dim;
        Self {
            dim,
            embedding: BTreeMap::new(),
            projection: vec![0.0; width * width],
            bias: vec![0.0; width],
        }
    }

    pub fn add(&mut self, other: &ParamGradients) {
        debug_assert_eq!(self.dim, other.dim);
        for (row, grad) in &other.embedding {
            let slot = self
                .embedding
                .entry(*row)
                .or_insert_with(|| vec![0.0; 2 * self.dim]);
            for (a, b) in slot.iter_mut().zip(grad.iter()) {
                *a += b;
            }
        }
        for (a, b) in self.projection.iter_mut().zip(other.projection.iter()) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(other.bias.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for grad in self.embedding.values_mut() {
            for g in grad.iter_mut() {
                *g *= factor;
            }
        }
        for g in self.projection.iter_mut() {
            *g *= factor;
        }
        for g in self.bias.iter_mut() {
            *g *= factor;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for grad in self.embedding.values() {
            sum += grad.iter().map(|g| g * g).sum::<f64>();
        }
        sum += self.projection.iter().map(|g| g * g).sum::<f64>();
        sum += self.bias.iter().map(|g| g * g).sum::<f64>();
        sum.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding
            .values()
            .all(|g| g.iter().all(|x| x.is_finite()))
            && self.projection.iter().all(|x| x.is_finite())
            && self.bias.iter().all(|x| x.is_finite())
    }

    /// Scatters the sparse embedding rows into a dense `vocab_size × 2d` grid.
    pub fn dense_embedding(&self, vocab_size: usize) -> Vec<f64> {
        let width = 2 * self.dim;
        let mut dense = vec![0.0; vocab_size * width];
        for (row, grad) in &self.embedding {
            dense[row * width..(row + 1) * width].copy_from_slice(grad);
        }
        dense
    }
}

/// Multiset view of a pass: (token, segment) → multiplicity, in index order.
/// Pooling over this view makes mean pooling bitwise permutation-invariant,
/// not merely invariant up to float summation order.
fn token_counts(tokens: &[(usize, Segment)]) -> BTreeMap<(usize, Segment), usize> {
    let mut counts = BTreeMap::new();
    for &entry in tokens {
        *counts.entry(entry).or_insert(0) += 1;
    }
    counts
}

fn forward(
    params: &EncoderParams,
    tokens: &[(usize, Segment)],
) -> Result<(Vec<f64>, Vec<f64>), EncoderError> {
    let width = params.width();
    let mut pooled = vec![0.0; width];
    for (&(token, segment), &count) in &token_counts(tokens) {
        if token >= params.vocab_size {
            return Err(EncoderError::TokenOutOfRange {
                index: token,
                vocab_size: params.vocab_size,
            });
        }
        let row = params.embedding_row(token);
        let c = count as f64;
        match segment {
            Segment::Premise => {
                for (p, e) in pooled.iter_mut().zip(row.iter()) {
                    *p += c * e;
                }
            }
            // Quarter-turn rotation of each complex component: (re, im) → (-im, re).
            Segment::Hypothesis => {
                for i in 0..params.dim {
                    pooled[2 * i] += c * -row[2 * i + 1];
                    pooled[2 * i + 1] += c * row[2 * i];
                }
            }
        }
    }
    let n = tokens.len() as f64;
    for p in pooled.iter_mut() {
        *p /= n;
    }
    let mut output = params.bias.clone();
    for r in 0..width {
        let row = &params.projection[r * width..(r + 1) * width];
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(pooled.iter()) {
            acc += w * x;
        }
        output[r] += acc;
    }
    Ok((pooled, output))
}

/// Encodes one sentence: mean of token embeddings, then the affine
/// projection, read as an interleaved complex vector of dim d.
pub fn encode_single(
    params: &EncoderParams,
    tokens: &[usize],
) -> Result<(ComplexVector, ComputationTape), EncoderError> {
    if tokens.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    let tagged: Vec<(usize, Segment)> = tokens.iter().map(|&t| (t, Segment::Premise)).collect();
    let (pooled, output) = forward(params, &tagged)?;
    let vector = ComplexVector::from_interleaved(&output)
        .expect("finite params and inputs produce a finite encoding");
    let tape = ComputationTape {
        revision: params.revision,
        dim: params.dim,
        tokens: tagged,
        pooled,
        output,
        phase_readout: false,
    };
    Ok((vector, tape))
}

/// Encodes a (premise, hypothesis) pair jointly: the premise, a separator,
/// and the quarter-turn-rotated hypothesis segment are pooled together and
/// projected, and the output is read as componentwise phases. The label
/// embedding is left entirely to the encoder to learn.
pub fn encode_pair(
    params: &EncoderParams,
    premise: &[usize],
    hypothesis: &[usize],
) -> Result<(PhaseVector, ComputationTape), EncoderError> {
    if premise.is_empty() || hypothesis.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    let mut tagged: Vec<(usize, Segment)> = Vec::with_capacity(premise.len() + hypothesis.len() + 1);
    tagged.extend(premise.iter().map(|&t| (t, Segment::Premise)));
    tagged.push((SEP_INDEX, Segment::Premise));
    tagged.extend(hypothesis.iter().map(|&t| (t, Segment::Hypothesis)));
    let (pooled, output) = forward(params, &tagged)?;
    let theta: Vec<f64> = (0..params.dim)
        .map(|i| wrap_phase(output[2 * i + 1].atan2(output[2 * i])))
        .collect();
    let phases = PhaseVector::new(theta).expect("finite output yields finite phases");
    let tape = ComputationTape {
        revision: params.revision,
        dim: params.dim,
        tokens: tagged,
        pooled,
        output,
        phase_readout: true,
    };
    Ok((phases, tape))
}

/// Reverse accumulation through one recorded pass.
///
/// `upstream` is ∂L/∂output: 2d reals for a single-sentence tape, d phase
/// gradients for a pair tape. The tape must have been recorded against the
/// same parameter revision.
pub fn backward(
    params: &EncoderParams,
    tape: &ComputationTape,
    upstream: &[f64],
) -> Result<ParamGradients, EncoderError> {
    if tape.revision != params.revision {
        return Err(EncoderError::TapeMismatch {
            tape: tape.revision,
            params: params.revision,
        });
    }
    if upstream.len() != tape.upstream_len() {
        return Err(EncoderError::UpstreamShape {
            got: upstream.len(),
            expected: tape.upstream_len(),
        });
    }
    let width = params.width();

    // Phase readout: θᵢ = atan2(imᵢ, reᵢ) over the affine output.
    let g_output: Vec<f64> = if tape.phase_readout {
        let mut g = vec![0.0; width];
        for i in 0..params.dim {
            let re = tape.output[2 * i];
            let im = tape.output[2 * i + 1];
            let r2 = re * re + im * im;
            g[2 * i] = upstream[i] * (-im / r2);
            g[2 * i + 1] = upstream[i] * (re / r2);
        }
        g
    } else {
        upstream.to_vec()
    };

    let mut grads = ParamGradients::zeros(params.dim);
    // Affine layer: output = W·pooled + bias.
    grads.bias.copy_from_slice(&g_output);
    let mut g_pooled = vec![0.0; width];
    for r in 0..width {
        let g = g_output[r];
        let row = &params.projection[r * width..(r + 1) * width];
        for c in 0..width {
            grads.projection[r * width + c] = g * tape.pooled[c];
            g_pooled[c] += g * row[c];
        }
    }
    // Mean pooling distributes 1/n to every token slot; hypothesis-segment
    // slots pull the gradient back through the quarter-turn rotation.
    let n = tape.tokens.len() as f64;
    for (&(token, segment), &count) in &token_counts(&tape.tokens) {
        let slot = grads
            .embedding
            .entry(token)
            .or_insert_with(|| vec![0.0; width]);
        let c = count as f64;
        match segment {
            Segment::Premise => {
                for (s, g) in slot.iter_mut().zip(g_pooled.iter()) {
                    *s += c * g / n;
                }
            }
            Segment::Hypothesis => {
                for i in 0..params.dim {
                    slot[2 * i] += c * g_pooled[2 * i + 1] / n;
                    slot[2 * i + 1] += c * -g_pooled[2 * i] / n;
                }
            }
        }
    }
    Ok(grads)
}

/// Self-describing checkpoint: dimension, vocabulary, parameter arrays, and
/// the init seed. A saved-then-loaded encoder reproduces outputs bit-exactly.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dim: usize,
    seed: u64,
    vocab: Vec<String>,
    embedding: Vec<f64>,
    projection: Vec<f64>,
    bias: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "rotasym-encoder";
const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(
    path: &Path,
    vocab: &Vocabulary,
    params: &EncoderParams,
) -> Result<(), EncoderError> {
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        dim: params.dim,
        seed: params.seed,
        vocab: vocab.tokens.clone(),
        embedding: params.embedding.clone(),
        projection: params.projection.clone(),
        bias: params.bias.clone(),
    };
    let json = serde_json::to_string(&checkpoint)
        .map_err(|e| EncoderError::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Vocabulary, EncoderParams), EncoderError> {
    let json = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint =
        serde_json::from_str(&json).map_err(|e| EncoderError::Format(e.to_string()))?;
    if checkpoint.format != CHECKPOINT_FORMAT {
        return Err(EncoderError::Format(format!(
            "unexpected format tag {:?}",
            checkpoint.format
        )));
    }
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(EncoderError::Format(format!(
            "unsupported checkpoint version {}",
            checkpoint.version
        )));
    }
    let width = 2 * checkpoint.dim;
    let vocab_size = checkpoint.vocab.len();
    if checkpoint.embedding.len() != vocab_size * width
        || checkpoint.projection.len() != width * width
        || checkpoint.bias.len() != width
    {
        return Err(EncoderError::Format(
            "parameter array shapes inconsistent with dim and vocabulary".to_string(),
        ));
    }
    let vocab = Vocabulary::from(checkpoint.vocab);
    let params = EncoderParams {
        dim: checkpoint.dim,
        vocab_size,
        seed: checkpoint.seed,
        revision: 0,
        embedding: checkpoint.embedding,
        projection: checkpoint.projection,
        bias: checkpoint.bias,
    };
    Ok((vocab, params))
}
