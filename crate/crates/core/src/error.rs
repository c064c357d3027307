//! Error types shared across the crate.

use thiserror::Error;

/// Errors from complex-vector algebra and the rotation distance metric.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: left has {left} components, right has {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector: cosine similarity is undefined for degenerate embeddings")]
    ZeroNorm,
    #[error("component {index} has modulus {modulus:e}, below the division floor {floor:e}")]
    SmallModulus {
        index: usize,
        modulus: f64,
        floor: f64,
    },
    #[error("non-finite component {index}: embeddings must not contain NaN or Inf")]
    NonFinite { index: usize },
    #[error("empty vector: dimension must be at least 1")]
    Empty,
}

/// Errors from the toy encoder.
#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("tape was recorded against parameter revision {tape} but params are at revision {params}")]
    TapeMismatch { tape: u64, params: u64 },
    #[error("upstream gradient has {got} components, expected {expected}")]
    UpstreamShape { got: usize, expected: usize },
    #[error("token index {index} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { index: usize, vocab_size: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Errors from training objectives and the optimizer.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient in tensor '{tensor}' at component {index} (training divergence signal)")]
    NonFiniteGradient { tensor: String, index: usize },
    #[error("non-finite loss at step {step} (training divergence)")]
    Divergence { step: u64 },
    #[error("margin must lie in (0, 2], got {got}")]
    BadMargin { got: f64 },
    #[error("optimizer state shaped for {expected} components, tensor '{tensor}' has {got}")]
    StateShape {
        tensor: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Errors from classification and label stores.
#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("k = {k} exceeds store size {store_size}")]
    KTooLarge { k: usize, store_size: usize },
    #[error("label store is empty")]
    EmptyStore,
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("store format: {0}")]
    Format(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Errors from dataset generation, loading, and splitting.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("unknown property id {property_id}: not one of the 14 shipped relations")]
    UnknownProperty { property_id: String },
    #[error("triple property {triple} does not match relation spec {spec}")]
    PropertyMismatch { triple: String, spec: String },
    #[error("{0}")]
    Infeasible(String),
    #[error("split fractions must sum to 1, got {got}")]
    BadFractions { got: f64 },
}

/// Errors from the experiment harness.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("proxy training reached only {accuracy:.3} accuracy, not above chance; forgetting delta is meaningless")]
    ProxyNotLearned { accuracy: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("artifact io: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact format: {0}")]
    Format(String),
}
