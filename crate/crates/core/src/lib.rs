//! Symmetry-aware training of small sentence encoders.
//!
//! This crate implements a rotation distance metric over complex sentence
//! embeddings, three encoder-retraining objectives plus a fine-tuning
//! baseline, nearest-label and k-NN inference, a generator for a
//! Wikidata-style symmetric/antisymmetric NLI benchmark, and an experiment
//! harness that measures accuracy, few-shot sample counts, and catastrophic
//! forgetting for all four methods.

pub mod classifiers;
pub mod complex;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod objectives;
pub mod report;

pub use complex::{
    cosine_similarity, extract_label, hadamard_rotate, label_distance, rotate_distance,
    ComplexVector, PhaseVector, RealizedVector, MODULUS_FLOOR,
};
pub use error::{ClassifyError, DataError, EncoderError, MetricError, RunError, TrainError};
