//! Inference layer: nearest-label-embedding selection, k-NN majority vote
//! over a store of training-sample label embeddings, and head argmax.
//!
//! All classification paths are deterministic functions of their inputs.
//! k-NN search is exhaustive; desk-scale stores make exactness cheap and a
//! brute-force reference is the acceptance oracle.

use crate::complex::{extract_label, label_distance, rotate_distance, ComplexVector, PhaseVector};
use crate::dataset::{Label, NliExample};
use crate::encoder::{
    encode_pair, encode_single, hypothesis_tokens, premise_tokens, EncoderParams, Vocabulary,
};
use crate::error::ClassifyError;
use crate::objectives::{HeadParams, LabelEmbeddingBank};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How the stored label embeddings were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreMode {
    /// Fixed-metric extraction: componentwise quotient of single-sentence
    /// encodings.
    Fixed,
    /// Learnt metric: joint pair encoding.
    Learnt,
}

impl std::fmt::Display for StoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreMode::Fixed => write!(f, "fixed"),
            StoreMode::Learnt => write!(f, "learnt"),
        }
    }
}

/// Label embeddings of training samples, tagged with their gold classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStore {
    pub dim: usize,
    pub mode: StoreMode,
    pub entries: Vec<(PhaseVector, Label)>,
}

impl LabelStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Class counts in entry order (Entailment, Contradiction).
    pub fn class_counts(&self) -> (usize, usize) {
        let e = self.entries.iter().filter(|(_, l)| *l == Label::Entailment).count();
        (e, self.entries.len() - e)
    }
}

/// k and the tie-break policy identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    /// Distance ties break by insertion index; vote ties by smaller summed
    /// distance, then class ordinal. The identifier names that chain.
    pub tie_break: String,
}

impl KnnConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            tie_break: "index,summed-distance,ordinal".to_string(),
        }
    }
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self::new(3)
    }
}

/// Selects the class whose frozen label embedding yields the smallest
/// rotation distance; exact ties go to the lower ordinal (Entailment).
pub fn classify_nearest_label(
    p_emb: &ComplexVector,
    h_emb: &ComplexVector,
    bank: &LabelEmbeddingBank,
) -> Result<Label, ClassifyError> {
    let mut best = Label::Entailment;
    let mut best_distance = f64::INFINITY;
    for label in Label::ALL {
        let distance = rotate_distance(p_emb, h_emb, bank.get(label))?;
        if distance < best_distance {
            best_distance = distance;
            best = label;
        }
    }
    Ok(best)
}

/// The label embedding of one sample under the fixed metric: the
/// componentwise quotient of its role-framed single-sentence encodings.
pub fn fixed_query(
    vocab: &Vocabulary,
    params: &EncoderParams,
    example: &NliExample,
) -> Result<PhaseVector, ClassifyError> {
    let (p_emb, _) = encode_single(params, &premise_tokens(vocab, &example.premise))?;
    let (h_emb, _) = encode_single(params, &hypothesis_tokens(vocab, &example.hypothesis))?;
    Ok(extract_label(&p_emb, &h_emb)?)
}

/// The label embedding of one sample under the learnt metric: the joint
/// pair encoding.
pub fn learnt_query(
    vocab: &Vocabulary,
    params: &EncoderParams,
    example: &NliExample,
) -> Result<PhaseVector, ClassifyError> {
    let premise = vocab.tokenize(&example.premise);
    let hypothesis = vocab.tokenize(&example.hypothesis);
    let (phases, _) = encode_pair(params, &premise, &hypothesis)?;
    Ok(phases)
}

/// Builds the label store over training samples: one entry per sample, in
/// sample order, tagged with the gold class.
pub fn build_store(
    training_samples: &[NliExample],
    vocab: &Vocabulary,
    params: &EncoderParams,
    mode: StoreMode,
) -> Result<LabelStore, ClassifyError> {
    if training_samples.is_empty() {
        return Err(ClassifyError::EmptyStore);
    }
    let mut entries = Vec::with_capacity(training_samples.len());
    for example in training_samples {
        let query = match mode {
            StoreMode::Fixed => fixed_query(vocab, params, example)?,
            StoreMode::Learnt => learnt_query(vocab, params, example)?,
        };
        entries.push((query, example.label));
    }
    Ok(LabelStore {
        dim: params.dim,
        mode,
        entries,
    })
}

/// Majority vote among the k closest stored label embeddings.
///
/// Distance ties break by insertion index; vote ties by the smaller summed
/// distance, then by class ordinal.
pub fn knn_classify(
    query: &PhaseVector,
    store: &LabelStore,
    cfg: &KnnConfig,
) -> Result<Label, ClassifyError> {
    if store.is_empty() {
        return Err(ClassifyError::EmptyStore);
    }
    if cfg.k == 0 || cfg.k > store.len() {
        return Err(ClassifyError::KTooLarge {
            k: cfg.k,
            store_size: store.len(),
        });
    }
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(store.len());
    for (i, (entry, _)) in store.entries.iter().enumerate() {
        scored.push((label_distance(query, entry)?, i));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut votes = [0usize; 2];
    let mut summed = [0.0f64; 2];
    for &(distance, index) in scored.iter().take(cfg.k) {
        let class = store.entries[index].1;
        votes[class.ordinal()] += 1;
        summed[class.ordinal()] += distance;
    }
    let winner = match votes[0].cmp(&votes[1]) {
        std::cmp::Ordering::Greater => Label::Entailment,
        std::cmp::Ordering::Less => Label::Contradiction,
        std::cmp::Ordering::Equal => match summed[0].total_cmp(&summed[1]) {
            std::cmp::Ordering::Less | std::cmp::Ordering::Equal => Label::Entailment,
            std::cmp::Ordering::Greater => Label::Contradiction,
        },
    };
    Ok(winner)
}

/// 1-NN probe of an (untrained) encoder: builds a fixed-mode store from the
/// training samples and scores the fraction of test samples classified
/// correctly with k = 1.
pub fn probe_pretrained(
    test_samples: &[NliExample],
    train_samples: &[NliExample],
    vocab: &Vocabulary,
    params: &EncoderParams,
) -> Result<f64, ClassifyError> {
    if test_samples.is_empty() {
        return Err(ClassifyError::EmptyStore);
    }
    let store = build_store(train_samples, vocab, params, StoreMode::Fixed)?;
    let cfg = KnnConfig::new(1);
    let mut correct = 0usize;
    for example in test_samples {
        let query = fixed_query(vocab, params, example)?;
        if knn_classify(&query, &store, &cfg)? == example.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_samples.len() as f64)
}

/// Argmax over the two head logits; a tie goes to the lower ordinal.
pub fn classify_head(head: &HeadParams, p_emb: &ComplexVector, h_emb: &ComplexVector) -> Label {
    let cols = 4 * head.dim;
    let mut features = p_emb.realize().values().to_vec();
    features.extend_from_slice(h_emb.realize().values());
    let logit = |c: usize| -> f64 {
        head.bias[c]
            + head.weight[c * cols..(c + 1) * cols]
                .iter()
                .zip(features.iter())
                .map(|(w, f)| w * f)
                .sum::<f64>()
    };
    if logit(1) > logit(0) {
        Label::Contradiction
    } else {
        Label::Entailment
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreFile {
    format: String,
    version: u32,
    dim: usize,
    mode: StoreMode,
    entries: Vec<(Vec<f64>, Label)>,
}

const STORE_FORMAT: &str = "rotasym-store";
const STORE_VERSION: u32 = 1;

/// Writes the store as versioned JSON; loading reproduces queries bitwise.
pub fn save_store(path: &Path, store: &LabelStore) -> Result<(), ClassifyError> {
    let file = StoreFile {
        format: STORE_FORMAT.to_string(),
        version: STORE_VERSION,
        dim: store.dim,
        mode: store.mode,
        entries: store
            .entries
            .iter()
            .map(|(phases, label)| (phases.theta().to_vec(), *label))
            .collect(),
    };
    let json = serde_json::to_string(&file).map_err(|e| ClassifyError::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<LabelStore, ClassifyError> {
    let json = std::fs::read_to_string(path)?;
    let file: StoreFile =
        serde_json::from_str(&json).map_err(|e| ClassifyError::Format(e.to_string()))?;
    if file.format != STORE_FORMAT {
        return Err(ClassifyError::Format(format!(
            "unexpected format tag {:?}",
            file.format
        )));
    }
    if file.version != STORE_VERSION {
        return Err(ClassifyError::Format(format!(
            "unsupported store version {}",
            file.version
        )));
    }
    let mut entries = Vec::with_capacity(file.entries.len());
    for (theta, label) in file.entries {
        let phases = PhaseVector::new(theta).map_err(|e| ClassifyError::Format(e.to_string()))?;
        if phases.dim() != file.dim {
            return Err(ClassifyError::Format(
                "entry dimension inconsistent with store header".to_string(),
            ));
        }
        entries.push((phases, label));
    }
    Ok(LabelStore {
        dim: file.dim,
        mode: file.mode,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::hadamard_rotate;
    use crate::dataset::{generate_corpus, GenerateConfig, Mode};
    use crate::encoder::init_params;
    use crate::objectives::{init_head, init_label_bank};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_complex(rng: &mut ChaCha8Rng, dim: usize) -> ComplexVector {
        loop {
            let re: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let im: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = ComplexVector::new(re, im).unwrap();
            if v.norm() > 1e-2 {
                return v;
            }
        }
    }

    fn random_phase(rng: &mut ChaCha8Rng, dim: usize) -> PhaseVector {
        let pi = std::f64::consts::PI;
        PhaseVector::new((0..dim).map(|_| rng.gen_range(-pi..pi)).collect()).unwrap()
    }

    fn small_corpus(seed: u64) -> crate::dataset::GeneratedCorpus {
        let cfg = GenerateConfig {
            seed,
            n_entities: 40,
            n_per_relation: 6,
            train_fraction: 0.7,
            dev_fraction: 0.15,
            test_fraction: 0.15,
            entity_disjoint: true,
        };
        generate_corpus(&cfg).unwrap()
    }

    #[test]
    fn nearest_label_picks_exact_rotation_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let bank = init_label_bank(rng.gen(), 8);
            let p = random_complex(&mut rng, 8);
            let h = hadamard_rotate(&p, bank.get(Label::Entailment)).unwrap();
            assert_eq!(
                classify_nearest_label(&p, &h, &bank).unwrap(),
                Label::Entailment
            );
            let h = hadamard_rotate(&p, bank.get(Label::Contradiction)).unwrap();
            assert_eq!(
                classify_nearest_label(&p, &h, &bank).unwrap(),
                Label::Contradiction
            );
        }
    }

    #[test]
    fn nearest_label_tie_breaks_to_entailment() {
        // Identical class embeddings force an exact tie.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shared = random_phase(&mut rng, 5);
        let bank = LabelEmbeddingBank {
            entailment: shared.clone(),
            contradiction: shared,
            frozen: true,
        };
        let p = random_complex(&mut rng, 5);
        let h = random_complex(&mut rng, 5);
        assert_eq!(
            classify_nearest_label(&p, &h, &bank).unwrap(),
            Label::Entailment
        );
    }

    #[test]
    fn nearest_label_matches_exhaustive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let bank = init_label_bank(rng.gen(), 6);
            let p = random_complex(&mut rng, 6);
            let h = random_complex(&mut rng, 6);
            let got = classify_nearest_label(&p, &h, &bank).unwrap();
            let de = rotate_distance(&p, &h, &bank.entailment).unwrap();
            let dc = rotate_distance(&p, &h, &bank.contradiction).unwrap();
            let expected = if dc < de { Label::Contradiction } else { Label::Entailment };
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn build_store_preserves_cardinality_and_classes() {
        let corpus = small_corpus(5);
        let samples = &corpus.lexicalized.train;
        let texts: Vec<&str> = samples
            .iter()
            .flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()])
            .collect();
        let vocab = Vocabulary::from_texts(texts);
        let params = init_params(7, 8, vocab.len(), 0.2);
        for mode in [StoreMode::Fixed, StoreMode::Learnt] {
            let store = build_store(samples, &vocab, &params, mode).unwrap();
            assert_eq!(store.len(), samples.len());
            let expected_e = samples.iter().filter(|e| e.label == Label::Entailment).count();
            assert_eq!(store.class_counts().0, expected_e);
            let again = build_store(samples, &vocab, &params, mode).unwrap();
            assert_eq!(store, again);
        }
    }

    #[test]
    fn build_store_scale_zero_reports_small_modulus_not_nan() {
        let corpus = small_corpus(6);
        let samples = &corpus.lexicalized.train;
        let texts: Vec<&str> = samples
            .iter()
            .flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()])
            .collect();
        let vocab = Vocabulary::from_texts(texts);
        // Zero-scale init: all embeddings zero, every encoding is the zero
        // vector, so extraction must refuse rather than emit NaN phases.
        let params = init_params(7, 8, vocab.len(), 0.0);
        match build_store(samples, &vocab, &params, StoreMode::Fixed) {
            Err(ClassifyError::Metric(crate::error::MetricError::SmallModulus { .. })) => {}
            other => panic!("expected SmallModulus, got {other:?}"),
        }
    }

    #[test]
    fn knn_exact_hit_with_k_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let entries: Vec<(PhaseVector, Label)> = (0..20)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Entailment } else { Label::Contradiction };
                (random_phase(&mut rng, 6), label)
            })
            .collect();
        let store = LabelStore { dim: 6, mode: StoreMode::Fixed, entries: entries.clone() };
        for (phases, label) in &entries {
            let got = knn_classify(phases, &store, &KnnConfig::new(1)).unwrap();
            assert_eq!(got, *label);
        }
    }

    #[test]
    fn knn_majority_two_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_phase(&mut rng, 4);
        let near = |eps: f64| {
            PhaseVector::new(q.theta().iter().map(|t| t + eps).collect::<Vec<_>>()).unwrap()
        };
        let store = LabelStore {
            dim: 4,
            mode: StoreMode::Fixed,
            entries: vec![
                (near(0.01), Label::Entailment),
                (near(0.02), Label::Entailment),
                (near(0.03), Label::Contradiction),
                (near(2.0), Label::Contradiction),
                (near(2.5), Label::Contradiction),
            ],
        };
        assert_eq!(
            knn_classify(&q, &store, &KnnConfig::new(3)).unwrap(),
            Label::Entailment
        );
    }

    #[test]
    fn knn_rejects_oversized_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let store = LabelStore {
            dim: 4,
            mode: StoreMode::Fixed,
            entries: vec![(random_phase(&mut rng, 4), Label::Entailment)],
        };
        assert!(matches!(
            knn_classify(&random_phase(&mut rng, 4), &store, &KnnConfig::new(2)),
            Err(ClassifyError::KTooLarge { .. })
        ));
    }

    /// Brute-force reference: full sort with the same tie-break chain,
    /// recomputed from scratch.
    fn brute_force_knn(query: &PhaseVector, store: &LabelStore, k: usize) -> Label {
        let mut all: Vec<(f64, usize, Label)> = store
            .entries
            .iter()
            .enumerate()
            .map(|(i, (entry, label))| (label_distance(query, entry).unwrap(), i, *label))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let top = &all[..k];
        let votes_e = top.iter().filter(|(_, _, l)| *l == Label::Entailment).count();
        let votes_c = k - votes_e;
        if votes_e != votes_c {
            return if votes_e > votes_c { Label::Entailment } else { Label::Contradiction };
        }
        let sum = |target: Label| -> f64 {
            top.iter().filter(|(_, _, l)| *l == target).map(|(d, _, _)| d).sum()
        };
        let (se, sc) = (sum(Label::Entailment), sum(Label::Contradiction));
        if sc < se {
            Label::Contradiction
        } else {
            Label::Entailment
        }
    }

    #[test]
    fn knn_agrees_with_brute_force_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries: Vec<(PhaseVector, Label)> = (0..100)
            .map(|_| {
                let label = if rng.gen_bool(0.5) { Label::Entailment } else { Label::Contradiction };
                (random_phase(&mut rng, 5), label)
            })
            .collect();
        let store = LabelStore { dim: 5, mode: StoreMode::Fixed, entries };
        for k in [1, 2, 3, 5, 10] {
            let cfg = KnnConfig::new(k);
            for _ in 0..500 {
                let q = random_phase(&mut rng, 5);
                assert_eq!(
                    knn_classify(&q, &store, &cfg).unwrap(),
                    brute_force_knn(&q, &store, k),
                    "k = {k}"
                );
            }
        }
    }

    #[test]
    fn knn_k_one_equals_nearest_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let entries: Vec<(PhaseVector, Label)> = (0..50)
            .map(|_| {
                let label = if rng.gen_bool(0.5) { Label::Entailment } else { Label::Contradiction };
                (random_phase(&mut rng, 6), label)
            })
            .collect();
        let store = LabelStore { dim: 6, mode: StoreMode::Fixed, entries };
        let cfg = KnnConfig::new(1);
        for _ in 0..200 {
            let q = random_phase(&mut rng, 6);
            let mut best = (f64::INFINITY, 0usize);
            for (i, (entry, _)) in store.entries.iter().enumerate() {
                let d = label_distance(&q, entry).unwrap();
                if d < best.0 {
                    best = (d, i);
                }
            }
            assert_eq!(
                knn_classify(&q, &store, &cfg).unwrap(),
                store.entries[best.1].1
            );
        }
    }

    #[test]
    fn self_probe_is_perfect() {
        let corpus = small_corpus(13);
        let samples = &corpus.lexicalized.train;
        let texts: Vec<&str> = samples
            .iter()
            .flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()])
            .collect();
        let vocab = Vocabulary::from_texts(texts);
        let params = init_params(17, 8, vocab.len(), 0.2);
        let accuracy = probe_pretrained(samples, samples, &vocab, &params).unwrap();
        assert_eq!(accuracy, 1.0);
        let again = probe_pretrained(samples, samples, &vocab, &params).unwrap();
        assert_eq!(accuracy, again);
    }

    #[test]
    fn head_argmax_and_tie_break() {
        let mut head = init_head(1, 2, 0.0);
        let p = ComplexVector::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let h = p.clone();
        // Equal logits (zero head): tie goes to Entailment.
        assert_eq!(classify_head(&head, &p, &h), Label::Entailment);
        head.bias = vec![2.0, -1.0];
        assert_eq!(classify_head(&head, &p, &h), Label::Entailment);
        head.bias = vec![-1.0, 2.0];
        assert_eq!(classify_head(&head, &p, &h), Label::Contradiction);
    }

    #[test]
    fn head_agrees_with_logit_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let dim = 3;
            let head = init_head(rng.gen(), dim, 0.5);
            let p = random_complex(&mut rng, dim);
            let h = random_complex(&mut rng, dim);
            let got = classify_head(&head, &p, &h);
            let mut features = p.realize().values().to_vec();
            features.extend_from_slice(h.realize().values());
            let cols = 4 * dim;
            let logit = |c: usize| -> f64 {
                head.bias[c]
                    + (0..cols).map(|j| head.weight[c * cols + j] * features[j]).sum::<f64>()
            };
            let expected = if logit(1) > logit(0) { Label::Contradiction } else { Label::Entailment };
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn store_round_trip_preserves_queries_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let corpus = small_corpus(15);
        let samples = &corpus.delexicalized.train;
        let texts: Vec<&str> = samples
            .iter()
            .flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()])
            .collect();
        let vocab = Vocabulary::from_texts(texts);
        let params = init_params(19, 8, vocab.len(), 0.2);
        let store = build_store(samples, &vocab, &params, StoreMode::Learnt).unwrap();
        save_store(&path, &store).unwrap();
        let loaded = load_store(&path).unwrap();
        assert_eq!(store, loaded);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let cfg = KnnConfig::default();
        for _ in 0..100 {
            let q = random_phase(&mut rng, 8);
            assert_eq!(
                knn_classify(&q, &store, &cfg).unwrap(),
                knn_classify(&q, &loaded, &cfg).unwrap()
            );
        }
        let _ = Mode::Lexicalized;
    }
}
