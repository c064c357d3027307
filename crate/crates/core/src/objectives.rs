//! Training objectives and the optimizer.
//!
//! Three encoder-retraining objectives share the margin form
//! `d₊² + max(0, margin - d₋)²`:
//!
//! - random-label: distances are rotation distances from the premise/
//!   hypothesis encodings to a frozen random label embedding per class;
//! - pairwise (fixed metric): distances are cosine distances between label
//!   embeddings extracted as componentwise quotients of sample encodings;
//! - pairwise (learnt metric): the same pairwise objective over label
//!   embeddings produced by joint pair encoding.
//!
//! The fine-tuning baseline is softmax cross-entropy of a 2-way head over
//! the concatenated pair encoding. All objectives come with exact analytic
//! gradients w.r.t. their immediate inputs; encoder parameter gradients are
//! obtained by feeding those into tape replay.

use crate::complex::{
    label_distance_with_grad, rotate_distance, rotate_distance_with_grad, ComplexVector,
    PhaseVector,
};
use crate::dataset::Label;
use crate::error::{MetricError, TrainError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Margin of the hinge term; distances are bounded by 2, so the margin must
/// lie in (0, 2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub margin: f64,
}

impl MarginConfig {
    pub fn new(margin: f64) -> Result<Self, TrainError> {
        if !(margin > 0.0 && margin <= 2.0) {
            return Err(TrainError::BadMargin { got: margin });
        }
        Ok(Self { margin })
    }
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { margin: 0.5 }
    }
}

/// One frozen random label embedding per class. The bank is initialized
/// once and never updated by any training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEmbeddingBank {
    pub entailment: PhaseVector,
    pub contradiction: PhaseVector,
    pub frozen: bool,
}

impl LabelEmbeddingBank {
    pub fn get(&self, label: Label) -> &PhaseVector {
        match label {
            Label::Entailment => &self.entailment,
            Label::Contradiction => &self.contradiction,
        }
    }

    pub fn dim(&self) -> usize {
        self.entailment.dim()
    }
}

/// Samples one phase vector per class, phases uniform in [-π, π);
/// reproducible from the seed.
pub fn init_label_bank(seed: u64, dim: usize) -> LabelEmbeddingBank {
    assert!(dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = std::f64::consts::PI;
    let sample = |rng: &mut ChaCha8Rng| {
        PhaseVector::new((0..dim).map(|_| rng.gen_range(-pi..pi)).collect()).unwrap()
    };
    let entailment = sample(&mut rng);
    let contradiction = sample(&mut rng);
    LabelEmbeddingBank {
        entailment,
        contradiction,
        frozen: true,
    }
}

/// Classification head over the concatenated pair encoding: 2 × 4d weights
/// and 2 biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub dim: usize,
    /// Row-major 2 × 4d.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn init_head(seed: u64, dim: usize, scale: f64) -> HeadParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = 4 * dim;
    let weight = (0..2 * cols)
        .map(|_| if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 })
        .collect();
    HeadParams {
        dim,
        weight,
        bias: vec![0.0; 2],
    }
}

/// Gradients for the classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Random-label objective: `d_{l₊}(p,h)² + max(0, margin - d_{l₋}(p,h))²`
/// with l₊ the gold class's frozen embedding and l₋ the other class's.
pub fn loss_random_label(
    p_emb: &ComplexVector,
    h_emb: &ComplexVector,
    bank: &LabelEmbeddingBank,
    gold: Label,
    cfg: &MarginConfig,
) -> Result<f64, MetricError> {
    let d_pos = rotate_distance(p_emb, h_emb, bank.get(gold))?;
    let d_neg = rotate_distance(p_emb, h_emb, bank.get(gold.other()))?;
    Ok(d_pos * d_pos + (cfg.margin - d_neg).max(0.0).powi(2))
}

/// [`loss_random_label`] with gradients w.r.t. the realized forms of the
/// premise and hypothesis encodings.
pub fn loss_random_label_with_grad(
    p_emb: &ComplexVector,
    h_emb: &ComplexVector,
    bank: &LabelEmbeddingBank,
    gold: Label,
    cfg: &MarginConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>), MetricError> {
    let (d_pos, gp_pos, gh_pos) = rotate_distance_with_grad(p_emb, h_emb, bank.get(gold))?;
    let (d_neg, gp_neg, gh_neg) = rotate_distance_with_grad(p_emb, h_emb, bank.get(gold.other()))?;
    let hinge = (cfg.margin - d_neg).max(0.0);
    let loss = d_pos * d_pos + hinge * hinge;
    let n = gp_pos.len();
    let mut grad_p = vec![0.0; n];
    let mut grad_h = vec![0.0; n];
    for i in 0..n {
        grad_p[i] = 2.0 * d_pos * gp_pos[i];
        grad_h[i] = 2.0 * d_pos * gh_pos[i];
        if hinge > 0.0 {
            grad_p[i] -= 2.0 * hinge * gp_neg[i];
            grad_h[i] -= 2.0 * hinge * gh_neg[i];
        }
    }
    Ok((loss, grad_p, grad_h))
}

/// Pairwise objective over label embeddings: `d(l1,l2)²` for same-label
/// pairs, `max(0, margin - d(l1,l2))²` for different-label pairs.
pub fn loss_pairwise(
    l1: &PhaseVector,
    l2: &PhaseVector,
    same_label: bool,
    cfg: &MarginConfig,
) -> Result<f64, MetricError> {
    let (loss, _, _) = loss_pairwise_with_grad(l1, l2, same_label, cfg)?;
    Ok(loss)
}

/// [`loss_pairwise`] with gradients w.r.t. the two phase sequences.
pub fn loss_pairwise_with_grad(
    l1: &PhaseVector,
    l2: &PhaseVector,
    same_label: bool,
    cfg: &MarginConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>), MetricError> {
    let (dist, g1, g2) = label_distance_with_grad(l1, l2)?;
    let n = g1.len();
    let mut grad1 = vec![0.0; n];
    let mut grad2 = vec![0.0; n];
    let loss = if same_label {
        for i in 0..n {
            grad1[i] = 2.0 * dist * g1[i];
            grad2[i] = 2.0 * dist * g2[i];
        }
        dist * dist
    } else {
        let hinge = (cfg.margin - dist).max(0.0);
        if hinge > 0.0 {
            for i in 0..n {
                grad1[i] = -2.0 * hinge * g1[i];
                grad2[i] = -2.0 * hinge * g2[i];
            }
        }
        hinge * hinge
    };
    Ok((loss, grad1, grad2))
}

fn head_features(p_emb: &ComplexVector, h_emb: &ComplexVector) -> Vec<f64> {
    let mut features = p_emb.realize().values().to_vec();
    features.extend_from_slice(h_emb.realize().values());
    features
}

fn head_logits(head: &HeadParams, features: &[f64]) -> [f64; 2] {
    let cols = 4 * head.dim;
    let mut logits = [0.0; 2];
    for (c, logit) in logits.iter_mut().enumerate() {
        let row = &head.weight[c * cols..(c + 1) * cols];
        *logit = head.bias[c]
            + row
                .iter()
                .zip(features.iter())
                .map(|(w, f)| w * f)
                .sum::<f64>();
    }
    logits
}

/// Softmax cross-entropy of the head applied to the concatenated realized
/// premise and hypothesis encodings; computed through log-sum-exp.
pub fn loss_cross_entropy(
    head: &HeadParams,
    p_emb: &ComplexVector,
    h_emb: &ComplexVector,
    gold: Label,
) -> f64 {
    let logits = head_logits(head, &head_features(p_emb, h_emb));
    let max = logits[0].max(logits[1]);
    let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
    lse - logits[gold.ordinal()]
}

/// [`loss_cross_entropy`] with gradients w.r.t. the head parameters and the
/// realized forms of both encodings.
pub fn loss_cross_entropy_with_grad(
    head: &HeadParams,
    p_emb: &ComplexVector,
    h_emb: &ComplexVector,
    gold: Label,
) -> (f64, HeadGradients, Vec<f64>, Vec<f64>) {
    let features = head_features(p_emb, h_emb);
    let logits = head_logits(head, &features);
    let max = logits[0].max(logits[1]);
    let exp0 = (logits[0] - max).exp();
    let exp1 = (logits[1] - max).exp();
    let lse = max + (exp0 + exp1).ln();
    let loss = lse - logits[gold.ordinal()];
    let probs = [exp0 / (exp0 + exp1), exp1 / (exp0 + exp1)];

    let cols = 4 * head.dim;
    let mut grad_weight = vec![0.0; 2 * cols];
    let mut grad_bias = vec![0.0; 2];
    let mut grad_features = vec![0.0; cols];
    for c in 0..2 {
        let g = probs[c] - if c == gold.ordinal() { 1.0 } else { 0.0 };
        grad_bias[c] = g;
        let row = &head.weight[c * cols..(c + 1) * cols];
        for j in 0..cols {
            grad_weight[c * cols + j] = g * features[j];
            grad_features[j] += g * row[j];
        }
    }
    let half = 2 * head.dim;
    let grad_p = grad_features[..half].to_vec();
    let grad_h = grad_features[half..].to_vec();
    (
        loss,
        HeadGradients {
            weight: grad_weight,
            bias: grad_bias,
        },
        grad_p,
        grad_h,
    )
}

/// Adam hyperparameters; `default_with_lr` pins the conventional
/// β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn default_with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MomentPair {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-tensor first/second moment accumulators and the shared step counter,
/// which increments by exactly one per [`adam_step`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    slots: BTreeMap<String, MomentPair>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// A named parameter tensor paired with its gradient for one update.
pub struct AdamTensor<'a> {
    pub name: &'static str,
    pub params: &'a mut [f64],
    pub grads: &'a [f64],
}

/// One Adam update with bias correction across all given tensors.
///
/// Rejects non-finite gradients (the training divergence signal) before
/// touching any parameter or moment.
pub fn adam_step(
    tensors: &mut [AdamTensor<'_>],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<(), TrainError> {
    for tensor in tensors.iter() {
        if tensor.grads.len() != tensor.params.len() {
            return Err(TrainError::StateShape {
                tensor: tensor.name.to_string(),
                expected: tensor.params.len(),
                got: tensor.grads.len(),
            });
        }
        for (i, g) in tensor.grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient {
                    tensor: tensor.name.to_string(),
                    index: i,
                });
            }
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    for tensor in tensors.iter_mut() {
        let slot = state
            .slots
            .entry(tensor.name.to_string())
            .or_insert_with(|| MomentPair {
                m: vec![0.0; tensor.params.len()],
                v: vec![0.0; tensor.params.len()],
            });
        if slot.m.len() != tensor.params.len() {
            return Err(TrainError::StateShape {
                tensor: tensor.name.to_string(),
                expected: slot.m.len(),
                got: tensor.params.len(),
            });
        }
        for i in 0..tensor.params.len() {
            let g = tensor.grads[i];
            slot.m[i] = hyper.beta1 * slot.m[i] + (1.0 - hyper.beta1) * g;
            slot.v[i] = hyper.beta2 * slot.v[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = slot.m[i] / bias1;
            let v_hat = slot.v[i] / bias2;
            tensor.params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::hadamard_rotate;

    fn random_complex(rng: &mut ChaCha8Rng, dim: usize) -> ComplexVector {
        loop {
            let re: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let im: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = ComplexVector::new(re, im).unwrap();
            if v.norm() > 1e-2 && (0..dim).all(|i| v.modulus(i) > 1e-2) {
                return v;
            }
        }
    }

    fn random_phase(rng: &mut ChaCha8Rng, dim: usize) -> PhaseVector {
        let pi = std::f64::consts::PI;
        PhaseVector::new((0..dim).map(|_| rng.gen_range(-pi..pi)).collect()).unwrap()
    }

    #[test]
    fn margin_bounds_enforced() {
        assert!(MarginConfig::new(0.5).is_ok());
        assert!(MarginConfig::new(2.0).is_ok());
        assert!(matches!(MarginConfig::new(0.0), Err(TrainError::BadMargin { .. })));
        assert!(matches!(MarginConfig::new(2.5), Err(TrainError::BadMargin { .. })));
    }

    #[test]
    fn random_label_loss_vanishes_on_satisfied_configuration() {
        let pi = std::f64::consts::PI;
        let dim = 4;
        let bank = LabelEmbeddingBank {
            entailment: PhaseVector::identity(dim),
            contradiction: PhaseVector::new(vec![pi; dim]).unwrap(),
            frozen: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_complex(&mut rng, dim);
        let h = hadamard_rotate(&p, bank.get(Label::Entailment)).unwrap();
        let cfg = MarginConfig::default();
        let loss = loss_random_label(&p, &h, &bank, Label::Entailment, &cfg).unwrap();
        assert!(loss < 1e-20, "loss = {loss}");
    }

    #[test]
    fn random_label_loss_plug_in_values() {
        // d₊ = 1 (orthogonal after rotation), d₋ = 0 → 1 + 0.5² = 1.25.
        let pi = std::f64::consts::PI;
        let p = ComplexVector::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let h = p.clone();
        let bank = LabelEmbeddingBank {
            entailment: PhaseVector::new(vec![pi / 2.0, -pi / 2.0]).unwrap(),
            contradiction: PhaseVector::identity(2),
            frozen: true,
        };
        let cfg = MarginConfig::default();
        let loss = loss_random_label(&p, &h, &bank, Label::Entailment, &cfg).unwrap();
        assert!((loss - 1.25).abs() < 1e-12, "loss = {loss}");
    }

    #[test]
    fn random_label_loss_matches_straight_line_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = MarginConfig::default();
        for _ in 0..200 {
            let dim = 5;
            let bank = init_label_bank(rng.gen(), dim);
            let p = random_complex(&mut rng, dim);
            let h = random_complex(&mut rng, dim);
            let gold = if rng.gen_bool(0.5) { Label::Entailment } else { Label::Contradiction };
            let loss = loss_random_label(&p, &h, &bank, gold, &cfg).unwrap();
            let d_pos = rotate_distance(&p, &h, bank.get(gold)).unwrap();
            let d_neg = rotate_distance(&p, &h, bank.get(gold.other())).unwrap();
            let expected = d_pos * d_pos + (cfg.margin - d_neg).max(0.0).powi(2);
            assert!((loss - expected).abs() < 1e-12);
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn pairwise_loss_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = MarginConfig::default();
        let l = random_phase(&mut rng, 6);
        assert_eq!(loss_pairwise(&l, &l, true, &cfg).unwrap(), 0.0);
        // Different labels at distance zero: the full hinge, margin².
        let full = loss_pairwise(&l, &l, false, &cfg).unwrap();
        assert!((full - 0.25).abs() < 1e-12);
        // Different labels already margin apart: hinge inactive.
        let pi = std::f64::consts::PI;
        let far = PhaseVector::new(l.theta().iter().map(|t| t + pi).collect::<Vec<_>>()).unwrap();
        assert_eq!(loss_pairwise(&l, &far, false, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_equal_logits_is_ln_two() {
        let head = init_head(5, 3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_complex(&mut rng, 3);
        let h = random_complex(&mut rng, 3);
        let loss = loss_cross_entropy(&head, &p, &h, Label::Entailment);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_vanishes_as_gold_logit_dominates() {
        let mut head = init_head(6, 2, 0.0);
        head.bias[0] = 40.0;
        head.bias[1] = -40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_complex(&mut rng, 2);
        let h = random_complex(&mut rng, 2);
        assert!(loss_cross_entropy(&head, &p, &h, Label::Entailment) < 1e-12);
        assert!(loss_cross_entropy(&head, &p, &h, Label::Contradiction) > 50.0);
    }

    #[test]
    fn cross_entropy_matches_log_sum_exp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let dim = 3;
            let head = init_head(rng.gen(), dim, 0.5);
            let p = random_complex(&mut rng, dim);
            let h = random_complex(&mut rng, dim);
            let gold = if rng.gen_bool(0.5) { Label::Entailment } else { Label::Contradiction };
            let loss = loss_cross_entropy(&head, &p, &h, gold);
            // Independent recomputation.
            let mut features = p.realize().values().to_vec();
            features.extend_from_slice(h.realize().values());
            let cols = 4 * dim;
            let logit = |c: usize| -> f64 {
                head.bias[c]
                    + (0..cols).map(|j| head.weight[c * cols + j] * features[j]).sum::<f64>()
            };
            let (z0, z1) = (logit(0), logit(1));
            let m = z0.max(z1);
            let expected = m + ((z0 - m).exp() + (z1 - m).exp()).ln() - logit(gold.ordinal());
            assert!((loss - expected).abs() < 1e-10);
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = MarginConfig::default();
        let step = 1e-6;
        for _ in 0..50 {
            let dim = 4;
            let bank = init_label_bank(rng.gen(), dim);
            let p = random_complex(&mut rng, dim);
            let h = random_complex(&mut rng, dim);
            let gold = if rng.gen_bool(0.5) { Label::Entailment } else { Label::Contradiction };
            // Skip instances sitting on the hinge kink.
            let d_neg = rotate_distance(&p, &h, bank.get(gold.other())).unwrap();
            if (cfg.margin - d_neg).abs() < 1e-3 {
                continue;
            }
            let (_, gp, gh) =
                loss_random_label_with_grad(&p, &h, &bank, gold, &cfg).unwrap();
            let rp = p.realize().values().to_vec();
            let rh = h.realize().values().to_vec();
            for j in 0..2 * dim {
                let eval = |pv: &[f64], hv: &[f64]| {
                    loss_random_label(
                        &ComplexVector::from_interleaved(pv).unwrap(),
                        &ComplexVector::from_interleaved(hv).unwrap(),
                        &bank,
                        gold,
                        &cfg,
                    )
                    .unwrap()
                };
                let mut plus = rp.clone();
                let mut minus = rp.clone();
                plus[j] += step;
                minus[j] -= step;
                let fd = (eval(&plus, &rh) - eval(&minus, &rh)) / (2.0 * step);
                assert!((fd - gp[j]).abs() < 1e-5, "p[{j}] fd={fd} an={}", gp[j]);
                let mut plus = rh.clone();
                let mut minus = rh.clone();
                plus[j] += step;
                minus[j] -= step;
                let fd = (eval(&rp, &plus) - eval(&rp, &minus)) / (2.0 * step);
                assert!((fd - gh[j]).abs() < 1e-5, "h[{j}] fd={fd} an={}", gh[j]);
            }
        }
    }

    #[test]
    fn hinge_dead_zone_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = MarginConfig::default();
        let l1 = random_phase(&mut rng, 6);
        let pi = std::f64::consts::PI;
        let l2 = PhaseVector::new(l1.theta().iter().map(|t| t + pi).collect::<Vec<_>>()).unwrap();
        // Distance is 2 ≥ margin: different-label loss and all gradients vanish.
        let (loss, g1, g2) = loss_pairwise_with_grad(&l1, &l2, false, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g1.iter().chain(g2.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let step = 1e-6;
        for _ in 0..20 {
            let dim = 3;
            let head = init_head(rng.gen(), dim, 0.5);
            let p = random_complex(&mut rng, dim);
            let h = random_complex(&mut rng, dim);
            let gold = Label::Contradiction;
            let (_, ghead, gp, gh) = loss_cross_entropy_with_grad(&head, &p, &h, gold);
            let cols = 4 * dim;
            for idx in 0..2 * cols {
                let mut plus = head.clone();
                let mut minus = head.clone();
                plus.weight[idx] += step;
                minus.weight[idx] -= step;
                let fd = (loss_cross_entropy(&plus, &p, &h, gold)
                    - loss_cross_entropy(&minus, &p, &h, gold))
                    / (2.0 * step);
                assert!((fd - ghead.weight[idx]).abs() < 1e-5);
            }
            let rp = p.realize().values().to_vec();
            for j in 0..2 * dim {
                let mut plus = rp.clone();
                let mut minus = rp.clone();
                plus[j] += step;
                minus[j] -= step;
                let fd = (loss_cross_entropy(
                    &head,
                    &ComplexVector::from_interleaved(&plus).unwrap(),
                    &h,
                    gold,
                ) - loss_cross_entropy(
                    &head,
                    &ComplexVector::from_interleaved(&minus).unwrap(),
                    &h,
                    gold,
                )) / (2.0 * step);
                assert!((fd - gp[j]).abs() < 1e-5);
            }
            assert_eq!(gh.len(), 2 * dim);
        }
    }

    #[test]
    fn adam_zero_gradients_leave_fresh_params_unchanged() {
        let mut params = vec![0.3, -0.7, 1.2];
        let grads = vec![0.0; 3];
        let mut state = AdamState::new();
        let hyper = AdamHyper::default_with_lr(0.1);
        for _ in 0..5 {
            adam_step(
                &mut [AdamTensor { name: "w", params: &mut params, grads: &grads }],
                &mut state,
                &hyper,
            )
            .unwrap();
        }
        assert_eq!(params, vec![0.3, -0.7, 1.2]);
        assert_eq!(state.t, 5);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut params = vec![1.0, 1.0];
        let grads = vec![0.5, -2.0];
        let mut state = AdamState::new();
        let hyper = AdamHyper::default_with_lr(0.01);
        adam_step(
            &mut [AdamTensor { name: "w", params: &mut params, grads: &grads }],
            &mut state,
            &hyper,
        )
        .unwrap();
        // Bias-corrected first step: lr · g/(|g| + ε') ≈ lr · sign(g).
        assert!((params[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((params[1] - (1.0 + 0.01)).abs() < 1e-6);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_converges_on_convex_quadratic() {
        // Minimize (x - 0.3)² + (y + 0.2)² from the origin.
        let mut params = vec![0.0, 0.0];
        let mut state = AdamState::new();
        let hyper = AdamHyper::default_with_lr(0.02);
        for _ in 0..100 {
            let grads = vec![2.0 * (params[0] - 0.3), 2.0 * (params[1] + 0.2)];
            adam_step(
                &mut [AdamTensor { name: "xy", params: &mut params, grads: &grads }],
                &mut state,
                &hyper,
            )
            .unwrap();
        }
        let f = (params[0] - 0.3).powi(2) + (params[1] + 0.2).powi(2);
        assert!(f < 1e-3, "f = {f} at {params:?}");
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut params = vec![1.0];
        let grads = vec![f64::NAN];
        let mut state = AdamState::new();
        let hyper = AdamHyper::default_with_lr(0.01);
        let err = adam_step(
            &mut [AdamTensor { name: "w", params: &mut params, grads: &grads }],
            &mut state,
            &hyper,
        );
        assert!(matches!(err, Err(TrainError::NonFiniteGradient { .. })));
        assert_eq!(params, vec![1.0]);
        assert_eq!(state.t, 0);
    }

    #[test]
    fn label_bank_is_seeded_and_frozen() {
        let a = init_label_bank(7, 16);
        let b = init_label_bank(7, 16);
        assert_eq!(a, b);
        assert!(a.frozen);
        assert_ne!(init_label_bank(8, 16).entailment, a.entailment);
    }

    #[test]
    fn label_bank_expected_class_distance_near_one() {
        // E[1 - cos(θ₁ - θ₂)] = 1 for independent uniform phases.
        let mut sum = 0.0;
        let n = 200;
        for seed in 0..n {
            let bank = init_label_bank(seed, 32);
            sum += crate::complex::label_distance(&bank.entailment, &bank.contradiction).unwrap();
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean = {mean}");
    }
}
