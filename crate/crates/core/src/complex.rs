//! Complex vector algebra for rotation embeddings.
//!
//! Sentence embeddings are d-dimensional complex vectors. Relation and label
//! embeddings are unit-modulus complex vectors stored as d phases, so that
//! multiplying a sentence embedding by a label embedding is a componentwise
//! rotation. The distance between a premise p and a hypothesis h under a
//! label l is
//!
//! ```text
//! d_l(p, h) = 1 - sim(h, p ∘ l)
//! ```
//!
//! where `∘` is the componentwise (Hadamard) complex product and `sim` is
//! cosine similarity over the 2d-real realization. Because rotation is not
//! symmetric in its arguments unless every phase of l is 0 or π, the metric
//! can represent both symmetric and antisymmetric relations.

use crate::error::MetricError;
use serde::{Deserialize, Serialize};

/// Modulus floor below which componentwise division is refused.
pub const MODULUS_FLOOR: f64 = 1e-8;

const PI: f64 = std::f64::consts::PI;

/// Wrap an angle into the canonical interval `[-π, π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = (theta + PI).rem_euclid(two_pi) - PI;
    // rem_euclid may round to exactly 2π for tiny negative inputs.
    if t >= PI {
        t = -PI;
    }
    t
}

/// A d-dimensional complex embedding, split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexVector {
    /// Builds a complex vector, rejecting mismatched lengths, empty input,
    /// and non-finite components.
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self, MetricError> {
        if re.len() != im.len() {
            return Err(MetricError::DimensionMismatch {
                left: re.len(),
                right: im.len(),
            });
        }
        if re.is_empty() {
            return Err(MetricError::Empty);
        }
        for (i, (&a, &b)) in re.iter().zip(im.iter()).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(MetricError::NonFinite { index: i });
            }
        }
        Ok(Self { re, im })
    }

    /// Builds from an interleaved `[re0, im0, re1, im1, ...]` slice.
    pub fn from_interleaved(values: &[f64]) -> Result<Self, MetricError> {
        if values.len() % 2 != 0 || values.is_empty() {
            return Err(MetricError::Empty);
        }
        let re = values.iter().step_by(2).copied().collect();
        let im = values.iter().skip(1).step_by(2).copied().collect();
        Self::new(re, im)
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    /// The interleaved 2d-real realization over which cosine similarity
    /// and the classification head operate.
    pub fn realize(&self) -> RealizedVector {
        let mut values = Vec::with_capacity(2 * self.dim());
        for i in 0..self.dim() {
            values.push(self.re[i]);
            values.push(self.im[i]);
        }
        RealizedVector { values }
    }

    /// Euclidean norm of the realization.
    pub fn norm(&self) -> f64 {
        self.re
            .iter()
            .zip(self.im.iter())
            .map(|(a, b)| a * a + b * b)
            .sum::<f64>()
            .sqrt()
    }

    /// Componentwise negation.
    pub fn negated(&self) -> Self {
        Self {
            re: self.re.iter().map(|x| -x).collect(),
            im: self.im.iter().map(|x| -x).collect(),
        }
    }

    /// Modulus of component `i`.
    pub fn modulus(&self, i: usize) -> f64 {
        (self.re[i] * self.re[i] + self.im[i] * self.im[i]).sqrt()
    }
}

/// A unit-modulus complex vector stored as d phases in `[-π, π)`.
///
/// Houses relation and label embeddings: every component is exactly
/// `(cos θᵢ, sin θᵢ)` by construction, so the modulus is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    theta: Vec<f64>,
}

impl PhaseVector {
    /// Builds a phase vector, wrapping every angle into `[-π, π)`.
    pub fn new(theta: Vec<f64>) -> Result<Self, MetricError> {
        if theta.is_empty() {
            return Err(MetricError::Empty);
        }
        for (i, &t) in theta.iter().enumerate() {
            if !t.is_finite() {
                return Err(MetricError::NonFinite { index: i });
            }
        }
        Ok(Self {
            theta: theta.into_iter().map(wrap_phase).collect(),
        })
    }

    /// All-zero phases: the identity rotation.
    pub fn identity(dim: usize) -> Self {
        Self {
            theta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Negates every phase (the conjugate rotation), wrap respected.
    pub fn conjugate(&self) -> Self {
        Self {
            theta: self.theta.iter().map(|t| wrap_phase(-t)).collect(),
        }
    }

    /// The unit-modulus complex vector this phase vector represents.
    pub fn to_complex(&self) -> ComplexVector {
        ComplexVector {
            re: self.theta.iter().map(|t| t.cos()).collect(),
            im: self.theta.iter().map(|t| t.sin()).collect(),
        }
    }

    /// Interleaved `(cos θᵢ, sin θᵢ)` realization.
    pub fn realize(&self) -> RealizedVector {
        self.to_complex().realize()
    }
}

/// A complex vector flattened as interleaved re/im reals; length is exactly 2d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedVector {
    values: Vec<f64>,
}

impl RealizedVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &RealizedVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_dims(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        Err(MetricError::DimensionMismatch { left, right })
    } else {
        Ok(())
    }
}

/// Componentwise rotation of `p` by the phases of `l`: component i becomes
/// `pᵢ · e^{iθᵢ}`. Preserves the modulus of every component.
pub fn hadamard_rotate(p: &ComplexVector, l: &PhaseVector) -> Result<ComplexVector, MetricError> {
    check_dims(p.dim(), l.dim())?;
    let mut re = Vec::with_capacity(p.dim());
    let mut im = Vec::with_capacity(p.dim());
    for i in 0..p.dim() {
        let (s, c) = l.theta[i].sin_cos();
        re.push(p.re[i] * c - p.im[i] * s);
        im.push(p.re[i] * s + p.im[i] * c);
    }
    Ok(ComplexVector { re, im })
}

/// Cosine similarity of the 2d-real realizations; always in `[-1, 1]`.
///
/// Errors on zero-norm input (degenerate embedding).
pub fn cosine_similarity(a: &ComplexVector, b: &ComplexVector) -> Result<f64, MetricError> {
    check_dims(a.dim(), b.dim())?;
    let ra = a.realize();
    let rb = b.realize();
    let na = ra.norm();
    let nb = rb.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    Ok((ra.dot(&rb) / (na * nb)).clamp(-1.0, 1.0))
}

/// The symmetry-aware rotation distance `d_l(p, h) = 1 - sim(h, p ∘ l)`,
/// always in `[0, 2]`.
pub fn rotate_distance(
    p: &ComplexVector,
    h: &ComplexVector,
    l: &PhaseVector,
) -> Result<f64, MetricError> {
    let rotated = hadamard_rotate(p, l)?;
    Ok(1.0 - cosine_similarity(h, &rotated)?)
}

/// Extracts the label phases of the componentwise quotient `h ⊘ p`:
/// `θᵢ = arg(hᵢ) - arg(pᵢ)` wrapped to `[-π, π)`, moduli discarded.
///
/// Errors (naming the offending component) when any `|pᵢ|` is below
/// [`MODULUS_FLOOR`].
pub fn extract_label(p: &ComplexVector, h: &ComplexVector) -> Result<PhaseVector, MetricError> {
    check_dims(p.dim(), h.dim())?;
    let mut theta = Vec::with_capacity(p.dim());
    for i in 0..p.dim() {
        let modulus = p.modulus(i);
        if modulus < MODULUS_FLOOR {
            return Err(MetricError::SmallModulus {
                index: i,
                modulus,
                floor: MODULUS_FLOOR,
            });
        }
        let arg_h = h.im[i].atan2(h.re[i]);
        let arg_p = p.im[i].atan2(p.re[i]);
        theta.push(wrap_phase(arg_h - arg_p));
    }
    Ok(PhaseVector { theta })
}

/// Cosine-similarity distance between two label embeddings, in `[0, 2]`.
///
/// Unit-modulus vectors never have zero norm, so this cannot fail on
/// degenerate input, only on a dimension mismatch.
pub fn label_distance(l1: &PhaseVector, l2: &PhaseVector) -> Result<f64, MetricError> {
    check_dims(l1.dim(), l2.dim())?;
    let r1 = l1.realize();
    let r2 = l2.realize();
    // |realization| = sqrt(d) exactly for unit-modulus components.
    let sim = (r1.dot(&r2) / (r1.norm() * r2.norm())).clamp(-1.0, 1.0);
    Ok(1.0 - sim)
}

/// `rotate_distance` together with its exact gradients w.r.t. the realized
/// forms of `p` and `h` (each 2d reals, interleaved).
pub(crate) fn rotate_distance_with_grad(
    p: &ComplexVector,
    h: &ComplexVector,
    l: &PhaseVector,
) -> Result<(f64, Vec<f64>, Vec<f64>), MetricError> {
    let rotated = hadamard_rotate(p, l)?;
    let rh = h.realize();
    let ru = rotated.realize();
    let nh = rh.norm();
    let nu = ru.norm();
    if nh == 0.0 || nu == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    let dot = rh.dot(&ru);
    let sim = dot / (nh * nu);

    // d = 1 - sim, so grad(d) = -grad(sim).
    // ∂sim/∂h = u/(|h||u|) - sim·h/|h|²
    // ∂sim/∂u = h/(|h||u|) - sim·u/|u|²
    let n = rh.len();
    let mut grad_h = vec![0.0; n];
    let mut grad_u = vec![0.0; n];
    for i in 0..n {
        grad_h[i] = -(ru.values[i] / (nh * nu) - sim * rh.values[i] / (nh * nh));
        grad_u[i] = -(rh.values[i] / (nh * nu) - sim * ru.values[i] / (nu * nu));
    }
    // u = p ∘ l is linear in p; pull grad_u back through the inverse rotation.
    let mut grad_p = vec![0.0; n];
    for i in 0..p.dim() {
        let (s, c) = l.theta[i].sin_cos();
        let gre = grad_u[2 * i];
        let gim = grad_u[2 * i + 1];
        grad_p[2 * i] = gre * c + gim * s;
        grad_p[2 * i + 1] = -gre * s + gim * c;
    }
    Ok((1.0 - sim, grad_p, grad_h))
}

/// `label_distance` together with its exact gradients w.r.t. the two phase
/// sequences (each d reals).
///
/// Uses the closed form `1 - (1/d)·Σ cos(θ1ᵢ - θ2ᵢ)`, which coincides with
/// the realized cosine distance because both realizations have norm √d.
pub(crate) fn label_distance_with_grad(
    l1: &PhaseVector,
    l2: &PhaseVector,
) -> Result<(f64, Vec<f64>, Vec<f64>), MetricError> {
    check_dims(l1.dim(), l2.dim())?;
    let d = l1.dim() as f64;
    let mut dist = 0.0;
    let mut g1 = vec![0.0; l1.dim()];
    let mut g2 = vec![0.0; l1.dim()];
    for i in 0..l1.dim() {
        let delta = l1.theta[i] - l2.theta[i];
        dist += 1.0 - delta.cos();
        g1[i] = delta.sin() / d;
        g2[i] = -delta.sin() / d;
    }
    Ok((dist / d, g1, g2))
}

/// Phase-extraction gradients: for `θᵢ = arg(hᵢ) - arg(pᵢ)`, converts an
/// upstream d-vector of ∂L/∂θᵢ into gradients w.r.t. the realized forms of
/// `p` and `h`. The wrap is a piecewise-constant offset and does not affect
/// gradients.
pub(crate) fn extract_label_pullback(
    p: &ComplexVector,
    h: &ComplexVector,
    upstream: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = p.dim();
    let mut grad_p = vec![0.0; 2 * n];
    let mut grad_h = vec![0.0; 2 * n];
    for i in 0..n {
        let g = upstream[i];
        let rp = p.re[i] * p.re[i] + p.im[i] * p.im[i];
        let rh = h.re[i] * h.re[i] + h.im[i] * h.im[i];
        // ∂arg(z)/∂re = -im/|z|², ∂arg(z)/∂im = re/|z|²
        grad_h[2 * i] = g * (-h.im[i] / rh);
        grad_h[2 * i + 1] = g * (h.re[i] / rh);
        grad_p[2 * i] = g * (p.im[i] / rp);
        grad_p[2 * i + 1] = g * (-p.re[i] / rp);
    }
    (grad_p, grad_h)
}
