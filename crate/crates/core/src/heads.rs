//! Classifier heads and losses in each geometry.
//!
//! Spherical: inner products against unit-sphere class prototypes, fed to
//! the angular loss. Hyperbolic: multi-class logistic regression whose
//! decision surfaces are parameterized by a ball offset `p_j` and a
//! tangent normal `W_j`. Euclidean: a plain linear layer. All three
//! produce logits; class probabilities are their softmax.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::manifold::{
    conformal_factor_k, mobius_add_k, BallPoint, Curvature, SpherePoint, SINGULARITY_EPS,
};
use crate::scalar::{self, cast, cross_entropy_from_logits, norm_sq, FloatScalar, Scalar};

/// Smallest admissible normal-vector norm for the hyperbolic head.
pub const MIN_NORMAL_NORM: f64 = 1e-12;

/// Probability floor inside [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-300;

// ---------------------------------------------------------------------------
// Generic kernels (shared by inference and the training tape)
// ---------------------------------------------------------------------------

/// Angular logits: `logit_j = ⟨x, w_j⟩` with prototypes as flat rows.
pub(crate) fn angular_logits_k<S: Scalar>(
    x: &[S],
    prototypes: &[S],
    classes: usize,
    dim: usize,
) -> Vec<S> {
    (0..classes)
        .map(|j| S::dot(x, &prototypes[j * dim..(j + 1) * dim]))
        .collect()
}

/// Euclidean logits `Wx + b` with `w` as flat rows.
pub(crate) fn euclidean_logits_k<S: Scalar>(
    x: &[S],
    w: &[S],
    b: &[S],
    classes: usize,
    dim: usize,
) -> Vec<S> {
    (0..classes)
        .map(|j| S::dot(x, &w[j * dim..(j + 1) * dim]) + b[j].clone())
        .collect()
}

/// Denominator diagnostics from one hyperbolic MLR evaluation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MlrDiag<F> {
    pub lambda_denom: F,
    pub min_inner_denom_abs: F,
}

/// Hyperbolic MLR logits:
/// `(λ_κ(x)·‖W_j‖/√|κ|) · asinh( 2√|κ|·⟨-p_j ⊕ x, W_j⟩ / ((1-|κ|‖-p_j ⊕ x‖²)·‖W_j‖) )`.
///
/// Offsets and normals are flat `classes × dim` rows. Denominators are not
/// guarded here; callers inspect the returned diagnostics.
pub(crate) fn mlr_logits_k<S: Scalar>(
    x: &[S],
    offsets: &[S],
    normals: &[S],
    classes: usize,
    dim: usize,
    kappa: S::F,
) -> (Vec<S>, MlrDiag<S::F>) {
    let a = kappa.abs();
    let sqrt_a = a.sqrt();
    let one = x[0].lit(cast(1.0));
    let lit_a = x[0].lit(a);
    let two_sqrt_a = x[0].lit(cast::<S::F>(2.0) * sqrt_a);

    let lam = conformal_factor_k(x, kappa);
    let lambda_denom = cast::<S::F>(1.0) + kappa * norm_sq(x).val();
    let mut min_inner = cast(f64::INFINITY);

    let logits = (0..classes)
        .map(|j| {
            let p = &offsets[j * dim..(j + 1) * dim];
            let w = &normals[j * dim..(j + 1) * dim];
            let neg_p: Vec<S> = p.iter().map(|v| -v.clone()).collect();
            let u = mobius_add_k(&neg_p, x, a);
            let wn = norm_sq(w).sqrt();
            let inner_denom = (one.clone() - lit_a.clone() * norm_sq(&u)) * wn.clone();
            let d = inner_denom.val().abs();
            if d < min_inner {
                min_inner = d;
            }
            let dot_uw = S::dot(&u, w);
            if dot_uw.val() == cast(0.0) {
                // asinh(0) = 0; skip the division so an orthogonal pair
                // stays exact even when the denominator is tiny
                return x[0].lit(cast(0.0));
            }
            let arg = two_sqrt_a.clone() * dot_uw / inner_denom;
            lam.clone() * wn * x[0].lit(cast::<S::F>(1.0) / sqrt_a) * arg.asinh()
        })
        .collect();

    (
        logits,
        MlrDiag {
            lambda_denom,
            min_inner_denom_abs: min_inner,
        },
    )
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// `C` class prototypes on a common sphere.
#[derive(Clone, Debug)]
pub struct AngularHead<F> {
    prototypes: Vec<SpherePoint<F>>,
}

impl<F: FloatScalar> AngularHead<F> {
    pub fn new(prototypes: Vec<SpherePoint<F>>) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::EmptyComponents);
        }
        let kappa = prototypes[0].curvature().value();
        let dim = prototypes[0].dim();
        for p in &prototypes {
            if p.curvature().value() != kappa {
                return Err(Error::CurvatureMismatch {
                    left: kappa.to_f64().unwrap_or(f64::NAN),
                    right: p.curvature().value().to_f64().unwrap_or(f64::NAN),
                });
            }
            if p.dim() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: p.dim(),
                });
            }
        }
        Ok(AngularHead { prototypes })
    }

    /// Builds a head by projecting arbitrary nonzero rows onto the sphere.
    pub fn from_unnormalized(rows: &[Vec<F>], kappa: Curvature<F>) -> Result<Self> {
        let prototypes = rows
            .iter()
            .map(|r| crate::manifold::sphere_project(r, kappa))
            .collect::<Result<Vec<_>>>()?;
        AngularHead::new(prototypes)
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].dim()
    }

    pub fn curvature(&self) -> Curvature<F> {
        self.prototypes[0].curvature()
    }

    pub fn prototypes(&self) -> &[SpherePoint<F>] {
        &self.prototypes
    }

    /// Prototype rows flattened to `classes × dim`.
    pub fn flat(&self) -> Vec<F> {
        self.prototypes
            .iter()
            .flat_map(|p| p.coords().iter().copied())
            .collect()
    }
}

/// Hyperbolic MLR parameters: ball offsets `p_j` and tangent normals `W_j`.
#[derive(Clone, Debug)]
pub struct HyperbolicMlrHead<F> {
    offsets: Vec<BallPoint<F>>,
    normals: Vec<Vec<F>>,
}

impl<F: Float> HyperbolicMlrHead<F> {
    pub fn new(offsets: Vec<BallPoint<F>>, normals: Vec<Vec<F>>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::EmptyComponents);
        }
        if offsets.len() != normals.len() {
            return Err(Error::LengthMismatch {
                left: offsets.len(),
                right: normals.len(),
            });
        }
        let kappa = offsets[0].curvature().value();
        let dim = offsets[0].dim();
        for p in &offsets {
            if p.curvature().value() != kappa {
                return Err(Error::CurvatureMismatch {
                    left: kappa.to_f64().unwrap_or(f64::NAN),
                    right: p.curvature().value().to_f64().unwrap_or(f64::NAN),
                });
            }
            if p.dim() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: p.dim(),
                });
            }
        }
        for w in &normals {
            if w.len() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: w.len(),
                });
            }
            let n = w.iter().fold(F::zero(), |a, &v| a + v * v).sqrt();
            if n < cast(MIN_NORMAL_NORM) {
                return Err(Error::ZeroVector {
                    norm: n.to_f64().unwrap_or(0.0),
                    min: MIN_NORMAL_NORM,
                });
            }
        }
        Ok(HyperbolicMlrHead { offsets, normals })
    }

    pub fn classes(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets[0].dim()
    }

    pub fn curvature(&self) -> Curvature<F> {
        self.offsets[0].curvature()
    }

    pub fn offsets(&self) -> &[BallPoint<F>] {
        &self.offsets
    }

    pub fn normals(&self) -> &[Vec<F>] {
        &self.normals
    }

    pub fn offsets_flat(&self) -> Vec<F> {
        self.offsets
            .iter()
            .flat_map(|p| p.coords().iter().copied())
            .collect()
    }

    pub fn normals_flat(&self) -> Vec<F> {
        self.normals.iter().flatten().copied().collect()
    }
}

/// Plain linear classifier `Wx + b`.
#[derive(Clone, Debug)]
pub struct EuclideanHead<F> {
    pub weight: Mat<F>,
    pub bias: Vec<F>,
}

impl<F: Float> EuclideanHead<F> {
    pub fn new(weight: Mat<F>, bias: Vec<F>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::DimMismatch {
                left: weight.rows(),
                right: bias.len(),
            });
        }
        if weight.data().iter().any(|v| !v.is_finite()) || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadSpec("non-finite head parameters".into()));
        }
        Ok(EuclideanHead { weight, bias })
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }
}

/// A probability vector over the normal classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceVec<F> {
    probs: Vec<F>,
}

impl<F: Float> ConfidenceVec<F> {
    pub fn new(probs: Vec<F>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyComponents);
        }
        let mut total = F::zero();
        for &p in &probs {
            if !(F::zero()..=F::one()).contains(&p) {
                return Err(Error::BadSpec(format!(
                    "probability {} outside [0, 1]",
                    p.to_f64().unwrap_or(f64::NAN)
                )));
            }
            total = total + p;
        }
        if (total - F::one()).abs() > cast(1e-9) {
            return Err(Error::BadSpec(format!(
                "probabilities sum to {}",
                total.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(ConfidenceVec { probs })
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max(&self) -> F {
        self.probs.iter().fold(F::neg_infinity(), |a, &b| a.max(b))
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Inner products of a sphere point against every class prototype.
pub fn angular_logits<F: FloatScalar>(x: &SpherePoint<F>, head: &AngularHead<F>) -> Result<Vec<F>> {
    if x.dim() != head.dim() {
        return Err(Error::DimMismatch {
            left: x.dim(),
            right: head.dim(),
        });
    }
    if x.curvature().value() != head.curvature().value() {
        return Err(Error::CurvatureMismatch {
            left: x.curvature().value().to_f64().unwrap_or(f64::NAN),
            right: head.curvature().value().to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(angular_logits_k(
        x.coords(),
        &head.flat(),
        head.classes(),
        head.dim(),
    ))
}

/// Mean batched softmax cross-entropy over angular logits, stabilized
/// through log-sum-exp.
pub fn angular_loss<F: FloatScalar>(logits_batch: &[Vec<F>], labels: &[usize]) -> Result<F> {
    if logits_batch.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits_batch.len(),
            right: labels.len(),
        });
    }
    if logits_batch.is_empty() {
        return Err(Error::EmptyDataset {
            context: "angular loss batch",
        });
    }
    let mut total = F::zero();
    for (logits, &label) in logits_batch.iter().zip(labels) {
        if label >= logits.len() {
            return Err(Error::BadLabel {
                label,
                classes: logits.len(),
            });
        }
        total = total + cross_entropy_from_logits(logits, label);
    }
    Ok(total / cast(logits_batch.len() as f64))
}

/// Hyperbolic MLR logits for a ball point.
pub fn hyperbolic_mlr_logits<F: FloatScalar>(
    x: &BallPoint<F>,
    head: &HyperbolicMlrHead<F>,
) -> Result<Vec<F>> {
    if x.dim() != head.dim() {
        return Err(Error::DimMismatch {
            left: x.dim(),
            right: head.dim(),
        });
    }
    if x.curvature().value() != head.curvature().value() {
        return Err(Error::CurvatureMismatch {
            left: x.curvature().value().to_f64().unwrap_or(f64::NAN),
            right: head.curvature().value().to_f64().unwrap_or(f64::NAN),
        });
    }
    let (logits, diag) = mlr_logits_k(
        x.coords(),
        &head.offsets_flat(),
        &head.normals_flat(),
        head.classes(),
        head.dim(),
        x.curvature().value(),
    );
    if diag.lambda_denom <= cast(SINGULARITY_EPS) {
        return Err(Error::Singularity {
            value: diag.lambda_denom.to_f64().unwrap_or(f64::NAN),
        });
    }
    if diag.min_inner_denom_abs < cast(SINGULARITY_EPS) {
        return Err(Error::Singularity {
            value: diag.min_inner_denom_abs.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(logits)
}

/// Linear logits `Wx + b`.
pub fn euclidean_logits<F: Float>(x: &[F], head: &EuclideanHead<F>) -> Result<Vec<F>> {
    if x.len() != head.dim() {
        return Err(Error::DimMismatch {
            left: x.len(),
            right: head.dim(),
        });
    }
    Ok(head
        .weight
        .matvec(x)
        .iter()
        .zip(&head.bias)
        .map(|(&l, &b)| l + b)
        .collect())
}

/// Shift-stabilized softmax into a validated confidence vector.
pub fn softmax<F: FloatScalar>(logits: &[F]) -> ConfidenceVec<F> {
    ConfidenceVec {
        probs: scalar::softmax(logits),
    }
}

/// `-log(conf[label])`, with the probability floored at `1e-300`.
pub fn cross_entropy<F: Float>(conf: &ConfidenceVec<F>, label: usize) -> Result<F> {
    if label >= conf.len() {
        return Err(Error::BadLabel {
            label,
            classes: conf.len(),
        });
    }
    let p = conf.probs()[label].max(cast(PROB_FLOOR));
    Ok(-p.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ball_clip, sphere_project, DEFAULT_XI};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(coords: &[f64], kappa: f64) -> SpherePoint<f64> {
        sphere_project(coords, Curvature::spherical(kappa).unwrap()).unwrap()
    }

    fn ball(coords: &[f64]) -> BallPoint<f64> {
        ball_clip(coords, Curvature::hyperbolic(-1.0).unwrap(), DEFAULT_XI).unwrap()
    }

    #[test]
    fn angular_logit_of_self_is_inverse_curvature() {
        let w = sphere(&[1.0, 0.0], 1.0);
        let head = AngularHead::new(vec![w.clone()]).unwrap();
        let logits = angular_logits(&w, &head).unwrap();
        assert!((logits[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angular_logit_orthogonal_is_zero() {
        let head = AngularHead::new(vec![sphere(&[1.0, 0.0], 1.0)]).unwrap();
        let x = sphere(&[0.0, 1.0], 1.0);
        assert!(angular_logits(&x, &head).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn angular_logit_hand_value() {
        let head = AngularHead::new(vec![sphere(&[0.8, 0.6], 1.0)]).unwrap();
        let x = sphere(&[0.6, 0.8], 1.0);
        assert!((angular_logits(&x, &head).unwrap()[0] - 0.96).abs() < 1e-12);
    }

    #[test]
    fn angular_logits_reject_dim_mismatch() {
        let head = AngularHead::new(vec![sphere(&[1.0, 0.0], 1.0)]).unwrap();
        let x = sphere(&[1.0, 0.0, 0.0], 1.0);
        assert!(matches!(
            angular_logits(&x, &head),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn angular_loss_single_sample() {
        let loss = angular_loss(&[vec![1.0, -1.0]], &[0]).unwrap();
        assert!((loss - (1.0 + (-2.0_f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn angular_loss_uniform_is_ln_c() {
        for c in [2usize, 4, 7] {
            let loss = angular_loss(&[vec![0.37; c]], &[1.min(c - 1)]).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn angular_loss_batch_mean() {
        let a = angular_loss(&[vec![1.0, -1.0]], &[0]).unwrap();
        let b = angular_loss(&[vec![0.2, 0.9]], &[1]).unwrap();
        let both = angular_loss(&[vec![1.0, -1.0], vec![0.2, 0.9]], &[0, 1]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn angular_loss_rejects_bad_label() {
        assert!(matches!(
            angular_loss(&[vec![0.0, 0.0]], &[2]),
            Err(Error::BadLabel { .. })
        ));
    }

    #[test]
    fn mlr_closed_form_at_origin_offset() {
        let head = HyperbolicMlrHead::new(vec![ball(&[0.0, 0.0])], vec![vec![1.0, 0.0]]).unwrap();
        let x = ball(&[0.5, 0.0]);
        let logit = hyperbolic_mlr_logits(&x, &head).unwrap()[0];
        assert!((logit - (4.0 / 3.0) * 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mlr_logit_zero_when_offset_equals_input() {
        let x = ball(&[0.3, -0.2]);
        let head = HyperbolicMlrHead::new(vec![x.clone()], vec![vec![0.4, 1.0]]).unwrap();
        assert_eq!(hyperbolic_mlr_logits(&x, &head).unwrap()[0], 0.0);
    }

    #[test]
    fn mlr_logit_zero_when_orthogonal() {
        let head = HyperbolicMlrHead::new(vec![ball(&[0.0, 0.0])], vec![vec![0.0, 1.0]]).unwrap();
        let x = ball(&[0.5, 0.0]);
        assert_eq!(hyperbolic_mlr_logits(&x, &head).unwrap()[0], 0.0);
    }

    #[test]
    fn mlr_odd_in_x_for_origin_offsets() {
        let head = HyperbolicMlrHead::new(vec![ball(&[0.0, 0.0])], vec![vec![0.7, 0.0]]).unwrap();
        for t in [0.1, 0.35, 0.6, 0.85] {
            let plus = hyperbolic_mlr_logits(&ball(&[t, 0.0]), &head).unwrap()[0];
            let minus = hyperbolic_mlr_logits(&ball(&[-t, 0.0]), &head).unwrap()[0];
            assert!((plus + minus).abs() < 1e-9, "t={t}: {plus} vs {minus}");
        }
    }

    #[test]
    fn mlr_rejects_degenerate_normals() {
        let result = HyperbolicMlrHead::new(vec![ball(&[0.0, 0.0])], vec![vec![0.0, 0.0]]);
        assert!(matches!(result, Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn euclidean_logits_examples() {
        let id = EuclideanHead::new(Mat::identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(euclidean_logits(&[1.0, 2.0], &id).unwrap(), vec![1.0, 2.0]);

        let bias_only = EuclideanHead::new(Mat::zeros(2, 2), vec![3.0, 4.0]).unwrap();
        assert_eq!(
            euclidean_logits(&[-5.0, 9.0], &bias_only).unwrap(),
            vec![3.0, 4.0]
        );

        let row = EuclideanHead::new(Mat::new(1, 2, vec![1.0, 1.0]), vec![0.0]).unwrap();
        assert_eq!(euclidean_logits(&[2.0, 3.0], &row).unwrap(), vec![5.0]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).probs(), &[0.5, 0.5]);
        let p = softmax(&[2.0_f64.ln(), 0.0]);
        assert!((p.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big.probs().iter().all(|v| v.is_finite()));
        assert!(big.probs()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn cross_entropy_examples() {
        let sure = ConfidenceVec::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy(&sure, 0).unwrap(), 0.0);
        let uniform = ConfidenceVec::new(vec![0.25; 4]).unwrap();
        assert!((cross_entropy(&uniform, 2).unwrap() - 4.0_f64.ln()).abs() < 1e-12);
        let skew = ConfidenceVec::new(vec![0.25, 0.75]).unwrap();
        assert!((cross_entropy(&skew, 1).unwrap() + 0.75_f64.ln()).abs() < 1e-15);
        // the floor keeps a zero-probability label finite
        assert!(cross_entropy(&sure, 1).unwrap().is_finite());
        assert!(matches!(
            cross_entropy(&sure, 5),
            Err(Error::BadLabel { .. })
        ));
    }

    #[test]
    fn angular_loss_equals_softmax_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let c = rng.random_range(2..6);
            let b = rng.random_range(1..5);
            let mut batch = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..b {
                batch.push(
                    (0..c)
                        .map(|_| rng.random_range(-3.0..3.0))
                        .collect::<Vec<f64>>(),
                );
                labels.push(rng.random_range(0..c));
            }
            let via_loss = angular_loss(&batch, &labels).unwrap();
            let via_ce = batch
                .iter()
                .zip(&labels)
                .map(|(l, &y)| cross_entropy(&softmax(l), y).unwrap())
                .sum::<f64>()
                / b as f64;
            assert!((via_loss - via_ce).abs() < 1e-12);
        }
    }
}
