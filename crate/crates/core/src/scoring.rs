//! Geometric scores and anomaly scores at inference time.
//!
//! Single-branch models score by what their curved classifier exposes: the
//! maximal angular logit on the sphere, the geodesic distance from the
//! origin on the ball, and the root-sum-square across components of a
//! product space. Dual-branch models score by the KL divergence between
//! softmax distributions of the Euclidean and the curved embedding.
//! Geometric scores are normalized into anomaly scores by `1 - tanh(z)`;
//! the plain Euclidean baseline uses `1 - max(c_E)`.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::heads::{angular_logits, AngularHead, ConfidenceVec};
use crate::manifold::{geodesic_norm_k, BallPoint, GeoPoint, SpherePoint};
use crate::models::{ArchKind, CurvedHead, ForwardOutput, GeometryTag, Model};
use crate::scalar::{self, cast, FloatScalar};
use crate::Real;

/// Which definition produced a geometric score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreKind {
    ZE,
    ZS,
    ZH,
    ZM,
    ZES,
    ZEH,
    ZEM,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::ZE => "z_e",
            ScoreKind::ZS => "z_s",
            ScoreKind::ZH => "z_h",
            ScoreKind::ZM => "z_m",
            ScoreKind::ZES => "z_es",
            ScoreKind::ZEH => "z_eh",
            ScoreKind::ZEM => "z_em",
        }
    }
}

/// A framework-dependent geometric score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricScore<F> {
    pub value: F,
    pub kind: ScoreKind,
}

/// An anomaly score; higher means more anomalous.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnomalyScore<F> {
    pub value: F,
}

/// Spherical score: the maximal inner product against any prototype.
pub fn score_spherical<F: FloatScalar>(
    e_s: &SpherePoint<F>,
    head: &AngularHead<F>,
) -> Result<GeometricScore<F>> {
    let logits = angular_logits(e_s, head)?;
    let value = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    Ok(GeometricScore {
        value,
        kind: ScoreKind::ZS,
    })
}

/// Hyperbolic score: geodesic distance from the origin.
pub fn score_hyperbolic<F: FloatScalar>(e_h: &BallPoint<F>) -> GeometricScore<F> {
    let value = geodesic_norm_k(e_h.coords(), e_h.curvature().abs());
    GeometricScore {
        value,
        kind: ScoreKind::ZH,
    }
}

/// Mixed score: root-sum-square over component scores.
pub fn score_product<F: Float>(components: &[GeometricScore<F>]) -> Result<GeometricScore<F>> {
    if components.is_empty() {
        return Err(Error::EmptyComponents);
    }
    let value = components
        .iter()
        .fold(F::zero(), |acc, s| acc + s.value * s.value)
        .sqrt();
    Ok(GeometricScore {
        value,
        kind: ScoreKind::ZM,
    })
}

/// `Σ p_i·log(p_i/q_i)` with `q` floored at `1e-300` and `0·log(0/q) = 0`.
pub fn kl_divergence<F: Float>(p: &ConfidenceVec<F>, q: &ConfidenceVec<F>) -> Result<F> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let floor = cast::<F>(1e-300);
    let mut total = F::zero();
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi == F::zero() {
            continue;
        }
        total = total + pi * (pi / qi.max(floor)).ln();
    }
    Ok(total)
}

/// Dual-branch score: KL between the softmax of the Euclidean embedding
/// and the softmax of the curved embedding's coordinates.
pub fn score_git<F: FloatScalar>(
    e_e: &[F],
    e_g_coords: &[F],
    kind: ScoreKind,
) -> Result<GeometricScore<F>> {
    if e_e.len() != e_g_coords.len() {
        return Err(Error::DimMismatch {
            left: e_e.len(),
            right: e_g_coords.len(),
        });
    }
    let p = ConfidenceVec::new(scalar::softmax(e_e))?;
    let q = ConfidenceVec::new(scalar::softmax(e_g_coords))?;
    let value = kl_divergence(&p, &q)?;
    Ok(GeometricScore { value, kind })
}

/// Mixed dual-branch score: root-sum-square over per-component KL scores.
pub fn score_git_mixed<F: Float>(components: &[GeometricScore<F>]) -> Result<GeometricScore<F>> {
    if components.is_empty() {
        return Err(Error::EmptyComponents);
    }
    let value = components
        .iter()
        .fold(F::zero(), |acc, s| acc + s.value * s.value)
        .sqrt();
    Ok(GeometricScore {
        value,
        kind: ScoreKind::ZEM,
    })
}

/// `AS = 1 - tanh(z)`.
pub fn anomaly_score<F: Float>(z: &GeometricScore<F>) -> AnomalyScore<F> {
    AnomalyScore {
        value: F::one() - z.value.tanh(),
    }
}

/// Baseline maximum-softmax-probability score: `AS = 1 - max(c_E)`.
pub fn msp_anomaly_score<F: Float>(c_e: &ConfidenceVec<F>) -> AnomalyScore<F> {
    AnomalyScore {
        value: F::one() - c_e.max(),
    }
}

/// The architecture's score rule applied to one forward pass.
///
/// Baseline: `z = max(c_E)` with the maximum-softmax-probability anomaly
/// score. Single-branch models: the branch's geometric score (root sum of
/// squares across components when mixed, with `z_E = max(c_E)` joining the
/// sum when the Euclidean space is declared). Dual-branch models: the KL
/// score per curved branch, combined by root sum of squares when mixed.
/// Geometric anomaly scores are `1 - tanh(z)`.
pub fn score_model(
    model: &Model,
    out: &ForwardOutput,
) -> Result<(GeometricScore<Real>, AnomalyScore<Real>)> {
    match model.arch {
        ArchKind::Baseline => {
            let (_, conf) = out
                .euclidean
                .as_ref()
                .ok_or_else(|| Error::BadSpec("baseline forward lacks confidence".into()))?;
            let z = GeometricScore {
                value: conf.max(),
                kind: ScoreKind::ZE,
            };
            Ok((z, msp_anomaly_score(conf)))
        }
        ArchKind::Gio => {
            let mut components: Vec<GeometricScore<Real>> = Vec::new();
            if model.components.iter().any(|t| !t.is_curved()) {
                let (_, conf) = out
                    .euclidean
                    .as_ref()
                    .ok_or_else(|| Error::BadSpec("missing Euclidean component".into()))?;
                components.push(GeometricScore {
                    value: conf.max(),
                    kind: ScoreKind::ZE,
                });
            }
            for (branch_out, branch) in out.branches.iter().zip(&model.branches) {
                let z = match (&branch_out.embedding, &branch.head) {
                    (GeoPoint::Sphere(p), CurvedHead::Angular(h)) => score_spherical(p, h)?,
                    (GeoPoint::Ball(p), _) => score_hyperbolic(p),
                    _ => return Err(Error::BadSpec("branch embedding/head mismatch".into())),
                };
                components.push(z);
            }
            let z = if components.len() == 1 {
                components[0]
            } else {
                score_product(&components)?
            };
            Ok((z, anomaly_score(&z)))
        }
        ArchKind::Git => {
            let mut components: Vec<GeometricScore<Real>> = Vec::new();
            for branch_out in &out.branches {
                let kind = match branch_out.tag {
                    GeometryTag::Spherical { .. } => ScoreKind::ZES,
                    GeometryTag::Hyperbolic { .. } => ScoreKind::ZEH,
                    GeometryTag::Euclidean => {
                        return Err(Error::BadSpec("euclidean is not a curved branch".into()))
                    }
                };
                components.push(score_git(
                    &out.embedding,
                    branch_out.embedding.coords(),
                    kind,
                )?);
            }
            let z = if components.len() == 1 {
                components[0]
            } else {
                score_git_mixed(&components)?
            };
            Ok((z, anomaly_score(&z)))
        }
    }
}
