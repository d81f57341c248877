//! Curvature-aware geometric primitives.
//!
//! Projections into curved spaces, Möbius algebra on the Poincaré ball,
//! geodesic distance and the conformal factor. The ball radius is `1/|κ|`
//! and the conformal factor is `1/(1 + κ‖x‖²)`; both are used exactly in
//! that form throughout, including by the hyperbolic classifier head.
//!
//! The math lives in generic kernels over [`Scalar`] so the same code path
//! serves plain-float inference and tape-recorded differentiation. The
//! typed wrappers below add the domain invariants and error reporting.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{cast, clamp_magnitude, norm, norm_sq, FloatScalar, Scalar};

/// Norms below this count as the zero vector.
pub const ZERO_NORM_EPS: f64 = 1e-30;

/// Default stability margin ξ for ball clipping.
pub const DEFAULT_XI: f64 = 1e-5;

/// Magnitude ceiling for atanh arguments.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-12;

/// Smallest denominator accepted by the conformal factor and the
/// hyperbolic classifier's inner ratio.
pub const SINGULARITY_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Generic kernels
// ---------------------------------------------------------------------------

/// `x / (√κ ‖x‖)`. Caller guarantees `‖x‖ > 0` and `κ > 0`.
pub(crate) fn sphere_project_k<S: Scalar>(x: &[S], kappa: S::F) -> Vec<S> {
    let scale = norm(x) * x[0].lit(kappa.sqrt());
    x.iter().map(|xi| xi.clone() / scale.clone()).collect()
}

/// Identity inside radius `1/|κ|`, rescale to `(1-ξ)/|κ|` outside.
///
/// The branch is chosen on current values; points exactly on the radius
/// take the identity branch.
pub(crate) fn ball_clip_k<S: Scalar>(x: &[S], abs_kappa: S::F, xi: S::F) -> Vec<S> {
    let radius = cast::<S::F>(1.0) / abs_kappa;
    let nrm = norm_sq(x).val().sqrt();
    if nrm <= radius {
        return x.to_vec();
    }
    let n = norm(x);
    let target = x[0].lit((cast::<S::F>(1.0) - xi) / abs_kappa);
    x.iter()
        .map(|xi_| xi_.clone() * target.clone() / n.clone())
        .collect()
}

/// Möbius addition on the ball with `a = |κ|`.
pub(crate) fn mobius_add_k<S: Scalar>(x: &[S], y: &[S], abs_kappa: S::F) -> Vec<S> {
    let a = x[0].lit(abs_kappa);
    let one = x[0].lit(cast(1.0));
    let two = x[0].lit(cast(2.0));

    let xy = S::dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);

    let cross = two * a.clone() * xy;
    let coeff_x = one.clone() + cross.clone() + a.clone() * y2.clone();
    let coeff_y = one.clone() - a.clone() * x2.clone();
    let den = one + cross + a.clone() * a * x2 * y2;

    x.iter()
        .zip(y)
        .map(|(xi, yi)| (coeff_x.clone() * xi.clone() + coeff_y.clone() * yi.clone()) / den.clone())
        .collect()
}

/// `(2/√a)·atanh(√a·‖-x ⊕ y‖)` with the atanh argument clamped.
pub(crate) fn geodesic_dist_k<S: Scalar>(x: &[S], y: &[S], abs_kappa: S::F) -> S {
    let neg_x: Vec<S> = x.iter().map(|v| -v.clone()).collect();
    let diff = mobius_add_k(&neg_x, y, abs_kappa);
    let sqrt_a = abs_kappa.sqrt();
    let d2 = norm_sq(&diff);
    // ‖-x ⊕ y‖ vanishes at x = y, where the norm gradient is undefined;
    // the distance is exactly zero there.
    if d2.val() == cast(0.0) {
        return x[0].lit(cast(0.0));
    }
    let arg = clamp_magnitude(d2.sqrt() * x[0].lit(sqrt_a), cast(ATANH_CLAMP));
    arg.atanh() * x[0].lit(cast::<S::F>(2.0) / sqrt_a)
}

/// Distance from the origin: `(2/√a)·atanh(√a‖x‖)`.
pub(crate) fn geodesic_norm_k<S: Scalar>(x: &[S], abs_kappa: S::F) -> S {
    let sqrt_a = abs_kappa.sqrt();
    let n2 = norm_sq(x);
    if n2.val() == cast(0.0) {
        return x[0].lit(cast(0.0));
    }
    let arg = clamp_magnitude(n2.sqrt() * x[0].lit(sqrt_a), cast(ATANH_CLAMP));
    arg.atanh() * x[0].lit(cast::<S::F>(2.0) / sqrt_a)
}

/// Hyperbolic linear map `(1/√a)·tanh((‖Wx‖/‖x‖)·atanh(√a‖x‖))·Wx/‖Wx‖`.
///
/// `w` is row-major `rows × cols`. Degenerate inputs (`x = 0`, or `Wx = 0`
/// with `x ≠ 0`) yield the origin; the second case is reported through the
/// returned flag.
pub(crate) fn mobius_matvec_k<S: Scalar>(
    w: &[S],
    rows: usize,
    cols: usize,
    x: &[S],
    abs_kappa: S::F,
    xi: S::F,
) -> (Vec<S>, bool) {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(x.len(), cols);
    let origin = || vec![x[0].lit(cast(0.0)); rows];

    let xn2 = norm_sq(x);
    if xn2.val().sqrt() < cast(ZERO_NORM_EPS) {
        return (origin(), false);
    }
    let wx: Vec<S> = (0..rows)
        .map(|i| S::dot(&w[i * cols..(i + 1) * cols], x))
        .collect();
    let wxn2 = norm_sq(&wx);
    if wxn2.val().sqrt() < cast(ZERO_NORM_EPS) {
        return (origin(), true);
    }

    let sqrt_a = abs_kappa.sqrt();
    let xn = xn2.sqrt();
    let wxn = wxn2.sqrt();
    let arg = clamp_magnitude(xn.clone() * x[0].lit(sqrt_a), cast(ATANH_CLAMP));
    let t = (wxn.clone() / xn) * arg.atanh();
    let scale = t.tanh() * x[0].lit(cast::<S::F>(1.0) / sqrt_a) / wxn;
    let out: Vec<S> = wx.into_iter().map(|v| v * scale.clone()).collect();
    (ball_clip_k(&out, abs_kappa, xi), false)
}

/// Conformal factor `λ_κ(x) = 1/(1 + κ‖x‖²)` with signed `κ`.
pub(crate) fn conformal_factor_k<S: Scalar>(x: &[S], kappa: S::F) -> S {
    let one = x[0].lit(cast(1.0));
    one.clone() / (one + norm_sq(x) * x[0].lit(kappa))
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Signed curvature of an embedding space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curvature<F> {
    value: F,
}

impl<F: Float> Curvature<F> {
    /// Positive curvature for a spherical space.
    pub fn spherical(value: F) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::BadCurvature {
                value: value.to_f64().unwrap_or(f64::NAN),
                reason: "must be finite",
            });
        }
        if value <= F::zero() {
            return Err(Error::BadCurvature {
                value: value.to_f64().unwrap_or(f64::NAN),
                reason: "spherical curvature must be positive",
            });
        }
        Ok(Curvature { value })
    }

    /// Negative curvature for a hyperbolic space.
    pub fn hyperbolic(value: F) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::BadCurvature {
                value: value.to_f64().unwrap_or(f64::NAN),
                reason: "must be finite",
            });
        }
        if value >= F::zero() {
            return Err(Error::BadCurvature {
                value: value.to_f64().unwrap_or(f64::NAN),
                reason: "hyperbolic curvature must be negative",
            });
        }
        Ok(Curvature { value })
    }

    pub fn value(&self) -> F {
        self.value
    }

    pub fn abs(&self) -> F {
        self.value.abs()
    }

    pub fn is_spherical(&self) -> bool {
        self.value > F::zero()
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.value < F::zero()
    }
}

/// Point on the sphere `‖x‖² = 1/κ`, `κ > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint<F> {
    coords: Vec<F>,
    curvature: Curvature<F>,
}

impl<F: Float> SpherePoint<F> {
    /// Wraps coordinates that already satisfy the norm invariant
    /// (relative tolerance 1e-9).
    pub fn new(coords: Vec<F>, curvature: Curvature<F>) -> Result<Self> {
        if !curvature.is_spherical() {
            return Err(Error::BadCurvature {
                value: curvature.value().to_f64().unwrap_or(f64::NAN),
                reason: "sphere point needs positive curvature",
            });
        }
        let n2 = coords.iter().fold(F::zero(), |a, &c| a + c * c);
        let want = F::one() / curvature.value();
        let rel = ((n2 - want) / want).abs();
        if rel > cast(1e-9) {
            return Err(Error::BadSpec(format!(
                "sphere norm² {} differs from 1/κ = {} beyond tolerance",
                n2.to_f64().unwrap_or(f64::NAN),
                want.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(SpherePoint { coords, curvature })
    }

    pub fn coords(&self) -> &[F] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature<F> {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Point in the Poincaré ball of radius `1/|κ|`, `κ < 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint<F> {
    coords: Vec<F>,
    curvature: Curvature<F>,
    xi: F,
}

impl<F: Float> BallPoint<F> {
    /// Wraps coordinates already inside the clipped radius `(1-ξ)/|κ|`
    /// (the unclipped radius `1/|κ|` is also accepted, matching the
    /// identity branch of the clip).
    pub fn new(coords: Vec<F>, curvature: Curvature<F>, xi: F) -> Result<Self> {
        if !curvature.is_hyperbolic() {
            return Err(Error::BadCurvature {
                value: curvature.value().to_f64().unwrap_or(f64::NAN),
                reason: "ball point needs negative curvature",
            });
        }
        let n = coords.iter().fold(F::zero(), |a, &c| a + c * c).sqrt();
        let limit = F::one() / curvature.abs();
        // one-ulp slack over the radius for round-tripped clipped points
        if n > limit * (F::one() + cast(1e-12)) {
            return Err(Error::BadSpec(format!(
                "ball norm {} exceeds radius {}",
                n.to_f64().unwrap_or(f64::NAN),
                limit.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(BallPoint {
            coords,
            curvature,
            xi,
        })
    }

    pub fn origin(dim: usize, curvature: Curvature<F>, xi: F) -> Result<Self> {
        BallPoint::new(vec![F::zero(); dim], curvature, xi)
    }

    pub fn coords(&self) -> &[F] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature<F> {
        self.curvature
    }

    pub fn xi(&self) -> F {
        self.xi
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> F {
        self.coords.iter().fold(F::zero(), |a, &c| a + c * c).sqrt()
    }
}

/// One component of a mixed-curvature product space.
#[derive(Clone, Debug)]
pub enum GeoPoint<F> {
    Euclidean(Vec<F>),
    Sphere(SpherePoint<F>),
    Ball(BallPoint<F>),
}

impl<F: Float> GeoPoint<F> {
    pub fn dim(&self) -> usize {
        match self {
            GeoPoint::Euclidean(v) => v.len(),
            GeoPoint::Sphere(p) => p.dim(),
            GeoPoint::Ball(p) => p.dim(),
        }
    }

    pub fn coords(&self) -> &[F] {
        match self {
            GeoPoint::Euclidean(v) => v,
            GeoPoint::Sphere(p) => p.coords(),
            GeoPoint::Ball(p) => p.coords(),
        }
    }
}

/// Point in a product of component manifolds.
#[derive(Clone, Debug)]
pub struct ProductPoint<F> {
    components: Vec<GeoPoint<F>>,
}

impl<F: Float> ProductPoint<F> {
    pub fn new(components: Vec<GeoPoint<F>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyComponents);
        }
        for c in &components {
            if let GeoPoint::Euclidean(v) = c {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::BadSpec("non-finite euclidean component".into()));
                }
            }
        }
        Ok(ProductPoint { components })
    }

    pub fn components(&self) -> &[GeoPoint<F>] {
        &self.components
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Projects a nonzero vector onto the sphere of curvature `κ > 0`.
pub fn sphere_project<F: FloatScalar>(x: &[F], kappa: Curvature<F>) -> Result<SpherePoint<F>> {
    if !kappa.is_spherical() {
        return Err(Error::BadCurvature {
            value: kappa.value().to_f64().unwrap_or(f64::NAN),
            reason: "sphere projection needs positive curvature",
        });
    }
    let n = norm(x).val();
    if n < cast(ZERO_NORM_EPS) {
        return Err(Error::ZeroVector {
            norm: n.to_f64().unwrap_or(0.0),
            min: ZERO_NORM_EPS,
        });
    }
    let coords = sphere_project_k(x, kappa.value());
    SpherePoint::new(coords, kappa)
}

/// Clips a vector into the Poincaré ball of curvature `κ < 0`.
pub fn ball_clip<F: FloatScalar>(x: &[F], kappa: Curvature<F>, xi: F) -> Result<BallPoint<F>> {
    if !kappa.is_hyperbolic() {
        return Err(Error::BadCurvature {
            value: kappa.value().to_f64().unwrap_or(f64::NAN),
            reason: "ball clip needs negative curvature",
        });
    }
    if xi <= F::zero() || xi >= F::one() {
        return Err(Error::BadSpec(format!(
            "xi must lie in (0, 1), got {}",
            xi.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let coords = ball_clip_k(x, kappa.abs(), xi);
    BallPoint::new(coords, kappa, xi)
}

/// Möbius addition; the result is re-clipped into the ball.
pub fn mobius_add<F: FloatScalar>(x: &BallPoint<F>, y: &BallPoint<F>) -> Result<BallPoint<F>> {
    check_same_ball(x, y)?;
    let sum = mobius_add_k(x.coords(), y.coords(), x.curvature.abs());
    ball_clip(&sum, x.curvature, x.xi)
}

/// Geodesic distance `(2/√|κ|)·atanh(√|κ|·‖-x ⊕ y‖)`.
pub fn geodesic_dist<F: FloatScalar>(x: &BallPoint<F>, y: &BallPoint<F>) -> Result<F> {
    check_same_ball(x, y)?;
    Ok(geodesic_dist_k(x.coords(), y.coords(), x.curvature.abs()))
}

/// Result of the hyperbolic linear map, with a rank-deficiency flag.
#[derive(Clone, Debug)]
pub struct MatvecOutput<F> {
    pub point: BallPoint<F>,
    /// `true` when `‖Wx‖` vanished for a nonzero `x`; the point is the origin.
    pub degenerate: bool,
}

/// Hyperbolic linear operation on the ball.
pub fn mobius_matvec<F: FloatScalar>(w: &Mat<F>, x: &BallPoint<F>) -> Result<MatvecOutput<F>> {
    if w.cols() != x.dim() {
        return Err(Error::DimMismatch {
            left: w.cols(),
            right: x.dim(),
        });
    }
    let (coords, degenerate) = mobius_matvec_k(
        w.data(),
        w.rows(),
        w.cols(),
        x.coords(),
        x.curvature.abs(),
        x.xi,
    );
    Ok(MatvecOutput {
        point: BallPoint::new(coords, x.curvature, x.xi)?,
        degenerate,
    })
}

/// Conformal factor `λ_κ(x) = 1/(1 + κ‖x‖²)`.
pub fn conformal_factor<F: FloatScalar>(x: &BallPoint<F>) -> Result<F> {
    let denom = F::one() + x.curvature.value() * norm_sq(x.coords()).val();
    if denom <= cast(SINGULARITY_EPS) {
        return Err(Error::Singularity {
            value: denom.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(conformal_factor_k(x.coords(), x.curvature.value()))
}

fn check_same_ball<F: Float>(x: &BallPoint<F>, y: &BallPoint<F>) -> Result<()> {
    if x.curvature.value() != y.curvature.value() {
        return Err(Error::CurvatureMismatch {
            left: x.curvature.value().to_f64().unwrap_or(f64::NAN),
            right: y.curvature.value().to_f64().unwrap_or(f64::NAN),
        });
    }
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    const KAPPA_H: f64 = -1.0;

    fn ball(coords: &[f64]) -> BallPoint<f64> {
        BallPoint::new(
            coords.to_vec(),
            Curvature::hyperbolic(KAPPA_H).unwrap(),
            DEFAULT_XI,
        )
        .unwrap()
    }

    #[test]
    fn sphere_project_unit_curvature() {
        let p = sphere_project(&[3.0, 4.0], Curvature::spherical(1.0).unwrap()).unwrap();
        assert!((p.coords()[0] - 0.6).abs() < 1e-15);
        assert!((p.coords()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sphere_project_scales_with_curvature() {
        // κ = 4 target norm 1/√4 = 0.5
        let p = sphere_project(&[3.0, 4.0], Curvature::spherical(4.0).unwrap()).unwrap();
        assert!((p.coords()[0] - 0.3).abs() < 1e-9);
        assert!((p.coords()[1] - 0.4).abs() < 1e-9);
        let n = (p.coords()[0].powi(2) + p.coords()[1].powi(2)).sqrt();
        assert!((n - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sphere_project_rejects_zero_vector() {
        let err = sphere_project(&[0.0, 0.0], Curvature::spherical(1.0).unwrap());
        assert!(matches!(err, Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn sphere_project_rejects_bad_curvature() {
        assert!(Curvature::spherical(-1.0).is_err());
        assert!(Curvature::spherical(0.0).is_err());
        assert!(Curvature::spherical(f64::NAN).is_err());
    }

    #[test]
    fn sphere_project_idempotent_up_to_scaling() {
        let kappa = Curvature::spherical(2.0).unwrap();
        let p = sphere_project(&[0.3, -1.2, 0.4], kappa).unwrap();
        let q = sphere_project(p.coords(), kappa).unwrap();
        for (a, b) in p.coords().iter().zip(q.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_clip_inside_is_identity() {
        let k = Curvature::hyperbolic(-1.0).unwrap();
        let p = ball_clip(&[0.5, 0.0], k, 1e-5).unwrap();
        assert_eq!(p.coords(), &[0.5, 0.0]);
    }

    #[test]
    fn ball_clip_outside_rescales() {
        let k = Curvature::hyperbolic(-1.0).unwrap();
        let p = ball_clip(&[3.0, 0.0], k, 1e-5).unwrap();
        assert!((p.coords()[0] - 0.99999).abs() < 1e-12);
        assert_eq!(p.coords()[1], 0.0);
    }

    #[test]
    fn ball_clip_uses_literal_radius() {
        // radius 1/|κ| = 100, so a norm-3 vector is untouched
        let k = Curvature::hyperbolic(-0.01).unwrap();
        let p = ball_clip(&[3.0, 0.0], k, 1e-5).unwrap();
        assert_eq!(p.coords(), &[3.0, 0.0]);
    }

    #[test]
    fn ball_clip_rejects_nonnegative_curvature() {
        assert!(Curvature::hyperbolic(0.0).is_err());
        assert!(Curvature::hyperbolic(1.0).is_err());
    }

    #[test]
    fn mobius_add_left_identity() {
        let zero = ball(&[0.0, 0.0]);
        let y = ball(&[0.4, 0.1]);
        let sum = mobius_add(&zero, &y).unwrap();
        assert_eq!(sum.coords(), y.coords());
    }

    #[test]
    fn mobius_add_collinear_matches_1d_oracle() {
        let x = ball(&[0.3, 0.0]);
        let y = ball(&[0.4, 0.0]);
        let sum = mobius_add(&x, &y).unwrap();
        let want = oracles::mobius_1d_reference(0.3, 0.4, KAPPA_H);
        assert!((sum.coords()[0] - want).abs() < 1e-12);
        assert!(sum.coords()[1].abs() < 1e-15);
    }

    #[test]
    fn mobius_add_left_inverse() {
        let x = ball(&[-0.3, 0.2]);
        let y = ball(&[0.3, -0.2]);
        let sum = mobius_add(&x, &y).unwrap();
        assert_eq!(sum.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn mobius_add_rejects_mismatched_curvature() {
        let x = ball(&[0.1, 0.0]);
        let y = BallPoint::new(
            vec![0.1, 0.0],
            Curvature::hyperbolic(-0.5).unwrap(),
            DEFAULT_XI,
        )
        .unwrap();
        assert!(matches!(
            mobius_add(&x, &y),
            Err(Error::CurvatureMismatch { .. })
        ));
    }

    #[test]
    fn geodesic_dist_identity_of_indiscernibles() {
        let x = ball(&[0.2, 0.7]);
        assert_eq!(geodesic_dist(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn geodesic_dist_from_origin_closed_form() {
        let origin = ball(&[0.0, 0.0]);
        let y = ball(&[0.5, 0.0]);
        let d = geodesic_dist(&origin, &y).unwrap();
        assert!((d - 3.0_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn geodesic_dist_collinear_closed_form() {
        let x = ball(&[0.5, 0.0]);
        let y = ball(&[-0.5, 0.0]);
        let d = geodesic_dist(&x, &y).unwrap();
        assert!((d - 2.0 * 0.8_f64.atanh()).abs() < 1e-9);
    }

    #[test]
    fn mobius_matvec_scalar_doubling() {
        let x =
            BallPoint::new(vec![0.3], Curvature::hyperbolic(-1.0).unwrap(), DEFAULT_XI).unwrap();
        let w = Mat::new(1, 1, vec![2.0]);
        let out = mobius_matvec(&w, &x).unwrap();
        // tanh(2·atanh 0.3) computed through the 1-D addition oracle
        let want = oracles::mobius_1d_reference(0.3, 0.3, -1.0);
        assert!(!out.degenerate);
        assert!((out.point.coords()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn mobius_matvec_identity_fixes_points() {
        let x = ball(&[0.2, -0.1]);
        let w = Mat::identity(2);
        let out = mobius_matvec(&w, &x).unwrap();
        assert!((out.point.coords()[0] - 0.2).abs() < 1e-12);
        assert!((out.point.coords()[1] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn mobius_matvec_origin_maps_to_origin() {
        let x = ball(&[0.0, 0.0]);
        let w = Mat::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let out = mobius_matvec(&w, &x).unwrap();
        assert_eq!(out.point.coords(), &[0.0, 0.0, 0.0]);
        assert!(!out.degenerate);
    }

    #[test]
    fn mobius_matvec_flags_rank_deficiency() {
        let x = ball(&[0.0, 0.3]);
        // W annihilates the second coordinate
        let w = Mat::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]);
        let out = mobius_matvec(&w, &x).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.point.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn conformal_factor_origin_and_midpoint() {
        assert_eq!(conformal_factor(&ball(&[0.0, 0.0])).unwrap(), 1.0);
        let lam = conformal_factor(&ball(&[0.5, 0.0])).unwrap();
        assert!((lam - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn conformal_factor_singular_at_unit_norm() {
        // norm² = 1 with κ = -1 zeroes the denominator
        let p = BallPoint::new(
            vec![1.0, 0.0],
            Curvature::hyperbolic(-1.0).unwrap(),
            DEFAULT_XI,
        )
        .unwrap();
        assert!(matches!(
            conformal_factor(&p),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn seeded_metric_axioms_hold() {
        for &kappa in &[-1.0, -0.01] {
            let pts = oracles::sample_ball_points(7, 300, 3, kappa, DEFAULT_XI);
            for tri in pts.chunks_exact(3) {
                let (x, y, z) = (&tri[0], &tri[1], &tri[2]);
                let dxy = geodesic_dist(x, y).unwrap();
                let dyx = geodesic_dist(y, x).unwrap();
                assert!((dxy - dyx).abs() < 1e-9);
                assert!(geodesic_dist(x, x).unwrap() <= 1e-9);
                let dxz = geodesic_dist(x, z).unwrap();
                let dyz = geodesic_dist(y, z).unwrap();
                assert!(dxz <= dxy + dyz + 1e-9);
            }
        }
    }

    #[test]
    fn seeded_mobius_group_identities_hold() {
        for &kappa in &[-1.0, -0.01] {
            let pts = oracles::sample_ball_points(11, 200, 4, kappa, DEFAULT_XI);
            for pair in pts.chunks_exact(2) {
                let (x, y) = (&pair[0], &pair[1]);
                let origin = ball_clip(&vec![0.0; x.dim()], x.curvature(), DEFAULT_XI).unwrap();
                let id = mobius_add(&origin, y).unwrap();
                for (a, b) in id.coords().iter().zip(y.coords()) {
                    assert!((a - b).abs() < 1e-12);
                }
                let neg = BallPoint::new(
                    x.coords().iter().map(|v| -v).collect(),
                    x.curvature(),
                    x.xi(),
                )
                .unwrap();
                let zero = mobius_add(&neg, x).unwrap();
                for c in zero.coords() {
                    assert!(c.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn seeded_matvec_identity_is_identity() {
        let pts = oracles::sample_ball_points(13, 1000, 5, -1.0, DEFAULT_XI);
        let w = Mat::identity(5);
        for p in &pts {
            let out = mobius_matvec(&w, p).unwrap();
            for (a, b) in out.point.coords().iter().zip(p.coords()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
