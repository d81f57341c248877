//! Scalar abstraction shared by plain floats and tape variables.
//!
//! The geometric kernels (Möbius algebra, projections, classifier heads)
//! are written once against [`Scalar`] and evaluated either with `f32`/`f64`
//! for inference, or with [`crate::autodiff::Var`] to record a tape for
//! reverse-mode differentiation. Branch decisions (clipping, clamping,
//! numeric guards) always read the *current value* via [`Scalar::val`], so
//! both evaluation modes take identical code paths.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;

/// A real-number-like value the geometric kernels can compute with.
pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// The carrier float type (`f32` or `f64`).
    type F: Float + Debug;

    /// Current numeric value, used for branching and guards.
    fn val(&self) -> Self::F;

    /// A constant associated with the same tape (if any) as `self`.
    fn lit(&self, v: Self::F) -> Self;

    fn tanh(&self) -> Self;
    fn atanh(&self) -> Self;
    fn asinh(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;

    /// Inner product. Tape scalars override this with a fused node.
    fn dot(xs: &[Self], ys: &[Self]) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(!xs.is_empty());
        let mut acc = xs[0].clone() * ys[0].clone();
        for (x, y) in xs[1..].iter().zip(&ys[1..]) {
            acc = acc + x.clone() * y.clone();
        }
        acc
    }

    /// Sum of a non-empty slice. Tape scalars override this with a fused node.
    fn sum(xs: &[Self]) -> Self {
        assert!(!xs.is_empty());
        let mut acc = xs[0].clone();
        for x in &xs[1..] {
            acc = acc + x.clone();
        }
        acc
    }
}

/// Floats that are their own [`Scalar`] carrier: the bound for typed
/// operations that run the generic kernels on plain values.
pub trait FloatScalar: Float + Scalar<F = Self> {}

impl<T: Float + Scalar<F = T>> FloatScalar for T {}

macro_rules! impl_scalar_for_float {
    ($t:ty) => {
        impl Scalar for $t {
            type F = $t;

            #[inline]
            fn val(&self) -> $t {
                *self
            }

            #[inline]
            fn lit(&self, v: $t) -> $t {
                v
            }

            #[inline]
            fn tanh(&self) -> $t {
                <$t>::tanh(*self)
            }

            #[inline]
            fn atanh(&self) -> $t {
                <$t>::atanh(*self)
            }

            #[inline]
            fn asinh(&self) -> $t {
                <$t>::asinh(*self)
            }

            #[inline]
            fn exp(&self) -> $t {
                <$t>::exp(*self)
            }

            #[inline]
            fn ln(&self) -> $t {
                <$t>::ln(*self)
            }

            #[inline]
            fn sqrt(&self) -> $t {
                <$t>::sqrt(*self)
            }
        }
    };
}

impl_scalar_for_float!(f32);
impl_scalar_for_float!(f64);

/// Cast an `f64` literal into the carrier float of a kernel.
#[inline]
pub fn cast<F: Float>(v: f64) -> F {
    F::from(v).expect("literal representable in carrier float")
}

/// Squared Euclidean norm.
pub fn norm_sq<S: Scalar>(xs: &[S]) -> S {
    S::dot(xs, xs)
}

/// Euclidean norm. Undefined gradient at the origin; callers guard.
pub fn norm<S: Scalar>(xs: &[S]) -> S {
    norm_sq(xs).sqrt()
}

/// Arithmetic mean of a non-empty slice.
pub fn mean<S: Scalar>(xs: &[S]) -> S {
    let n = cast::<S::F>(xs.len() as f64);
    S::sum(xs) / xs[0].lit(n)
}

/// Rectifier: passes positives through, zeroes the rest.
pub fn relu<S: Scalar>(x: S) -> S {
    if x.val() > cast(0.0) {
        x
    } else {
        x.lit(cast(0.0))
    }
}

/// Clamp the magnitude of `x` to `limit`, detaching when the clamp engages.
pub fn clamp_magnitude<S: Scalar>(x: S, limit: S::F) -> S {
    let v = x.val();
    if v > limit {
        x.lit(limit)
    } else if v < -limit {
        x.lit(-limit)
    } else {
        x
    }
}

/// Numerically stable log-sum-exp with a detached max shift.
///
/// Subtracting a constant leaves both the value and the gradient of
/// log-sum-exp unchanged, so the shift does not need to be differentiated.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    assert!(!xs.is_empty());
    let m = xs
        .iter()
        .map(|x| x.val())
        .fold(cast(f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    let shift = xs[0].lit(m);
    let exps: Vec<S> = xs
        .iter()
        .map(|x| (x.clone() - shift.clone()).exp())
        .collect();
    S::sum(&exps).ln() + shift
}

/// Shift-stabilized softmax.
pub fn softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    assert!(!xs.is_empty());
    let m = xs
        .iter()
        .map(|x| x.val())
        .fold(cast(f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    let shift = xs[0].lit(m);
    let exps: Vec<S> = xs
        .iter()
        .map(|x| (x.clone() - shift.clone()).exp())
        .collect();
    let total = S::sum(&exps);
    exps.into_iter().map(|e| e / total.clone()).collect()
}

/// Cross-entropy of a label against raw logits: `lse(logits) - logits[label]`.
pub fn cross_entropy_from_logits<S: Scalar>(logits: &[S], label: usize) -> S {
    log_sum_exp(logits) - logits[label].clone()
}

/// Index of the largest value.
pub fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if x.val() > xs[best].val() {
            best = i;
        }
    }
    best
}
