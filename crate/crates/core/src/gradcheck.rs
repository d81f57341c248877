//! Named gradient checks: reverse-mode versus central differences for the
//! classifier losses and the Möbius composites.
//!
//! Each check optimizes nothing; it draws seeded parameter-and-input
//! points, rejects any draw with an intermediate within `1e-3` of a clamp
//! or clip boundary (finite differences are invalid across kinks), and
//! compares gradients on at least 50 coordinates per point.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, ScalarLoss};
use crate::heads::{angular_logits_k, euclidean_logits_k, mlr_logits_k};
use crate::manifold::{ball_clip_k, geodesic_dist_k, mobius_matvec_k, sphere_project_k};
use crate::scalar::{cross_entropy_from_logits, norm_sq, Scalar};
use crate::Real;

/// Margin kept between intermediates and clamp/clip boundaries.
const KINK_MARGIN: Real = 1e-3;

/// Acceptance threshold on the max relative error.
pub const GRAD_TOLERANCE: Real = 1e-4;

/// Checked coordinates per point.
const COORDS: usize = 50;

/// Seeded points per check.
const POINTS: usize = 10;

/// Outcome of one named check over all its points.
#[derive(Clone, Debug)]
pub struct NamedCheck {
    pub name: &'static str,
    pub max_rel_err: Real,
    pub points: usize,
    pub coords_per_point: usize,
}

impl NamedCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= GRAD_TOLERANCE
    }
}

// --- angular cross-entropy through the sphere projection --------------------

struct AngularCe {
    classes: usize,
    dim: usize,
    batch: usize,
    kappa: Real,
}

impl AngularCe {
    fn split<'a, S>(&self, theta: &'a [S]) -> (&'a [S], &'a [S]) {
        theta.split_at(self.classes * self.dim)
    }
}

impl ScalarLoss<Real> for AngularCe {
    fn eval<S: Scalar<F = Real>>(&self, theta: &[S]) -> S {
        let (protos, inputs) = self.split(theta);
        let per: Vec<S> = (0..self.batch)
            .map(|i| {
                let x = &inputs[i * self.dim..(i + 1) * self.dim];
                let e_s = sphere_project_k(x, self.kappa);
                let logits = angular_logits_k(&e_s, protos, self.classes, self.dim);
                cross_entropy_from_logits(&logits, i % self.classes)
            })
            .collect();
        crate::scalar::mean(&per)
    }

    fn near_kink(&self, theta: &[Real]) -> bool {
        let (_, inputs) = self.split(theta);
        inputs
            .chunks(self.dim)
            .any(|x| norm_sq(x).sqrt() < KINK_MARGIN)
    }
}

// --- hyperbolic MLR cross-entropy through the ball clip ----------------------

struct MlrCe {
    classes: usize,
    dim: usize,
    batch: usize,
    kappa: Real,
    xi: Real,
}

impl MlrCe {
    fn split<'a, S>(&self, theta: &'a [S]) -> (&'a [S], &'a [S], &'a [S]) {
        let (offsets, rest) = theta.split_at(self.classes * self.dim);
        let (normals, inputs) = rest.split_at(self.classes * self.dim);
        (offsets, normals, inputs)
    }
}

impl ScalarLoss<Real> for MlrCe {
    fn eval<S: Scalar<F = Real>>(&self, theta: &[S]) -> S {
        let (offsets, normals, inputs) = self.split(theta);
        let per: Vec<S> = (0..self.batch)
            .map(|i| {
                let x = &inputs[i * self.dim..(i + 1) * self.dim];
                let e_h = ball_clip_k(x, self.kappa.abs(), self.xi);
                let (logits, _) =
                    mlr_logits_k(&e_h, offsets, normals, self.classes, self.dim, self.kappa);
                cross_entropy_from_logits(&logits, i % self.classes)
            })
            .collect();
        crate::scalar::mean(&per)
    }

    fn near_kink(&self, theta: &[Real]) -> bool {
        let (offsets, normals, inputs) = self.split(theta);
        let a = self.kappa.abs();
        let radius = 1.0 / a;
        for x in inputs.chunks(self.dim) {
            let n = norm_sq(x).sqrt();
            if (n - radius).abs() < KINK_MARGIN {
                return true;
            }
            let e_h = ball_clip_k(x, a, self.xi);
            if 1.0 + self.kappa * norm_sq(&e_h) < KINK_MARGIN {
                return true;
            }
            let (_, diag) =
                mlr_logits_k(&e_h, offsets, normals, self.classes, self.dim, self.kappa);
            if diag.min_inner_denom_abs < KINK_MARGIN {
                return true;
            }
        }
        normals
            .chunks(self.dim)
            .any(|w| norm_sq(w).sqrt() < KINK_MARGIN)
    }
}

// --- Euclidean cross-entropy -------------------------------------------------

struct EuclidCe {
    classes: usize,
    dim: usize,
    batch: usize,
}

impl ScalarLoss<Real> for EuclidCe {
    fn eval<S: Scalar<F = Real>>(&self, theta: &[S]) -> S {
        let (w, rest) = theta.split_at(self.classes * self.dim);
        let (b, inputs) = rest.split_at(self.classes);
        let per: Vec<S> = (0..self.batch)
            .map(|i| {
                let x = &inputs[i * self.dim..(i + 1) * self.dim];
                let logits = euclidean_logits_k(x, w, b, self.classes, self.dim);
                cross_entropy_from_logits(&logits, i % self.classes)
            })
            .collect();
        crate::scalar::mean(&per)
    }
}

// --- hyperbolic linear map composite -----------------------------------------

struct MatvecComposite {
    rows: usize,
    cols: usize,
    kappa: Real,
    xi: Real,
}

impl ScalarLoss<Real> for MatvecComposite {
    fn eval<S: Scalar<F = Real>>(&self, theta: &[S]) -> S {
        let (w, x) = theta.split_at(self.rows * self.cols);
        let (y, _) = mobius_matvec_k(w, self.rows, self.cols, x, self.kappa.abs(), self.xi);
        norm_sq(&y)
    }

    fn near_kink(&self, theta: &[Real]) -> bool {
        let (w, x) = theta.split_at(self.rows * self.cols);
        let a = self.kappa.abs();
        let xn = norm_sq(x).sqrt();
        if xn < KINK_MARGIN || (xn - 1.0 / a).abs() < KINK_MARGIN {
            return true;
        }
        let wx: Vec<Real> = (0..self.rows)
            .map(|i| Real::dot(&w[i * self.cols..(i + 1) * self.cols], x))
            .collect();
        if norm_sq(&wx).sqrt() < KINK_MARGIN {
            return true;
        }
        // output must stay clear of the re-clip radius
        let (y, _) = mobius_matvec_k(w, self.rows, self.cols, x, a, self.xi);
        (norm_sq(&y).sqrt() - 1.0 / a).abs() < KINK_MARGIN
    }
}

// --- geodesic distance composite ----------------------------------------------

struct GeodesicComposite {
    dim: usize,
    kappa: Real,
}

impl ScalarLoss<Real> for GeodesicComposite {
    fn eval<S: Scalar<F = Real>>(&self, theta: &[S]) -> S {
        let (x, y) = theta.split_at(self.dim);
        geodesic_dist_k(x, y, self.kappa.abs())
    }

    fn near_kink(&self, theta: &[Real]) -> bool {
        let (x, y) = theta.split_at(self.dim);
        let diff: Vec<Real> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        norm_sq(&diff).sqrt() < KINK_MARGIN
    }
}

// --- driver -------------------------------------------------------------------

fn run_check<L: ScalarLoss<Real>>(
    name: &'static str,
    loss: &L,
    theta_len: usize,
    draw: impl Fn(&mut ChaCha8Rng) -> Vec<Real>,
    seed: u64,
) -> NamedCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: Real = 0.0;
    let mut produced = 0usize;
    while produced < POINTS {
        let theta = draw(&mut rng);
        assert_eq!(theta.len(), theta_len);
        if loss.near_kink(&theta) {
            continue;
        }
        let report: GradCheckReport<Real> =
            grad_check(loss, &theta, seed ^ produced as u64, 1e-5, COORDS);
        if report.max_rel_err > max_rel {
            max_rel = report.max_rel_err;
        }
        produced += 1;
    }
    NamedCheck {
        name,
        max_rel_err: max_rel,
        points: POINTS,
        coords_per_point: COORDS,
    }
}

/// Runs every named check with one base seed.
pub fn run_all(seed: u64) -> Vec<NamedCheck> {
    let mut out = Vec::new();

    let (classes, dim, batch) = (5usize, 6usize, 4usize);
    let angular = AngularCe {
        classes,
        dim,
        batch,
        kappa: 1.0,
    };
    out.push(run_check(
        "angular_loss",
        &angular,
        classes * dim + batch * dim,
        |rng| {
            let mut theta = Vec::new();
            for _ in 0..classes * dim {
                theta.push(rng.random_range(-1.0..1.0));
            }
            for _ in 0..batch * dim {
                theta.push(rng.random_range(-1.5..1.5));
            }
            theta
        },
        seed,
    ));

    let mlr = MlrCe {
        classes,
        dim,
        batch,
        kappa: -1.0,
        xi: crate::manifold::DEFAULT_XI,
    };
    out.push(run_check(
        "hyperbolic_mlr_loss",
        &mlr,
        2 * classes * dim + batch * dim,
        |rng| {
            let mut theta = Vec::new();
            // offsets: well inside the ball
            for _ in 0..classes * dim {
                theta.push(rng.random_range(-0.15..0.15));
            }
            // normals: order-one scale
            for _ in 0..classes * dim {
                theta.push(rng.random_range(-0.8..0.8));
            }
            // inputs: clip left inactive
            for _ in 0..batch * dim {
                theta.push(rng.random_range(-0.25..0.25));
            }
            theta
        },
        seed ^ 0xA5A5,
    ));

    let euclid = EuclidCe {
        classes,
        dim,
        batch,
    };
    out.push(run_check(
        "euclidean_loss",
        &euclid,
        classes * dim + classes + batch * dim,
        |rng| {
            (0..classes * dim + classes + batch * dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        },
        seed ^ 0x5A5A,
    ));

    let (rows, cols) = (8usize, 8usize);
    let matvec = MatvecComposite {
        rows,
        cols,
        kappa: -1.0,
        xi: crate::manifold::DEFAULT_XI,
    };
    out.push(run_check(
        "mobius_matvec",
        &matvec,
        rows * cols + cols,
        |rng| {
            let mut theta = Vec::new();
            for _ in 0..rows * cols {
                theta.push(rng.random_range(-0.4..0.4));
            }
            for _ in 0..cols {
                theta.push(rng.random_range(-0.2..0.2));
            }
            theta
        },
        seed ^ 0x0F0F,
    ));

    let geo = GeodesicComposite {
        dim: 25,
        kappa: -1.0,
    };
    out.push(run_check(
        "geodesic_dist",
        &geo,
        50,
        |rng| (0..50).map(|_| rng.random_range(-0.12..0.12)).collect(),
        seed ^ 0xF0F0,
    ));

    out
}
