//! Curved-geometry anomaly recognition.
//!
//! Embeddings live in spherical, hyperbolic (Poincaré ball) or
//! mixed-curvature product spaces; classifier heads operate natively in
//! each geometry, and geometric scores derived from the curved embeddings
//! are normalized into anomaly scores for OOD detection.
//!
//! Layout:
//!
//! * [`manifold`] — projections, Möbius algebra, geodesic distance;
//! * [`heads`] — angular, hyperbolic-MLR and Euclidean classifiers;
//! * [`autodiff`] — scalar tape, SGD with constraint re-projection,
//!   gradient checking;
//! * [`models`] — architectures, training loop, serialization;
//! * [`scoring`] — geometric and anomaly scores;
//! * [`metrics`] — AUROC, FPR@95TPR, detection error, AUPR;
//! * [`data`] — synthetic hierarchy generator and embedding files;
//! * [`oracles`] — brute-force references used by the test suites;
//! * [`config`] / [`cli`] — the `curvednet` command-line front end.
//!
//! Core numerics are generic over the scalar: kernels accept `f32`/`f64`
//! or tape variables through the [`scalar::Scalar`] trait. The pipeline
//! itself runs in double precision ([`Real`]).

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod models;
pub mod oracles;
pub mod scalar;
pub mod scoring;

/// The pipeline's carrier float type.
pub type Real = f64;

/// Ball point in pipeline precision.
pub type BallPoint = manifold::BallPoint<Real>;
/// Sphere point in pipeline precision.
pub type SpherePoint = manifold::SpherePoint<Real>;
/// Curvature in pipeline precision.
pub type Curvature = manifold::Curvature<Real>;
/// Score set in pipeline precision.
pub type ScoreSet = metrics::ScoreSet<Real>;

pub use error::{Error, Result};
