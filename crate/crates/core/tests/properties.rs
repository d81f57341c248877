//! Property tests for the algebraic invariants.

use proptest::prelude::*;

use curvednet::heads::softmax;
use curvednet::manifold::{ball_clip, geodesic_dist, mobius_add, BallPoint, Curvature, DEFAULT_XI};
use curvednet::scoring::{anomaly_score, kl_divergence, GeometricScore, ScoreKind};

/// Coordinates for a point comfortably inside the unit ball.
fn ball_coords(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.6_f64..0.6, dim).prop_map(move |v| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.85 {
            v.iter().map(|x| x * 0.85 / norm).collect()
        } else {
            v
        }
    })
}

fn ball(coords: Vec<f64>) -> BallPoint<f64> {
    BallPoint::new(coords, Curvature::hyperbolic(-1.0).unwrap(), DEFAULT_XI).unwrap()
}

proptest! {
    #[test]
    fn mobius_left_identity(y in ball_coords(3)) {
        let zero = ball(vec![0.0; 3]);
        let y = ball(y);
        let sum = mobius_add(&zero, &y).unwrap();
        for (a, b) in sum.coords().iter().zip(y.coords()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn mobius_left_inverse(x in ball_coords(4)) {
        let p = ball(x.clone());
        let neg = ball(x.iter().map(|v| -v).collect());
        let sum = mobius_add(&neg, &p).unwrap();
        for c in sum.coords() {
            prop_assert!(c.abs() <= 1e-12);
        }
    }

    #[test]
    fn geodesic_symmetry_and_positivity(x in ball_coords(3), y in ball_coords(3)) {
        let (x, y) = (ball(x), ball(y));
        let d_xy = geodesic_dist(&x, &y).unwrap();
        let d_yx = geodesic_dist(&y, &x).unwrap();
        prop_assert!(d_xy >= 0.0);
        prop_assert!((d_xy - d_yx).abs() <= 1e-9);
    }

    #[test]
    fn clip_is_idempotent(x in prop::collection::vec(-20.0_f64..20.0, 3)) {
        let kappa = Curvature::hyperbolic(-1.0).unwrap();
        let once = ball_clip(&x, kappa, DEFAULT_XI).unwrap();
        let twice = ball_clip(once.coords(), kappa, DEFAULT_XI).unwrap();
        prop_assert_eq!(once.coords(), twice.coords());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0_f64..50.0, 1..8)) {
        let conf = softmax(&logits);
        let total: f64 = conf.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(conf.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn kl_is_nonnegative(a in prop::collection::vec(-5.0_f64..5.0, 2..6),
                         b in prop::collection::vec(-5.0_f64..5.0, 2..6)) {
        prop_assume!(a.len() == b.len());
        let p = softmax(&a);
        let q = softmax(&b);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
    }

    #[test]
    fn anomaly_score_strictly_decreasing(z1 in -5.0_f64..20.0, z2 in -5.0_f64..20.0) {
        prop_assume!(z1 < z2 && z2 - z1 > 1e-9 && z2 < 15.0);
        let a1 = anomaly_score(&GeometricScore { value: z1, kind: ScoreKind::ZH });
        let a2 = anomaly_score(&GeometricScore { value: z2, kind: ScoreKind::ZH });
        prop_assert!(a1.value > a2.value, "{} !> {}", a1.value, a2.value);
    }
}
