//! Brute-force reference implementations and seeded samplers for tests.
//!
//! Everything here is written directly from the defining formula, with no
//! code shared with the fast implementations it checks. The finite
//! difference helper doubles as the numeric side of the gradient checker,
//! which is why this module is part of the library rather than test-only.

use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::manifold::{BallPoint, Curvature};
use crate::metrics::{ScoreEntry, ScoreSet};
use crate::scalar::cast;

/// 1-D Möbius addition `(a + b) / (1 + |κ|ab)` for collinear points.
pub fn mobius_1d_reference(a: f64, b: f64, kappa: f64) -> f64 {
    assert!(kappa < 0.0);
    (a + b) / (1.0 + kappa.abs() * a * b)
}

/// AUROC by literal pair counting, half credit per tie.
pub fn auroc_bruteforce<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    s.require_both_classes()?;
    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    let mut pairs: u64 = 0;
    for a in s.entries().iter().filter(|e| e.is_anomalous) {
        for b in s.entries().iter().filter(|e| !e.is_anomalous) {
            pairs += 1;
            if a.score > b.score {
                wins += 1;
            } else if a.score == b.score {
                ties += 1;
            }
        }
    }
    let numer = cast::<F>(wins as f64) + cast::<F>(0.5) * cast::<F>(ties as f64);
    Ok(numer / cast(pairs as f64))
}

/// One operating point of the threshold sweep.
#[derive(Clone, Debug)]
pub struct ScanRow<F> {
    /// Threshold; `+∞` means "classify nothing as positive".
    pub tau: F,
    pub tpr: F,
    pub fpr: F,
}

/// Full `(τ, TPR, FPR)` table: `+∞` first, then each distinct score in
/// descending order, recounting from scratch at every threshold.
pub fn threshold_scan<F: Float>(s: &ScoreSet<F>) -> Result<Vec<ScanRow<F>>> {
    let (pos, neg) = s.require_both_classes()?;
    let np = cast::<F>(pos as f64);
    let nn = cast::<F>(neg as f64);

    let mut taus: Vec<F> = s.entries().iter().map(|e| e.score).collect();
    taus.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    taus.dedup_by(|a, b| a == b);

    let mut rows = vec![ScanRow {
        tau: F::infinity(),
        tpr: F::zero(),
        fpr: F::zero(),
    }];
    for tau in taus {
        let tp = s
            .entries()
            .iter()
            .filter(|e| e.is_anomalous && e.score >= tau)
            .count();
        let fp = s
            .entries()
            .iter()
            .filter(|e| !e.is_anomalous && e.score >= tau)
            .count();
        rows.push(ScanRow {
            tau,
            tpr: cast::<F>(tp as f64) / np,
            fpr: cast::<F>(fp as f64) / nn,
        });
    }
    Ok(rows)
}

/// Minimal FPR among scanned thresholds reaching the target TPR.
pub fn fpr_at_tpr_scan<F: Float>(s: &ScoreSet<F>, target_tpr: F) -> Result<F> {
    let rows = threshold_scan(s)?;
    let mut best: Option<F> = None;
    for row in rows {
        if row.tpr >= target_tpr {
            best = Some(match best {
                Some(b) if b <= row.fpr => b,
                _ => row.fpr,
            });
        }
    }
    Ok(best.expect("full sweep reaches TPR 1"))
}

/// Exhaustive-scan detection error `min_τ 0.5·(1-TPR) + 0.5·FPR`.
pub fn detection_error_scan<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    let rows = threshold_scan(s)?;
    let half = cast::<F>(0.5);
    let mut best = F::infinity();
    for row in rows {
        let err = half * (F::one() - row.tpr) + half * row.fpr;
        if err < best {
            best = err;
        }
    }
    Ok(best)
}

/// AUPR (positives = anomalous) by descending sweep over distinct scores,
/// recounting precision and recall from scratch at each threshold.
pub fn aupr_sweep<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    let (pos, _) = s.require_both_classes()?;
    let np = cast::<F>(pos as f64);

    let mut taus: Vec<F> = s.entries().iter().map(|e| e.score).collect();
    taus.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    taus.dedup_by(|a, b| a == b);

    let mut area = F::zero();
    let mut prev_recall = F::zero();
    for tau in taus {
        let tp = s
            .entries()
            .iter()
            .filter(|e| e.is_anomalous && e.score >= tau)
            .count();
        let predicted = s.entries().iter().filter(|e| e.score >= tau).count();
        let precision = cast::<F>(tp as f64) / cast::<F>(predicted as f64);
        let recall = cast::<F>(tp as f64) / np;
        area = area + (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Central difference `(f(x+εe_i) - f(x-εe_i)) / 2ε` along coordinate `i`.
pub fn central_difference<F: Float>(f: &dyn Fn(&[F]) -> F, x: &[F], i: usize, eps: F) -> F {
    let mut plus = x.to_vec();
    plus[i] = plus[i] + eps;
    let mut minus = x.to_vec();
    minus[i] = minus[i] - eps;
    (f(&plus) - f(&minus)) / (cast::<F>(2.0) * eps)
}

// ---------------------------------------------------------------------------
// Seeded samplers shared by the property suites
// ---------------------------------------------------------------------------

/// Seeded points in the ball of curvature `kappa < 0`.
///
/// Points are drawn inside radius `0.9/√|κ|`, where atanh arguments stay
/// strictly below one and the geodesic distance satisfies the metric
/// axioms; for `|κ| < 1` that region is a strict subset of the clip
/// radius `1/|κ|`.
pub fn sample_ball_points(
    seed: u64,
    n: usize,
    dim: usize,
    kappa: f64,
    xi: f64,
) -> Vec<BallPoint<f64>> {
    let curvature = Curvature::hyperbolic(kappa).expect("negative curvature");
    let max_radius = 0.9 / kappa.abs().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm < 1e-12 {
            continue;
        }
        let u: f64 = rng.random_range(0.0..1.0);
        let radius = max_radius * u.powf(1.0 / dim as f64);
        let coords = dir.iter().map(|v| v / nrm * radius).collect();
        out.push(BallPoint::new(coords, curvature, xi).expect("inside ball"));
    }
    out
}

/// Seeded score set with deliberate ties: scores are quantized to a small
/// grid so threshold handling gets exercised.
pub fn sample_score_set(seed: u64, n: usize) -> ScoreSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n.max(2));
    // guarantee both classes
    entries.push(ScoreEntry {
        id: "seed-id".into(),
        is_anomalous: false,
        score: quantize(rng.random_range(0.0..1.0)),
    });
    entries.push(ScoreEntry {
        id: "seed-ood".into(),
        is_anomalous: true,
        score: quantize(rng.random_range(0.0..1.0)),
    });
    for i in 0..n.saturating_sub(2) {
        entries.push(ScoreEntry {
            id: format!("s{i}"),
            is_anomalous: rng.random_range(0.0..1.0) < 0.4,
            score: quantize(rng.random_range(0.0..1.0)),
        });
    }
    ScoreSet::new(entries).expect("finite scores")
}

/// Balanced score set with continuous random scores for both classes.
pub fn sample_balanced_random_scores(seed: u64, n: usize) -> ScoreSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| ScoreEntry {
            id: format!("r{i}"),
            is_anomalous: i % 2 == 0,
            score: rng.random_range(0.0..1.0),
        })
        .collect();
    ScoreSet::new(entries).expect("finite scores")
}

fn quantize(v: f64) -> f64 {
    (v * 16.0).round() / 16.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(id_scores: &[f64], ood_scores: &[f64]) -> ScoreSet<f64> {
        let mut entries = Vec::new();
        for (i, &s) in id_scores.iter().enumerate() {
            entries.push(ScoreEntry {
                id: format!("id{i}"),
                is_anomalous: false,
                score: s,
            });
        }
        for (i, &s) in ood_scores.iter().enumerate() {
            entries.push(ScoreEntry {
                id: format!("ood{i}"),
                is_anomalous: true,
                score: s,
            });
        }
        ScoreSet::new(entries).unwrap()
    }

    #[test]
    fn mobius_reference_values() {
        assert!((mobius_1d_reference(0.3, 0.4, -1.0) - 0.625).abs() < 1e-15);
        assert_eq!(mobius_1d_reference(0.0, 0.7, -1.0), 0.7);
        assert_eq!(mobius_1d_reference(-0.4, 0.4, -1.0), 0.0);
    }

    #[test]
    fn bruteforce_auroc_examples() {
        assert_eq!(
            auroc_bruteforce(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap(),
            1.0
        );
        assert_eq!(
            auroc_bruteforce(&set(&[0.5, 0.5], &[0.5, 0.5])).unwrap(),
            0.5
        );
        assert_eq!(
            auroc_bruteforce(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap(),
            0.75
        );
        // one sample per class still works
        assert_eq!(auroc_bruteforce(&set(&[0.1], &[0.9])).unwrap(), 1.0);
    }

    #[test]
    fn scan_has_one_row_per_distinct_score_plus_infinity() {
        let rows = threshold_scan(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows[0].tau.is_infinite());
        // TPR and FPR are non-decreasing as τ descends
        for w in rows.windows(2) {
            assert!(w[1].tpr >= w[0].tpr);
            assert!(w[1].fpr >= w[0].fpr);
        }
    }

    #[test]
    fn scan_reproduces_detection_error_example() {
        assert_eq!(
            detection_error_scan(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap(),
            0.25
        );
    }

    #[test]
    fn sweep_reproduces_aupr_example() {
        let a = aupr_sweep(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap();
        assert!((a - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn central_difference_of_square() {
        let f = |x: &[f64]| x[0] * x[0];
        let d = central_difference(&f, &[3.0], 0, 1e-6);
        assert!((d - 6.0).abs() < 1e-6);
    }

    #[test]
    fn ball_sampler_is_deterministic_and_in_range() {
        let a = sample_ball_points(5, 50, 4, -0.01, 1e-5);
        let b = sample_ball_points(5, 50, 4, -0.01, 1e-5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.coords(), y.coords());
        }
        for p in &a {
            assert!(p.norm() <= 0.9 / 0.1 + 1e-12);
        }
    }
}
