//! Threshold-free anomaly/OOD evaluation metrics.
//!
//! Scores follow the convention "higher = more anomalous"; anomalous
//! entries are the positive class. Thresholds classify `score ≥ τ` as
//! positive and are enumerated at every distinct score plus `+∞`.
//!
//! The fast implementations here are checked against the brute-force
//! reference implementations in [`crate::oracles`]; both sides divide the
//! same integer counts, so agreement is exact rather than approximate.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::cast;

/// One scored sample with its ground-truth tag.
#[derive(Clone, Debug)]
pub struct ScoreEntry<F> {
    pub id: String,
    pub is_anomalous: bool,
    pub score: F,
}

/// A set of scored samples covering both classes.
#[derive(Clone, Debug)]
pub struct ScoreSet<F> {
    entries: Vec<ScoreEntry<F>>,
}

impl<F: Float> ScoreSet<F> {
    pub fn new(entries: Vec<ScoreEntry<F>>) -> Result<Self> {
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::NonFiniteScore { id: e.id.clone() });
            }
        }
        Ok(ScoreSet { entries })
    }

    pub fn entries(&self) -> &[ScoreEntry<F>] {
        &self.entries
    }

    pub fn n_anomalous(&self) -> usize {
        self.entries.iter().filter(|e| e.is_anomalous).count()
    }

    pub fn n_normal(&self) -> usize {
        self.entries.len() - self.n_anomalous()
    }

    pub(crate) fn require_both_classes(&self) -> Result<(usize, usize)> {
        let pos = self.n_anomalous();
        let neg = self.entries.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::OneClassOnly(self.entries.len()));
        }
        Ok((pos, neg))
    }
}

/// Which class counts as positive for the precision-recall curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositiveClass {
    Ood,
    Id,
}

/// How the detection error is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectionErrorMode {
    /// Minimum of `0.5·(1-TPR) + 0.5·FPR` over all thresholds.
    MinOverThresholds,
    /// `0.5·(1-0.95) + 0.5·FPR@95TPR`, anchored at the 95%-TPR operating point.
    AtNinetyFiveTpr,
}

#[derive(Clone, Debug)]
pub struct MetricsReport<F> {
    pub auroc: F,
    pub fpr_at_95_tpr: F,
    pub detection_error: F,
    pub aupr: F,
    pub positive_class: PositiveClass,
    pub detection_error_mode: DetectionErrorMode,
    pub n_id: usize,
    pub n_ood: usize,
}

/// Options for [`compute_metrics`].
#[derive(Clone, Copy, Debug)]
pub struct MetricsOptions {
    pub detection_error_mode: DetectionErrorMode,
    pub aupr_positive: PositiveClass,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            detection_error_mode: DetectionErrorMode::MinOverThresholds,
            aupr_positive: PositiveClass::Ood,
        }
    }
}

/// Sorted view reused by the sweep-based metrics: entries descending by
/// score, grouped at distinct values.
fn descending_groups<F: Float>(s: &ScoreSet<F>) -> Vec<(F, usize, usize)> {
    let mut scored: Vec<(F, bool)> = s
        .entries()
        .iter()
        .map(|e| (e.score, e.is_anomalous))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    let mut groups: Vec<(F, usize, usize)> = Vec::new();
    for (score, anom) in scored {
        match groups.last_mut() {
            Some((v, pos, neg)) if *v == score => {
                if anom {
                    *pos += 1;
                } else {
                    *neg += 1;
                }
            }
            _ => groups.push((score, usize::from(anom), usize::from(!anom))),
        }
    }
    groups
}

/// Area under the ROC curve via rank statistics:
/// `P(score_ood > score_id) + 0.5·P(tie)`.
pub fn auroc<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    let (pos, neg) = s.require_both_classes()?;
    let mut scored: Vec<(F, bool)> = s
        .entries()
        .iter()
        .map(|e| (e.score, e.is_anomalous))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    // midranks over tied blocks; every midrank is an exact half-integer
    let mut rank_sum_pos = F::zero();
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j, average (i+1 + j)/2
        let midrank = cast::<F>((i + 1 + j) as f64) / cast(2.0);
        for e in &scored[i..j] {
            if e.1 {
                rank_sum_pos = rank_sum_pos + midrank;
            }
        }
        i = j;
    }
    let np = cast::<F>(pos as f64);
    let nn = cast::<F>(neg as f64);
    let u = rank_sum_pos - np * (np + F::one()) / cast(2.0);
    Ok(u / (np * nn))
}

/// Minimal FPR among thresholds whose TPR reaches `target_tpr`.
pub fn fpr_at_tpr<F: Float>(s: &ScoreSet<F>, target_tpr: F) -> Result<F> {
    let (pos, neg) = s.require_both_classes()?;
    let np = cast::<F>(pos as f64);
    let nn = cast::<F>(neg as f64);
    let mut best: Option<F> = None;
    // τ = +∞ first: TPR 0, FPR 0
    if F::zero() >= target_tpr {
        best = Some(F::zero());
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (_, gp, gn) in descending_groups(s) {
        tp += gp;
        fp += gn;
        let tpr = cast::<F>(tp as f64) / np;
        if tpr >= target_tpr {
            let fpr = cast::<F>(fp as f64) / nn;
            best = Some(match best {
                Some(b) if b <= fpr => b,
                _ => fpr,
            });
        }
    }
    best.ok_or(Error::BadSpec("target TPR unreachable".into()))
}

pub fn fpr_at_95_tpr<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    fpr_at_tpr(s, cast(0.95))
}

/// Minimal balanced error `0.5·(1-TPR) + 0.5·FPR` over all thresholds.
pub fn detection_error<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    let (pos, neg) = s.require_both_classes()?;
    let np = cast::<F>(pos as f64);
    let nn = cast::<F>(neg as f64);
    let half = cast::<F>(0.5);
    // τ = +∞: TPR 0, FPR 0
    let mut best = half * (F::one() - F::zero()) + half * F::zero();
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (_, gp, gn) in descending_groups(s) {
        tp += gp;
        fp += gn;
        let tpr = cast::<F>(tp as f64) / np;
        let fpr = cast::<F>(fp as f64) / nn;
        let err = half * (F::one() - tpr) + half * fpr;
        if err < best {
            best = err;
        }
    }
    Ok(best)
}

/// Detection error at the 95%-TPR operating point.
pub fn detection_error_at_95<F: Float>(s: &ScoreSet<F>) -> Result<F> {
    let fpr = fpr_at_95_tpr(s)?;
    Ok(cast::<F>(0.025) + fpr / cast(2.0))
}

/// Area under the precision-recall curve by descending-score sweep with
/// step-wise interpolation.
pub fn aupr<F: Float>(s: &ScoreSet<F>, positive: PositiveClass) -> Result<F> {
    s.require_both_classes()?;
    let flipped = oriented(s, positive);
    let pos = flipped.n_anomalous();
    let np = cast::<F>(pos as f64);
    let mut area = F::zero();
    let mut prev_recall = F::zero();
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (_, gp, gn) in descending_groups(&flipped) {
        tp += gp;
        fp += gn;
        let precision = cast::<F>(tp as f64) / cast::<F>((tp + fp) as f64);
        let recall = cast::<F>(tp as f64) / np;
        area = area + (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Reorients a score set so the requested positive class has the higher
/// scores: for `Id`, labels are flipped and scores negated.
fn oriented<F: Float>(s: &ScoreSet<F>, positive: PositiveClass) -> ScoreSet<F> {
    match positive {
        PositiveClass::Ood => s.clone(),
        PositiveClass::Id => ScoreSet {
            entries: s
                .entries()
                .iter()
                .map(|e| ScoreEntry {
                    id: e.id.clone(),
                    is_anomalous: !e.is_anomalous,
                    score: -e.score,
                })
                .collect(),
        },
    }
}

/// All four metrics for one score set.
pub fn compute_metrics<F: Float>(
    s: &ScoreSet<F>,
    opts: &MetricsOptions,
) -> Result<MetricsReport<F>> {
    let (pos, neg) = s.require_both_classes()?;
    let de = match opts.detection_error_mode {
        DetectionErrorMode::MinOverThresholds => detection_error(s)?,
        DetectionErrorMode::AtNinetyFiveTpr => detection_error_at_95(s)?,
    };
    Ok(MetricsReport {
        auroc: auroc(s)?,
        fpr_at_95_tpr: fpr_at_95_tpr(s)?,
        detection_error: de,
        aupr: aupr(s, opts.aupr_positive)?,
        positive_class: opts.aupr_positive,
        detection_error_mode: opts.detection_error_mode,
        n_id: neg,
        n_ood: pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

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
    fn auroc_perfect_separation() {
        assert_eq!(auroc(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
    }

    #[test]
    fn auroc_all_ties_is_half() {
        assert_eq!(auroc(&set(&[0.5, 0.5], &[0.5, 0.5])).unwrap(), 0.5);
    }

    #[test]
    fn auroc_pairwise_example() {
        assert_eq!(auroc(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap(), 0.75);
    }

    #[test]
    fn auroc_rejects_one_class() {
        let s = set(&[0.1], &[]);
        assert!(matches!(auroc(&s), Err(Error::OneClassOnly(_))));
    }

    #[test]
    fn fpr95_examples() {
        assert_eq!(fpr_at_95_tpr(&set(&[0.1, 0.5], &[0.9])).unwrap(), 0.0);
        assert_eq!(fpr_at_95_tpr(&set(&[0.9, 0.9], &[0.9])).unwrap(), 1.0);
        assert_eq!(fpr_at_95_tpr(&set(&[0.0, 0.1], &[0.8, 0.9])).unwrap(), 0.0);
    }

    #[test]
    fn detection_error_examples() {
        assert_eq!(
            detection_error(&set(&[0.0, 0.1], &[0.8, 0.9])).unwrap(),
            0.0
        );
        assert_eq!(
            detection_error(&set(&[0.5, 0.5], &[0.5, 0.5])).unwrap(),
            0.5
        );
        assert_eq!(
            detection_error(&set(&[0.1, 0.4], &[0.3, 0.9])).unwrap(),
            0.25
        );
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(
            aupr(&set(&[0.0, 0.1], &[0.8, 0.9]), PositiveClass::Ood).unwrap(),
            1.0
        );
        // single OOD sample ranked first
        assert_eq!(
            aupr(&set(&[0.1, 0.2, 0.3], &[0.9]), PositiveClass::Ood).unwrap(),
            1.0
        );
        let a = aupr(&set(&[0.1, 0.4], &[0.3, 0.9]), PositiveClass::Ood).unwrap();
        assert!((a - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn matches_oracles_on_seeded_sets() {
        for trial in 0..100u64 {
            let s = oracles::sample_score_set(900 + trial, 3 + (trial as usize * 7) % 198);
            assert_eq!(auroc(&s).unwrap(), oracles::auroc_bruteforce(&s).unwrap());
            assert_eq!(
                fpr_at_95_tpr(&s).unwrap(),
                oracles::fpr_at_tpr_scan(&s, 0.95).unwrap()
            );
            assert_eq!(
                detection_error(&s).unwrap(),
                oracles::detection_error_scan(&s).unwrap()
            );
            assert_eq!(
                aupr(&s, PositiveClass::Ood).unwrap(),
                oracles::aupr_sweep(&s).unwrap()
            );
        }
    }

    #[test]
    fn invariant_under_monotone_transforms() {
        for trial in 0..100u64 {
            let s = oracles::sample_score_set(4200 + trial, 5 + (trial as usize * 3) % 120);
            let tanh_s = transform(&s, |v| v.tanh());
            let affine_s = transform(&s, |v| 2.0 * v + 3.0);
            for t in [&tanh_s, &affine_s] {
                assert_eq!(auroc(&s).unwrap(), auroc(t).unwrap());
                assert_eq!(fpr_at_95_tpr(&s).unwrap(), fpr_at_95_tpr(t).unwrap());
                assert_eq!(detection_error(&s).unwrap(), detection_error(t).unwrap());
                assert_eq!(
                    aupr(&s, PositiveClass::Ood).unwrap(),
                    aupr(t, PositiveClass::Ood).unwrap()
                );
            }
        }
    }

    #[test]
    fn auroc_flip_symmetry() {
        for trial in 0..20u64 {
            let s = oracles::sample_score_set(77 + trial, 40);
            let flipped = ScoreSet::new(
                s.entries()
                    .iter()
                    .map(|e| ScoreEntry {
                        id: e.id.clone(),
                        is_anomalous: !e.is_anomalous,
                        score: -e.score,
                    })
                    .collect(),
            )
            .unwrap();
            assert_eq!(auroc(&s).unwrap(), auroc(&flipped).unwrap());
        }
    }

    #[test]
    fn random_scores_near_half() {
        let s = oracles::sample_balanced_random_scores(31, 2000);
        let a = auroc(&s).unwrap();
        assert!((0.45..=0.55).contains(&a), "auroc {a}");
        let p = aupr(&s, PositiveClass::Ood).unwrap();
        assert!((0.45..=0.55).contains(&p), "aupr {p}");
    }

    #[test]
    fn detection_error_at_95_formula() {
        let s = set(&[0.1, 0.4], &[0.3, 0.9]);
        let fpr = fpr_at_95_tpr(&s).unwrap();
        assert_eq!(detection_error_at_95(&s).unwrap(), 0.025 + fpr / 2.0);
    }

    #[test]
    fn aupr_positive_id_reverses_orientation() {
        // ID on top when scores are negated: perfect for the ID class
        let s = set(&[0.1, 0.2], &[0.8, 0.9]);
        assert_eq!(aupr(&s, PositiveClass::Id).unwrap(), 1.0);
    }

    fn transform(s: &ScoreSet<f64>, f: impl Fn(f64) -> f64) -> ScoreSet<f64> {
        ScoreSet::new(
            s.entries()
                .iter()
                .map(|e| ScoreEntry {
                    id: e.id.clone(),
                    is_anomalous: e.is_anomalous,
                    score: f(e.score),
                })
                .collect(),
        )
        .unwrap()
    }
}
