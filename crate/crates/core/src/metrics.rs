//! Confusion-matrix accumulation and IoU-based evaluation metrics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("class id {id} out of range for {classes} classes")]
    ClassOutOfRange { id: usize, classes: usize },
    #[error("prediction and ground-truth lengths differ: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no points have been scored")]
    Empty,
}

/// C x C count table: `counts[gt][pred]` is the number of points with ground
/// truth `gt` predicted as `pred`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        assert!(classes >= 1, "need at least one class");
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one batch of predictions. Accumulation commutes across calls:
    /// totals are independent of how points are split into batches.
    pub fn accumulate(&mut self, pred: &[usize], gt: &[usize]) -> Result<(), MetricsError> {
        if pred.len() != gt.len() {
            return Err(MetricsError::LengthMismatch { pred: pred.len(), gt: gt.len() });
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if p >= self.classes {
                return Err(MetricsError::ClassOutOfRange { id: p, classes: self.classes });
            }
            if g >= self.classes {
                return Err(MetricsError::ClassOutOfRange { id: g, classes: self.classes });
            }
        }
        for (&p, &g) in pred.iter().zip(gt) {
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }

    /// Elementwise sum, for merging matrices built on parallel shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Per-class intersection-over-union `TP / (TP + FP + FN)`. Classes with
    /// an empty denominator (never seen in ground truth or predictions) give
    /// `None`.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.count(c, c);
                let fp: u64 = (0..self.classes).filter(|&g| g != c).map(|g| self.count(g, c)).sum();
                let fn_: u64 =
                    (0..self.classes).filter(|&p| p != c).map(|p| self.count(c, p)).sum();
                let denom = tp + fp + fn_;
                if denom == 0 {
                    None
                } else {
                    Some(tp as f64 / denom as f64)
                }
            })
            .collect()
    }
}

/// Strict-mode switch for absent classes: exclude them from the mean (the
/// benchmark convention) or count them as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbsentClassPolicy {
    #[default]
    Exclude,
    CountAsZero,
}

/// Mean IoU over classes. Absent classes (no TP, FP, or FN) are excluded
/// from the mean by default.
pub fn miou(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    miou_with_policy(cm, AbsentClassPolicy::Exclude)
}

pub fn miou_with_policy(
    cm: &ConfusionMatrix,
    policy: AbsentClassPolicy,
) -> Result<f64, MetricsError> {
    let ious = cm.per_class_iou();
    let mut total = 0.0;
    let mut n = 0usize;
    for iou in &ious {
        match (iou, policy) {
            (Some(v), _) => {
                total += v;
                n += 1;
            }
            (None, AbsentClassPolicy::CountAsZero) => {
                n += 1;
            }
            (None, AbsentClassPolicy::Exclude) => {}
        }
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(total / n as f64)
}

/// Frequency-weighted IoU: each class's IoU weighted by its ground-truth
/// point frequency.
pub fn fwiou(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let ious = cm.per_class_iou();
    let mut acc = 0.0;
    for (c, iou) in ious.iter().enumerate() {
        let gt_count: u64 = (0..cm.classes()).map(|p| cm.count(c, p)).sum();
        if gt_count == 0 {
            continue;
        }
        let freq = gt_count as f64 / total as f64;
        // A class present in ground truth always has a non-empty denominator.
        acc += freq * iou.expect("gt-present class has IoU");
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_counts(classes: usize, rows: &[&[u64]]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new(classes);
        for (g, row) in rows.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    cm.accumulate(&[p], &[g]).unwrap();
                }
            }
        }
        cm
    }

    #[test]
    fn accumulate_diagonal() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&[0, 1], &[0, 1]).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.count(1, 1), 1);
        assert_eq!(cm.count(0, 1), 0);
        assert_eq!(cm.total(), 2);
    }

    #[test]
    fn accumulate_is_additive_across_calls() {
        let mut split = ConfusionMatrix::new(3);
        split.accumulate(&[0, 1], &[0, 2]).unwrap();
        split.accumulate(&[2, 2], &[2, 1]).unwrap();
        let mut joint = ConfusionMatrix::new(3);
        joint.accumulate(&[0, 1, 2, 2], &[0, 2, 2, 1]).unwrap();
        assert_eq!(split, joint);
    }

    #[test]
    fn accumulate_matches_pairwise_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pred: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
        let gt: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&pred, &gt).unwrap();
        for g in 0..4 {
            for p in 0..4 {
                let want =
                    pred.iter().zip(&gt).filter(|&(&pp, &gg)| pp == p && gg == g).count() as u64;
                assert_eq!(cm.count(g, p), want);
            }
        }
    }

    #[test]
    fn accumulate_rejects_out_of_range() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(matches!(
            cm.accumulate(&[2], &[0]),
            Err(MetricsError::ClassOutOfRange { id: 2, classes: 2 })
        ));
        assert!(cm.accumulate(&[0], &[0, 1]).is_err());
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn miou_perfect_predictions() {
        let cm = from_counts(3, &[&[5, 0, 0], &[0, 7, 0], &[0, 0, 2]]);
        assert_eq!(miou(&cm).unwrap(), 1.0);
        assert_eq!(fwiou(&cm).unwrap(), 1.0);
    }

    #[test]
    fn miou_hand_worked_matrix() {
        // counts[g][p] = [[1, 1], [0, 2]]: IoU_0 = 1/2, IoU_1 = 2/3.
        let cm = from_counts(2, &[&[1, 1], &[0, 2]]);
        assert_abs_diff_eq!(miou(&cm).unwrap(), 7.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn fwiou_hand_worked_matrix() {
        let cm = from_counts(2, &[&[1, 1], &[0, 2]]);
        assert_abs_diff_eq!(fwiou(&cm).unwrap(), 7.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn miou_constant_predictor_on_balanced_classes() {
        // Everything predicted as class 0, ground truth balanced over 2
        // classes: IoU_0 = 0.5, IoU_1 = 0.
        let cm = from_counts(2, &[&[5, 0], &[5, 0]]);
        assert_abs_diff_eq!(miou(&cm).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn fwiou_single_class_dataset() {
        let cm = from_counts(3, &[&[0, 0, 0], &[2, 5, 1], &[0, 0, 0]]);
        let iou1 = cm.per_class_iou()[1].unwrap();
        assert_abs_diff_eq!(fwiou(&cm).unwrap(), iou1, epsilon = 1e-15);
    }

    #[test]
    fn absent_classes_excluded_by_default_counted_in_strict_mode() {
        // Class 2 never appears in gt or predictions.
        let cm = from_counts(3, &[&[4, 1, 0], &[1, 4, 0], &[0, 0, 0]]);
        let lax = miou(&cm).unwrap();
        let strict = miou_with_policy(&cm, AbsentClassPolicy::CountAsZero).unwrap();
        assert!(lax > strict);
        assert_abs_diff_eq!(strict, lax * 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_matrix_errors() {
        let cm = ConfusionMatrix::new(3);
        assert!(matches!(miou(&cm), Err(MetricsError::Empty)));
        assert!(matches!(fwiou(&cm), Err(MetricsError::Empty)));
    }

    #[test]
    fn iou_values_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let c = rng.gen_range(2..6);
            let n = rng.gen_range(1..200);
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let gt: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let mut cm = ConfusionMatrix::new(c);
            cm.accumulate(&pred, &gt).unwrap();
            for iou in cm.per_class_iou().into_iter().flatten() {
                assert!((0.0..=1.0).contains(&iou));
            }
            let m = miou(&cm).unwrap();
            let f = fwiou(&cm).unwrap();
            assert!((0.0..=1.0).contains(&m));
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn consistent_label_permutation_preserves_miou() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = 4;
        let pred: Vec<usize> = (0..150).map(|_| rng.gen_range(0..c)).collect();
        let gt: Vec<usize> = (0..150).map(|_| rng.gen_range(0..c)).collect();
        let perm = [2usize, 0, 3, 1];
        let mut cm = ConfusionMatrix::new(c);
        cm.accumulate(&pred, &gt).unwrap();
        let mut cm_perm = ConfusionMatrix::new(c);
        let pred_p: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let gt_p: Vec<usize> = gt.iter().map(|&g| perm[g]).collect();
        cm_perm.accumulate(&pred_p, &gt_p).unwrap();
        assert_abs_diff_eq!(miou(&cm).unwrap(), miou(&cm_perm).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn fwiou_equals_miou_for_balanced_present_classes() {
        let cm = from_counts(2, &[&[4, 2], &[1, 5]]);
        // Both classes have 6 ground-truth points.
        assert_abs_diff_eq!(fwiou(&cm).unwrap(), miou(&cm).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn merge_sums_counts() {
        let a = from_counts(2, &[&[1, 2], &[3, 4]]);
        let b = from_counts(2, &[&[5, 6], &[7, 8]]);
        let mut merged = a.clone();
        merged.merge(&b);
        for g in 0..2 {
            for p in 0..2 {
                assert_eq!(merged.count(g, p), a.count(g, p) + b.count(g, p));
            }
        }
    }
}
