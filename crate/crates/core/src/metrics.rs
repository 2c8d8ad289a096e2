//! Closed-set evaluation: confusion matrices and macro-averaged metrics.
//!
//! Macro averaging weights every class equally, so rare classes count as
//! much as common ones. Zero-denominator precision/recall are defined as 0.
//! Classes that are never true are excluded from macro-accuracy; they join
//! macro-F1 (with F1 = 0) only if something was predicted as them, and are
//! excluded entirely when never true nor predicted.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Square count matrix: rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    classes: usize,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![0; classes * classes],
            classes,
        }
    }

    pub fn from_pairs(
        classes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, MetricsError> {
        let mut cm = ConfusionMatrix::new(classes);
        for (truth, pred) in pairs {
            cm.record(truth, pred)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<(), MetricsError> {
        if truth >= self.classes || pred >= self.classes {
            return Err(MetricsError::InvalidParam(format!(
                "pair ({truth}, {pred}) outside {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.count(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|t| self.count(t, pred)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-class precision/recall/F1 with the supports they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Times the class was true.
    pub support: u64,
    /// Times the class was predicted.
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroMetrics {
    pub per_class: Vec<ClassMetrics>,
    /// Mean recall over classes with support; the balanced-accuracy identity.
    pub macro_accuracy: f64,
    /// Mean F1 over classes that were true or predicted at least once.
    pub macro_f1: f64,
}

pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MacroMetrics, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let mut per_class = Vec::with_capacity(cm.classes());
    let mut recall_sum = 0.0;
    let mut recall_n = 0usize;
    let mut f1_sum = 0.0;
    let mut f1_n = 0usize;
    for c in 0..cm.classes() {
        let tp = cm.count(c, c);
        let support = cm.row_sum(c);
        let predicted = cm.col_sum(c);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if support > 0 {
            recall_sum += recall;
            recall_n += 1;
        }
        if support > 0 || predicted > 0 {
            f1_sum += f1;
            f1_n += 1;
        }
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    Ok(MacroMetrics {
        per_class,
        macro_accuracy: recall_sum / recall_n as f64,
        macro_f1: if f1_n == 0 { 0.0 } else { f1_sum / f1_n as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_diagonal_scores_one() {
        let mut cm = ConfusionMatrix::new(3);
        for c in 0..3 {
            for _ in 0..5 {
                cm.record(c, c).unwrap();
            }
        }
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(m.macro_accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert!(m.per_class.iter().all(|c| c.f1 == 1.0));
    }

    #[test]
    fn analytic_one_third_macro_f1() {
        // class 0 fully correct (2 examples), class 1 fully predicted as 0.
        let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 0), (1, 0), (1, 0)]).unwrap();
        let m = macro_metrics(&cm).unwrap();
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.macro_accuracy, 0.5);
    }

    #[test]
    fn always_predicting_one_class_gives_half_accuracy() {
        let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 0), (1, 0), (1, 0)]).unwrap();
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(m.macro_accuracy, 0.5);
    }

    #[test]
    fn all_zero_matrix_errors() {
        let cm = ConfusionMatrix::new(4);
        assert!(matches!(macro_metrics(&cm), Err(MetricsError::EmptyMatrix)));
    }

    #[test]
    fn zero_support_classes_follow_the_convention() {
        // class 2 never true; predicted once -> enters macro-F1 with 0.
        let cm = ConfusionMatrix::from_pairs(3, [(0, 0), (1, 2)]).unwrap();
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(m.macro_accuracy, (1.0 + 0.0) / 2.0);
        assert_eq!(m.macro_f1, (1.0 + 0.0 + 0.0) / 3.0);

        // class 2 never true nor predicted -> excluded everywhere.
        let cm = ConfusionMatrix::from_pairs(3, [(0, 0), (1, 0)]).unwrap();
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(m.macro_accuracy, 0.5);
        assert_eq!(m.macro_f1, (1.0_f64 * 2.0 / 3.0 + 0.0) / 2.0);
    }

    /// Independent scalar recount: recompute every per-class value from raw
    /// counts, never via the library's helpers.
    #[test]
    fn random_matrices_match_independent_recount() {
        let mut rng = crate::seed::rng(5, &[]);
        for _ in 0..60 {
            let classes = 36;
            let mut cm = ConfusionMatrix::new(classes);
            let mut raw = vec![vec![0u64; classes]; classes];
            for _ in 0..rng.random_range(1..400) {
                let t = rng.random_range(0..classes);
                let p = rng.random_range(0..classes);
                cm.record(t, p).unwrap();
                raw[t][p] += 1;
            }
            let m = macro_metrics(&cm).unwrap();

            let mut recall_acc = 0.0;
            let mut recall_n = 0;
            let mut f1_acc = 0.0;
            let mut f1_n = 0;
            for c in 0..classes {
                let tp = raw[c][c] as f64;
                let row: u64 = raw[c].iter().sum();
                let col: u64 = (0..classes).map(|t| raw[t][c]).sum();
                let p = if col == 0 { 0.0 } else { tp / col as f64 };
                let r = if row == 0 { 0.0 } else { tp / row as f64 };
                let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                assert_eq!(m.per_class[c].precision, p);
                assert_eq!(m.per_class[c].recall, r);
                assert_eq!(m.per_class[c].f1, f1);
                if row > 0 {
                    recall_acc += r;
                    recall_n += 1;
                }
                if row > 0 || col > 0 {
                    f1_acc += f1;
                    f1_n += 1;
                }
            }
            assert_eq!(m.macro_accuracy, recall_acc / recall_n as f64);
            assert_eq!(m.macro_f1, f1_acc / f1_n as f64);
        }
    }

    /// Relabeling classes permutes per-class metrics and leaves macro values
    /// unchanged.
    #[test]
    fn permutation_equivariance() {
        let mut rng = crate::seed::rng(9, &[]);
        for trial in 0..20 {
            let classes = 7;
            let pairs: Vec<(usize, usize)> = (0..150)
                .map(|_| (rng.random_range(0..classes), rng.random_range(0..classes)))
                .collect();
            let perm: Vec<usize> = {
                use rand::seq::SliceRandom;
                let mut p: Vec<usize> = (0..classes).collect();
                p.shuffle(&mut rng);
                p
            };
            let cm = ConfusionMatrix::from_pairs(classes, pairs.iter().copied()).unwrap();
            let relabeled = ConfusionMatrix::from_pairs(
                classes,
                pairs.iter().map(|&(t, p)| (perm[t], perm[p])),
            )
            .unwrap();
            let a = macro_metrics(&cm).unwrap();
            let b = macro_metrics(&relabeled).unwrap();
            assert!((a.macro_accuracy - b.macro_accuracy).abs() < 1e-12, "trial {trial}");
            assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12, "trial {trial}");
            for c in 0..classes {
                assert_eq!(a.per_class[c].f1, b.per_class[perm[c]].f1);
            }
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval() {
        let mut rng = crate::seed::rng(13, &[]);
        for _ in 0..40 {
            let classes = rng.random_range(2..10);
            let mut cm = ConfusionMatrix::new(classes);
            for _ in 0..rng.random_range(1..100) {
                cm.record(rng.random_range(0..classes), rng.random_range(0..classes))
                    .unwrap();
            }
            let m = macro_metrics(&cm).unwrap();
            assert!((0.0..=1.0).contains(&m.macro_accuracy));
            assert!((0.0..=1.0).contains(&m.macro_f1));
            for c in &m.per_class {
                assert!((0.0..=1.0).contains(&c.precision));
                assert!((0.0..=1.0).contains(&c.recall));
                assert!((0.0..=1.0).contains(&c.f1));
            }
        }
    }
}
