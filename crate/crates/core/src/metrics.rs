//! Regression error metrics and classification assessment.
//!
//! `mae`/`rmse` score forecast vectors; `confusion` and `report` assess a
//! classifier. All ratios with an empty denominator are defined as 0 so
//! reports stay finite and serializable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("input length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("label at position {position} is not in the label list")]
    UnknownLabel { position: usize },
    #[error("confusion matrix has no counts")]
    EmptyMatrix,
}

/// Mean absolute error: `(1/n) Σ |y_i − ŷ_i|`.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Root mean squared error: `sqrt((1/n) Σ (y_i − ŷ_i)²)`.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<(), MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Square count grid over an ordered label list; rows are actual classes,
/// columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix<L> {
    labels: Vec<L>,
    counts: Vec<Vec<u64>>,
}

impl<L: Clone + PartialEq> ConfusionMatrix<L> {
    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correctly classified count (the main diagonal).
    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

impl<L: std::fmt::Display + Clone + PartialEq> ConfusionMatrix<L> {
    /// CSV grid: one header row of predicted labels, then one row per
    /// actual label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for label in &self.labels {
            out.push(',');
            out.push_str(&label.to_string());
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(&label.to_string());
            for count in &self.counts[i] {
                out.push(',');
                out.push_str(&count.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Count actual/predicted pairs into a matrix over `labels`.
///
/// `counts[i][j]` is the number of positions where the actual label is
/// `labels[i]` and the predicted label is `labels[j]`.
pub fn confusion<L: Clone + PartialEq>(
    actual: &[L],
    predicted: &[L],
    labels: &[L],
) -> Result<ConfusionMatrix<L>, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    let index_of = |l: &L, position: usize| {
        labels
            .iter()
            .position(|candidate| candidate == l)
            .ok_or(MetricsError::UnknownLabel { position })
    };
    let mut counts = vec![vec![0_u64; labels.len()]; labels.len()];
    for (position, (a, p)) in actual.iter().zip(predicted).enumerate() {
        let row = index_of(a, position)?;
        let col = index_of(p, position)?;
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

/// Precision/recall/F1 for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Unweighted and support-weighted averages over labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-label scores plus overall accuracy, with both macro and
/// support-weighted averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_label: Vec<LabelStats>,
    pub macro_avg: AverageStats,
    pub weighted_avg: AverageStats,
    pub total: u64,
}

fn ratio(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

/// Summarize a confusion matrix. Any 0/0 ratio is reported as 0.
pub fn report<L: std::fmt::Display + Clone + PartialEq>(
    cm: &ConfusionMatrix<L>,
) -> Result<ClassificationReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = cm.labels().len();
    let mut per_label = Vec::with_capacity(n);
    for c in 0..n {
        let tp = cm.counts[c][c] as f64;
        let predicted_c: f64 = (0..n).map(|r| cm.counts[r][c] as f64).sum();
        let actual_c: f64 = cm.counts[c].iter().map(|&v| v as f64).sum();
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, actual_c);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        per_label.push(LabelStats {
            label: cm.labels[c].to_string(),
            precision,
            recall,
            f1,
            support: actual_c as u64,
        });
    }
    let macro_avg = AverageStats {
        precision: per_label.iter().map(|s| s.precision).sum::<f64>() / n as f64,
        recall: per_label.iter().map(|s| s.recall).sum::<f64>() / n as f64,
        f1: per_label.iter().map(|s| s.f1).sum::<f64>() / n as f64,
    };
    let weight = |f: fn(&LabelStats) -> f64| {
        per_label
            .iter()
            .map(|s| f(s) * s.support as f64)
            .sum::<f64>()
            / total as f64
    };
    let weighted_avg = AverageStats {
        precision: weight(|s| s.precision),
        recall: weight(|s| s.recall),
        f1: weight(|s| s.f1),
    };
    Ok(ClassificationReport {
        accuracy: cm.trace() as f64 / total as f64,
        per_label,
        macro_avg,
        weighted_avg,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mae_perfect_prediction_is_zero() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn mae_hand_examples() {
        let got = mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
        let got = mae(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((got - 3.5).abs() < 1e-12);
    }

    #[test]
    fn rmse_hand_examples() {
        let got = rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((got - (2.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        let got = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((got - 12.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert_eq!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(rmse(&[], &[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn confusion_diagonal_for_exact_predictions() {
        let labels = ['a', 'b'];
        let cm = confusion(&['a', 'b', 'b'], &['a', 'b', 'b'], &labels).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0], vec![0, 2]]);
        assert_eq!(cm.trace(), cm.total());
    }

    #[test]
    fn confusion_hand_count() {
        let labels = ['A', 'B'];
        let cm = confusion(&['A', 'A', 'B', 'B'], &['A', 'B', 'B', 'B'], &labels).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn confusion_empty_inputs_all_zero() {
        let cm = confusion::<char>(&[], &[], &['a', 'b']).unwrap();
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn confusion_unknown_label() {
        let got = confusion(&['x'], &['a'], &['a', 'b']);
        assert_eq!(got, Err(MetricsError::UnknownLabel { position: 0 }));
    }

    #[test]
    fn report_diagonal_matrix_is_perfect() {
        let cm = confusion(&['a', 'b', 'b'], &['a', 'b', 'b'], &['a', 'b']).unwrap();
        let rep = report(&cm).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        for stats in &rep.per_label {
            assert_eq!(stats.precision, 1.0);
            assert_eq!(stats.recall, 1.0);
        }
    }

    #[test]
    fn report_hand_arithmetic() {
        let cm = confusion(&['A', 'A', 'B', 'B'], &['A', 'B', 'B', 'B'], &['A', 'B']).unwrap();
        let rep = report(&cm).unwrap();
        assert!((rep.accuracy - 0.75).abs() < 1e-12);
        let b = &rep.per_label[1];
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_zero_support_class_uses_zero_rule() {
        // No actual 'c' instances: recall(c) must be 0, not NaN.
        let cm = confusion(&['a', 'b'], &['a', 'b'], &['a', 'b', 'c']).unwrap();
        let rep = report(&cm).unwrap();
        let c = &rep.per_label[2];
        assert_eq!(c.recall, 0.0);
        assert_eq!(c.precision, 0.0);
        assert_eq!(c.f1, 0.0);
    }

    #[test]
    fn report_empty_matrix_errors() {
        let cm = confusion::<char>(&[], &[], &['a']).unwrap();
        assert_eq!(report(&cm), Err(MetricsError::EmptyMatrix));
    }

    #[test]
    fn confusion_csv_grid() {
        let cm = confusion(&['A', 'B'], &['A', 'A'], &['A', 'B']).unwrap();
        let csv = cm.to_csv();
        assert_eq!(csv, "actual\\predicted,A,B\nA,1,0\nB,1,0\n");
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1_usize..64).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3_f64..1e3, n),
                prop::collection::vec(-1e3_f64..1e3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae((y, p) in vec_pair()) {
            let m = mae(&y, &p).unwrap();
            let r = rmse(&y, &p).unwrap();
            prop_assert!(r >= m - 1e-12, "rmse {r} < mae {m}");
        }

        #[test]
        fn metrics_symmetric_under_swap((y, p) in vec_pair()) {
            prop_assert!((mae(&y, &p).unwrap() - mae(&p, &y).unwrap()).abs() < 1e-12);
            prop_assert!((rmse(&y, &p).unwrap() - rmse(&p, &y).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn metrics_invariant_under_joint_permutation((y, p) in vec_pair(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..y.len()).collect();
            order.shuffle(&mut rng);
            let y2: Vec<f64> = order.iter().map(|&i| y[i]).collect();
            let p2: Vec<f64> = order.iter().map(|&i| p[i]).collect();
            prop_assert!((mae(&y, &p).unwrap() - mae(&y2, &p2).unwrap()).abs() < 1e-9);
            prop_assert!((rmse(&y, &p).unwrap() - rmse(&y2, &p2).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn confusion_counts_conserve_length(pairs in prop::collection::vec((0_usize..3, 0_usize..3), 0..40)) {
            let labels = [0_usize, 1, 2];
            let actual: Vec<usize> = pairs.iter().map(|(a, _)| *a).collect();
            let predicted: Vec<usize> = pairs.iter().map(|(_, p)| *p).collect();
            let cm = confusion(&actual, &predicted, &labels).unwrap();
            prop_assert_eq!(cm.total() as usize, pairs.len());
            if !pairs.is_empty() {
                // Accuracy must equal an independently computed agreement rate.
                let agree = actual.iter().zip(&predicted).filter(|(a, p)| a == p).count();
                let rep = report(&cm).unwrap();
                prop_assert!((rep.accuracy - agree as f64 / pairs.len() as f64).abs() < 1e-12);
            }
        }
    }
}
