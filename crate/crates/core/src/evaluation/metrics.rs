use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub per_class: PerClass,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Classes that never occur in either `y_true` or `y_pred`. Their F1 and
    /// recall are 0 and still count toward the macro averages.
    pub empty_classes: Vec<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus per-class and macro-averaged precision, recall and F1.
/// Every `0/0` is taken as 0.
pub fn compute_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    class_count: usize,
) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape("compute_metrics", y_true.len(), y_pred.len()));
    }
    if class_count == 0 {
        return Err(Error::InvalidArgument(
            "class_count must be positive".into(),
        ));
    }
    let mut confusion = vec![vec![0usize; class_count]; class_count];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= class_count || p >= class_count {
            return Err(Error::InvalidArgument(format!(
                "label pair ({t}, {p}) out of range for {class_count} classes"
            )));
        }
        confusion[t][p] += 1;
    }

    let correct: usize = (0..class_count).map(|c| confusion[c][c]).sum();
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted: Vec<usize> = (0..class_count)
        .map(|c| confusion.iter().map(|row| row[c]).sum())
        .collect();
    let precision: Vec<f64> = (0..class_count)
        .map(|c| ratio(confusion[c][c], predicted[c]))
        .collect();
    let recall: Vec<f64> = (0..class_count)
        .map(|c| ratio(confusion[c][c], support[c]))
        .collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| {
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    let empty_classes = (0..class_count)
        .filter(|&c| support[c] == 0 && predicted[c] == 0)
        .collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / class_count as f64;

    Ok(MetricsReport {
        accuracy: ratio(correct, y_true.len()),
        macro_f1: mean(&f1),
        macro_recall: mean(&recall),
        per_class: PerClass {
            precision,
            recall,
            f1,
            support,
        },
        confusion,
        empty_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [0, 1, 2, 1, 0];
        let m = compute_metrics(&y, &y, 3).unwrap();
        assert_eq!((m.accuracy, m.macro_f1, m.macro_recall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.macro_recall, 0.75);
        // class 0: p=1, r=1/2, f1=2/3; class 1: p=2/3, r=1, f1=4/5
        assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
        assert_eq!(m.confusion, vec![vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn empty_class_counts_as_zero() {
        let m = compute_metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m.empty_classes, vec![2]);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[0], &[0, 1], 2).is_err());
        assert!(compute_metrics(&[0], &[2], 2).is_err());
    }
}
