use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binarisation threshold applied to sigmoid outputs.
pub const F1_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    /// `2·TP / (2·TP + FP + FN)`; 1.0 when there is nothing to find and
    /// nothing was predicted.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// Micro-averaged counts over all (sample, class) decisions.
pub fn multilabel_counts(predictions: &[Vec<f32>], truth: &[Vec<usize>]) -> Result<Counts> {
    if predictions.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut c = Counts::default();
    for (p, t) in predictions.iter().zip(truth) {
        if let Some(&bad) = t.iter().find(|&&k| k >= p.len()) {
            return Err(Error::IndexOutOfRange { index: bad, len: p.len() });
        }
        for (k, &prob) in p.iter().enumerate() {
            match (prob >= F1_THRESHOLD, t.contains(&k)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(c)
}

/// Micro-averaged multi-label F1 at threshold 0.5.
pub fn evaluate_multilabel_f1(predictions: &[Vec<f32>], truth: &[Vec<usize>]) -> Result<f64> {
    Ok(multilabel_counts(predictions, truth)?.f1())
}

/// Fraction of exact top-1 matches; empty input is an error.
pub fn evaluate_accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Row = truth, column = prediction.
pub fn confusion_matrix(predictions: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape("prediction and label counts differ".into()));
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::IndexOutOfRange {
                index: p.max(t),
                len: classes,
            });
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Accuracy per true class; `None` for classes without samples.
pub fn per_class_accuracy(predictions: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Option<f64>>> {
    let m = confusion_matrix(predictions, truth, classes)?;
    Ok(m.iter()
        .enumerate()
        .map(|(k, row)| {
            let n: u64 = row.iter().sum();
            (n > 0).then(|| row[k] as f64 / n as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        let truth = vec![vec![0], vec![1, 2]];
        assert_eq!(evaluate_multilabel_f1(&[vec![0.9, 0.1, 0.2], vec![0.1, 0.8, 0.7]], &truth).unwrap(), 1.0);
        // TP = 2, FP = 1, FN = 1.
        let f1 = evaluate_multilabel_f1(&[vec![0.9, 0.6, 0.1], vec![0.1, 0.8, 0.2]], &truth).unwrap();
        assert!((f1 - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(evaluate_multilabel_f1(&[vec![0.1, 0.1, 0.1], vec![0.0, 0.2, 0.3]], &truth).unwrap(), 0.0);
        assert!(evaluate_multilabel_f1(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(evaluate_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        let p = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        assert_eq!(evaluate_accuracy(&p, &[0; 10]).unwrap(), 0.5);
        assert!(evaluate_accuracy(&[], &[]).is_err());
        assert!(evaluate_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn confusion_rows_are_truth() {
        let m = confusion_matrix(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(m, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(per_class_accuracy(&[0, 1, 1], &[0, 0, 1], 3).unwrap(), vec![Some(0.5), Some(1.0), None]);
    }
}
