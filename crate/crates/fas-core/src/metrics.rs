//! Confusion matrix, accuracy, and unweighted average F1.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// confusion[i][j] = count of true class i predicted as j.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    /// Unweighted (macro) average F1 over all classes; a class absent from
    /// both predictions and labels contributes F1 = 0.
    pub macro_f1: f64,
    pub per_class: Vec<ClassStats>,
    pub n: usize,
}

/// Aggregate (true label, predicted label) pairs into metrics.
pub fn compute_metrics(n_classes: usize, pairs: &[(usize, usize)]) -> Result<Metrics> {
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for &(t, p) in pairs {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Input(format!(
                "class index out of range: true={t} pred={p} with {n_classes} classes"
            )));
        }
        confusion[t][p] += 1;
    }
    let n = pairs.len();
    let trace: usize = (0..n_classes).map(|i| confusion[i][i]).sum();
    let accuracy = if n == 0 { 0.0 } else { trace as f64 / n as f64 };

    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let pred_c: usize = (0..n_classes).map(|i| confusion[i][c]).sum();
        let true_c: usize = confusion[c].iter().sum();
        let precision = if pred_c == 0 { 0.0 } else { tp as f64 / pred_c as f64 };
        let recall = if true_c == 0 { 0.0 } else { tp as f64 / true_c as f64 };
        // straight from counts (2tp / (2tp + fp + fn)): one rounding step,
        // so it agrees bit-exactly with any counting oracle
        let denom = 2 * tp + (pred_c - tp) + (true_c - tp);
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        per_class.push(ClassStats { precision, recall, f1 });
    }
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / n_classes as f64;
    Ok(Metrics { confusion, accuracy, macro_f1, per_class, n })
}

/// Argmax with ties broken by the lowest class index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let pairs: Vec<(usize, usize)> = (0..7).cycle().take(70).map(|c| (c, c)).collect();
        let m = compute_metrics(7, &pairs).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(m.confusion[i][j], if i == j { 10 } else { 0 });
            }
        }
    }

    #[test]
    fn all_class_zero_worked_example() {
        // true 50/50 over {0,1}, all predicted 0, 7-class vocabulary:
        // accuracy 0.5, per-class F1 = {2/3, 0, ...}, macro F1 = 2/21
        let mut pairs = Vec::new();
        for _ in 0..50 {
            pairs.push((0usize, 0usize));
            pairs.push((1usize, 0usize));
        }
        let m = compute_metrics(7, &pairs).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert!((m.macro_f1 - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_is_trace_over_sum() {
        let pairs = [(0, 1), (1, 1), (2, 2), (3, 0), (0, 0), (1, 0)];
        let m = compute_metrics(7, &pairs).unwrap();
        let trace: usize = (0..7).map(|i| m.confusion[i][i]).sum();
        let total: usize = m.confusion.iter().flatten().sum();
        assert_eq!(total, m.n);
        assert_eq!(m.accuracy, trace as f64 / total as f64);
    }

    #[test]
    fn out_of_range_class_is_input_error() {
        assert!(matches!(compute_metrics(7, &[(7, 0)]), Err(Error::Input(_))));
    }

    #[test]
    fn argmax_tie_breaks_low_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }
}
