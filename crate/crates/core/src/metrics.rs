use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub mse: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, one-hot MSE, and per-class / macro-averaged precision, recall
/// and F1 for row-stochastic predictions.
pub fn evaluate(predicted_probs: &[Vec<f64>], labels: &[usize]) -> Result<ClassificationReport> {
    if predicted_probs.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} prediction rows for {} labels",
            predicted_probs.len(),
            labels.len()
        )));
    }
    let n_classes = predicted_probs.first().map_or(0, Vec::len);
    if n_classes == 0 {
        return Err(Error::Usage("no predictions to evaluate".into()));
    }
    for (i, row) in predicted_probs.iter().enumerate() {
        if row.len() != n_classes {
            return Err(Error::Usage(format!("row {i} has {} columns, expected {n_classes}", row.len())));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Usage(format!("row {i} sums to {sum}, not 1")));
        }
    }
    if let Some(i) = labels.iter().position(|&y| y >= n_classes) {
        return Err(Error::Usage(format!("label {} at row {i} exceeds {n_classes} classes", labels[i])));
    }

    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    let mut mse = 0.0;
    for (row, &y) in predicted_probs.iter().zip(labels) {
        let p = argmax(row);
        predicted[p] += 1;
        support[y] += 1;
        if p == y {
            tp[y] += 1;
        }
        mse += row
            .iter()
            .enumerate()
            .map(|(c, q)| {
                let t = if c == y { 1.0 } else { 0.0 };
                (t - q) * (t - q)
            })
            .sum::<f64>()
            / n_classes as f64;
    }
    let n = labels.len();
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n_classes as f64;
    Ok(ClassificationReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(tp.iter().sum(), n),
        mse: if n == 0 { 0.0 } else { mse / n as f64 },
        per_class,
    })
}

impl ClassificationReport {
    /// Flat key/value view, e.g. `accuracy`, `class_2_recall`.
    pub fn to_flat_map(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("accuracy".to_string(), self.accuracy);
        out.insert("mse".to_string(), self.mse);
        out.insert("macro_precision".to_string(), self.macro_precision);
        out.insert("macro_recall".to_string(), self.macro_recall);
        out.insert("macro_f1".to_string(), self.macro_f1);
        for m in &self.per_class {
            out.insert(format!("class_{}_precision", m.class), m.precision);
            out.insert(format!("class_{}_recall", m.class), m.recall);
            out.insert(format!("class_{}_f1", m.class), m.f1);
            out.insert(format!("class_{}_support", m.class), m.support as f64);
        }
        out
    }
}
