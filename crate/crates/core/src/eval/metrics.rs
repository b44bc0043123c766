//! Accuracy, unweighted F1 and the confusion matrix behind them.

use serde::Serialize;

use crate::error::{Error, Result};

fn check(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Fraction of positions where `preds[i] == labels[i]`.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check(preds, labels)?;
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// `counts[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// No true and no predicted instances; all three scores are 0.
    pub degenerate: bool,
}

impl ConfusionMatrix {
    pub fn build(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        check(preds, labels)?;
        let mut counts = vec![vec![0usize; classes]; classes];
        for (&p, &l) in preds.iter().zip(labels) {
            let bad = p.max(l);
            if bad >= classes {
                return Err(Error::LabelOutOfRange {
                    label: bad,
                    classes,
                });
            }
            counts[l][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn class_metrics(&self, c: usize) -> ClassMetrics {
        let tp = self.counts[c][c];
        let support: usize = self.counts[c].iter().sum();
        let predicted: usize = self.counts.iter().map(|row| row[c]).sum();
        let (fn_, fp) = (support - tp, predicted - tp);
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        ClassMetrics {
            precision: ratio(tp, predicted),
            recall: ratio(tp, support),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            support,
            degenerate: support == 0 && predicted == 0,
        }
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.classes()).map(|c| self.class_metrics(c)).collect()
    }

    /// Arithmetic mean of per-class F1 over all classes.
    pub fn uf1(&self) -> f64 {
        self.per_class().iter().map(|m| m.f1).sum::<f64>() / self.classes() as f64
    }
}

/// Unweighted (macro) F1 over `classes` classes. A class with no true and no
/// predicted instances scores 0.
pub fn uf1(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::build(preds, labels, classes)?.uf1())
}
