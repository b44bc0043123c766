use serde::Serialize;

use super::sample::AVSample;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub total: usize,
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
}

/// Per-class counts and fractions over `classes` labels.
pub fn class_distribution_of(
    labels: impl IntoIterator<Item = usize>,
    classes: usize,
) -> ClassDistribution {
    let mut counts = vec![0usize; classes];
    for l in labels {
        counts[l] += 1;
    }
    let total: usize = counts.iter().sum();
    let fractions = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect();
    ClassDistribution {
        total,
        counts,
        fractions,
    }
}

pub fn class_distribution(samples: &[AVSample], classes: usize) -> ClassDistribution {
    class_distribution_of(samples.iter().map(|s| s.label), classes)
}

impl ClassDistribution {
    /// Aligned text table, one row per class.
    pub fn render(&self, names: &[String]) -> String {
        let width = names.iter().map(String::len).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:>7}  {:>8}\n", "Class", "Count", "Fraction");
        for (i, name) in names.iter().enumerate() {
            out.push_str(&format!(
                "{:<width$}  {:>7}  {:>8.4}\n",
                name, self.counts[i], self.fractions[i]
            ));
        }
        out.push_str(&format!("{:<width$}  {:>7}\n", "Total", self.total));
        out
    }
}
