//! Confusion matrix and one-vs-rest precision / recall / F1, reported on a
//! 0-100 scale.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::{Error, Result};

/// `counts[gold][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: LabelSet,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(labels: LabelSet, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = labels.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("confusion matrix must be {k}x{k}")));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn from_indices(gold: &[usize], pred: &[usize], labels: &LabelSet) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Shape(format!("{} gold labels vs {} predictions", gold.len(), pred.len())));
        }
        let k = labels.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= k || p >= k {
                return Err(Error::UnknownLabel(format!("class index {}", g.max(p))));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { labels: labels.clone(), counts })
    }

    pub fn from_labels<S: AsRef<str>>(gold: &[S], pred: &[S], labels: &LabelSet) -> Result<Self> {
        let idx = |v: &[S]| v.iter().map(|s| labels.index_of(s.as_ref())).collect::<Result<Vec<_>>>();
        Self::from_indices(&idx(gold)?, &idx(pred)?, labels)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest metrics for class `k`. Zero denominators give 0.
pub fn class_metrics(cm: &ConfusionMatrix, k: usize) -> ClassMetrics {
    let tp = cm.counts[k][k];
    let p = ratio(tp, cm.predicted(k));
    let r = ratio(tp, cm.support(k));
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    ClassMetrics {
        precision: 100.0 * p,
        recall: 100.0 * r,
        f1: 100.0 * f1,
        support: cm.support(k),
    }
}

/// `100 * trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("accuracy of an empty confusion matrix".into()));
    }
    Ok(100.0 * cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassReport>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Per-class metrics and their unweighted means.
pub fn macro_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let k = cm.num_classes();
    let classes: Vec<ClassReport> = (0..k)
        .map(|c| ClassReport {
            label: cm.labels.name(c).to_string(),
            metrics: class_metrics(cm, c),
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(|c| f(&c.metrics)).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: accuracy(cm)?,
        confusion: cm.clone(),
        classes,
    })
}

/// Half-up rounding to `decimals` places, for display.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s + 0.5).floor() / s
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .classes
            .iter()
            .map(|c| c.label.len())
            .chain([9])
            .max()
            .unwrap_or(9);
        let int = |x: f64| round_half_up(x, 0) as i64;
        writeln!(f, "{:<width$} {:>8} {:>9} {:>6} {:>7}", "Class", "F1-Score", "Precision", "Recall", "Support")?;
        for c in &self.classes {
            let m = &c.metrics;
            writeln!(
                f,
                "{:<width$} {:>8} {:>9} {:>6} {:>7}",
                c.label,
                int(m.f1),
                int(m.precision),
                int(m.recall),
                m.support
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:<width$} {:>8} {:>9} {:>6} {:>8}", "Average", "F1-Score", "Precision", "Recall", "Accuracy")?;
        writeln!(
            f,
            "{:<width$} {:>8} {:>9} {:>6} {:>8.1}",
            "macro",
            int(self.macro_f1),
            int(self.macro_precision),
            int(self.macro_recall),
            round_half_up(self.accuracy, 1)
        )?;
        writeln!(f)?;
        write!(f, "{:<width$}", "gold\\pred")?;
        for c in &self.classes {
            write!(f, " {:>w$}", c.label, w = c.label.len().max(5))?;
        }
        writeln!(f)?;
        for (g, row) in self.confusion.counts.iter().enumerate() {
            write!(f, "{:<width$}", self.classes[g].label)?;
            for (c, n) in self.classes.iter().zip(row) {
                write!(f, " {:>w$}", n, w = c.label.len().max(5))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
