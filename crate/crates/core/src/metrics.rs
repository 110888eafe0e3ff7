//! Confusion matrix and support-weighted F1 over the five task classes.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::FactifyLabel;

const K: usize = FactifyLabel::ALL.len();

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold has {gold} labels but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no labels to score")]
    Empty,
}

/// Rows are gold labels, columns predictions, both in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; K]; K]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; K]; K] {
        &self.counts
    }

    pub fn get(&self, gold: FactifyLabel, pred: FactifyLabel) -> u64 {
        self.counts[gold.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, gold: FactifyLabel) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn column_sum(&self, pred: FactifyLabel) -> u64 {
        self.counts.iter().map(|row| row[pred.index()]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..K).all(|g| (0..K).all(|p| g == p || self.counts[g][p] == 0))
    }

    /// CSV with a `gold\pred` header row followed by one row per gold label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for label in FactifyLabel::ALL {
            out.push(',');
            out.push_str(label.as_str());
        }
        out.push('\n');
        for (label, row) in FactifyLabel::ALL.iter().zip(&self.counts) {
            out.push_str(label.as_str());
            for c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(
    gold: &[FactifyLabel],
    pred: &[FactifyLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(pred) {
        cm.counts[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: IndexMap<FactifyLabel, ClassScores>,
    pub weighted_f1: f64,
    pub total: u64,
    pub labels: Vec<FactifyLabel>,
    /// Raw counts, gold-major.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 with 0 for every 0/0, plus F1 weighted
/// by gold support.
pub fn report(cm: &ConfusionMatrix) -> Result<ClassReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let mut per_class = IndexMap::with_capacity(K);
    let mut weighted_f1 = 0.0;
    for label in FactifyLabel::ALL {
        let tp = cm.get(label, label);
        let support = cm.row_sum(label);
        let precision = ratio(tp, cm.column_sum(label));
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted_f1 += support as f64 / total as f64 * f1;
        per_class.insert(
            label,
            ClassScores {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    Ok(ClassReport {
        per_class,
        weighted_f1,
        total,
        labels: FactifyLabel::ALL.to_vec(),
        confusion: cm.counts.iter().map(|r| r.to_vec()).collect(),
    })
}
