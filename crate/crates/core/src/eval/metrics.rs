use serde::{Deserialize, Serialize};

use crate::label::{ClassLabel, NUM_CLASSES};

/// Rows are true classes, columns predictions, both in A..M, BN order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: ClassLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[ClassLabel], predicted: &[ClassLabel]) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            m.add(*t, *p);
        }
        m
    }

    pub fn add(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, c: ClassLabel) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    pub fn predicted(&self, c: ClassLabel) -> u64 {
        self.counts.iter().map(|r| r[c.index()]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Precision, recall and F1 of one class; zero denominators give 0.
    pub fn class_score(&self, c: ClassLabel) -> ClassScore {
        let tp = self.counts[c.index()][c.index()] as f64;
        let support = self.support(c);
        let pred = self.predicted(c);
        let precision = if pred == 0 { 0.0 } else { tp / pred as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScore {
            label: c,
            precision,
            recall,
            f1,
            support,
        }
    }

    /// Classes with no true samples; they are left out of the macro average.
    pub fn unsupported_classes(&self) -> Vec<ClassLabel> {
        ClassLabel::ALL.into_iter().filter(|&c| self.support(c) == 0).collect()
    }

    pub fn macro_f1(&self) -> f64 {
        let scores: Vec<f64> = ClassLabel::ALL
            .into_iter()
            .filter(|&c| self.support(c) > 0)
            .map(|c| self.class_score(c).f1)
            .collect();
        if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    }

    /// Pooled F1 over all decisions; equals accuracy for single-label data.
    pub fn micro_f1(&self) -> f64 {
        self.accuracy()
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
