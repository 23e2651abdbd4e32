use serde::{Deserialize, Serialize};

use super::present_classes;
use crate::error::Result;
use crate::label::{argmax_score, ClassLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbConfig {
    /// Variance floor relative to the largest per-dimension variance of the training set.
    pub var_floor_rel: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig { var_floor_rel: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbClass {
    pub label: ClassLabel,
    pub log_prior: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Gaussian naive Bayes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub classes: Vec<NbClass>,
}

fn mean_var(rows: &[&Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

impl NaiveBayes {
    pub fn fit(cfg: &NbConfig, x: &[Vec<f64>], y: &[ClassLabel]) -> Result<Self> {
        let d = x[0].len();
        let all: Vec<&Vec<f64>> = x.iter().collect();
        let (_, global_var) = mean_var(&all, d);
        let floor = (cfg.var_floor_rel * global_var.iter().copied().fold(0.0, f64::max)).max(1e-300);
        let n = x.len() as f64;
        let classes = present_classes(y)
            .into_iter()
            .map(|label| {
                let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, l)| **l == label).map(|(r, _)| r).collect();
                let (mean, mut var) = mean_var(&rows, d);
                var.iter_mut().for_each(|v| *v = v.max(floor));
                NbClass {
                    label,
                    log_prior: (rows.len() as f64 / n).ln(),
                    mean,
                    var,
                }
            })
            .collect();
        Ok(NaiveBayes { classes })
    }

    pub fn dim(&self) -> usize {
        self.classes[0].mean.len()
    }

    /// Unnormalized log posteriors per class.
    pub fn log_posteriors(&self, x: &[f64]) -> Vec<(ClassLabel, f64)> {
        self.classes
            .iter()
            .map(|c| {
                let ll: f64 = x
                    .iter()
                    .zip(&c.mean)
                    .zip(&c.var)
                    .map(|((v, m), s)| -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (v - m).powi(2) / (2.0 * s))
                    .sum();
                (c.label, c.log_prior + ll)
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        argmax_score(&self.log_posteriors(x)).expect("at least one class")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_classes_tie_to_first_tag() {
        let x = vec![vec![-1.5], vec![-0.5], vec![0.5], vec![1.5]];
        let y = vec![ClassLabel::D, ClassLabel::D, ClassLabel::C, ClassLabel::C];
        let m = NaiveBayes::fit(&NbConfig::default(), &x, &y).unwrap();
        let lp = m.log_posteriors(&[0.0]);
        assert_eq!(lp[0].1, lp[1].1);
        assert_eq!(m.predict(&[0.0]), ClassLabel::C);
        assert_eq!(m.predict(&[1.0]), ClassLabel::C);
        assert_eq!(m.predict(&[-1.0]), ClassLabel::D);
    }

    #[test]
    fn constant_dimension_is_floored() {
        let x = vec![vec![0.0, 1.0], vec![0.2, 1.0], vec![5.0, 1.0], vec![5.2, 1.0]];
        let y = vec![ClassLabel::A, ClassLabel::A, ClassLabel::B, ClassLabel::B];
        let m = NaiveBayes::fit(&NbConfig::default(), &x, &y).unwrap();
        assert!(m.classes.iter().all(|c| c.var.iter().all(|&v| v > 0.0)));
        assert_eq!(m.predict(&[4.9, 1.0]), ClassLabel::B);
        // far from every training point the log posteriors stay finite
        assert!(m.log_posteriors(&[1e6, -1e6]).iter().all(|(_, s)| s.is_finite()));
    }
}
