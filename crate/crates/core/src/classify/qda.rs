use serde::{Deserialize, Serialize};

use super::present_classes;
use crate::error::Result;
use crate::label::{argmax_score, ClassLabel};
use crate::linalg::{cholesky, cholesky_logdet, solve_lower, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QdaConfig {
    /// Shrinkage `λ` in `Σ + λ·tr(Σ)/d·I`.
    pub shrinkage: f64,
}

impl Default for QdaConfig {
    fn default() -> Self {
        QdaConfig { shrinkage: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaClass {
    pub label: ClassLabel,
    pub log_prior: f64,
    pub mean: Vec<f64>,
    /// Cholesky factor of the regularized covariance.
    pub chol: Matrix,
    pub log_det: f64,
}

/// Quadratic discriminant analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qda {
    pub classes: Vec<QdaClass>,
}

/// Absolute diagonal floor relative to the overall feature scale, for classes whose
/// covariance trace is zero (single sample or duplicated rows).
const ABS_FLOOR_REL: f64 = 1e-9;

impl Qda {
    pub fn fit(cfg: &QdaConfig, x: &[Vec<f64>], y: &[ClassLabel]) -> Result<Self> {
        let d = x[0].len();
        let n = x.len() as f64;
        let scale = x.iter().flatten().map(|v| v * v).sum::<f64>() / (n * d as f64);
        let floor = (ABS_FLOOR_REL * scale).max(1e-300);
        let classes = present_classes(y)
            .into_iter()
            .map(|label| {
                let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, l)| **l == label).map(|(r, _)| r).collect();
                let nc = rows.len() as f64;
                let mut mean = vec![0.0; d];
                for r in &rows {
                    for (m, v) in mean.iter_mut().zip(r.iter()) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= nc);
                let mut cov = Matrix::zeros(d, d);
                for r in &rows {
                    for i in 0..d {
                        let di = r[i] - mean[i];
                        for j in 0..d {
                            cov[(i, j)] += di * (r[j] - mean[j]);
                        }
                    }
                }
                let denom = (nc - 1.0).max(1.0);
                for v in cov.data.iter_mut() {
                    *v /= denom;
                }
                let ridge = cfg.shrinkage * cov.trace() / d as f64 + floor;
                for i in 0..d {
                    cov[(i, i)] += ridge;
                }
                let chol = cholesky(&cov)?;
                Ok(QdaClass {
                    label,
                    log_prior: (nc / n).ln(),
                    mean,
                    log_det: cholesky_logdet(&chol),
                    chol,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Qda { classes })
    }

    pub fn dim(&self) -> usize {
        self.classes[0].mean.len()
    }

    pub fn log_scores(&self, x: &[f64]) -> Vec<(ClassLabel, f64)> {
        self.classes
            .iter()
            .map(|c| {
                let diff: Vec<f64> = x.iter().zip(&c.mean).map(|(a, b)| a - b).collect();
                let z = solve_lower(&c.chol, &diff);
                let maha: f64 = z.iter().map(|v| v * v).sum();
                (c.label, c.log_prior - 0.5 * c.log_det - 0.5 * maha)
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        argmax_score(&self.log_scores(x)).expect("at least one class")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_classes_with_different_spread() {
        // A is tight around the origin, B is wide around it
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i as f64 * std::f64::consts::TAU / 40.0;
            x.push(vec![0.1 * t.cos(), 0.1 * t.sin()]);
            y.push(ClassLabel::A);
            x.push(vec![3.0 * t.cos(), 3.0 * t.sin()]);
            y.push(ClassLabel::B);
        }
        let m = Qda::fit(&QdaConfig::default(), &x, &y).unwrap();
        assert_eq!(m.predict(&[0.05, 0.0]), ClassLabel::A);
        assert_eq!(m.predict(&[2.5, 1.0]), ClassLabel::B);
    }

    #[test]
    fn single_sample_class_is_usable() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.4, 0.9], vec![10.0, 10.0]];
        let y = vec![ClassLabel::A, ClassLabel::A, ClassLabel::A, ClassLabel::G];
        let m = Qda::fit(&QdaConfig::default(), &x, &y).unwrap();
        assert_eq!(m.predict(&[10.0, 10.0]), ClassLabel::G);
        assert!(m.log_scores(&[3.0, 3.0]).iter().all(|(_, s)| s.is_finite()));
    }
}
