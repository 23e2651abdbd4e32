use serde::{Deserialize, Serialize};

use super::present_classes;
use crate::error::{Error, Result};
use crate::label::{argmax_score, ClassLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `gamma = None` picks `1 / (d · mean feature variance)` at fit time.
    Rbf {
        gamma: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub c: f64,
    pub tol: f64,
    /// Stop after this many consecutive passes without an update.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: Kernel::Rbf { gamma: None },
            c: 1.0,
            tol: 1e-3,
            max_passes: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub label: ClassLabel,
    /// `αᵢ yᵢ` per training point.
    pub coef: Vec<f64>,
    pub bias: f64,
}

/// One-vs-rest kernel SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub kernel: Kernel,
    pub gamma: f64,
    pub points: Vec<Vec<f64>>,
    pub machines: Vec<BinaryMachine>,
}

fn kernel_value(kind: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Kernel::Rbf { .. } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            (-gamma * d2).exp()
        }
    }
}

struct Smo<'a> {
    k: &'a [f64],
    n: usize,
    y: Vec<f64>,
    alpha: Vec<f64>,
    b: f64,
    err: Vec<f64>,
    c: f64,
}

const MAX_SWEEPS: usize = 20_000;

impl Smo<'_> {
    #[inline]
    fn kk(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ei, ej) = (self.err[i], self.err[j]);
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo < 1e-12 {
            return false;
        }
        let eta = 2.0 * self.kk(i, j) - self.kk(i, i) - self.kk(j, j);
        if eta >= -1e-12 {
            return false;
        }
        let aj_new = (aj - yj * (ei - ej) / eta).clamp(lo, hi);
        if (aj_new - aj).abs() < 1e-7 * (aj_new + aj + 1e-7) {
            return false;
        }
        let ai_new = ai + yi * yj * (aj - aj_new);
        let (dai, daj) = (ai_new - ai, aj_new - aj);
        let b1 = self.b - ei - yi * dai * self.kk(i, i) - yj * daj * self.kk(i, j);
        let b2 = self.b - ej - yi * dai * self.kk(i, j) - yj * daj * self.kk(j, j);
        let b_new = if ai_new > 0.0 && ai_new < self.c {
            b1
        } else if aj_new > 0.0 && aj_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;
        for t in 0..self.n {
            self.err[t] += yi * dai * self.kk(i, t) + yj * daj * self.kk(j, t) + db;
        }
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        self.b = b_new;
        true
    }

    fn violates(&self, i: usize, tol: f64) -> bool {
        let r = self.y[i] * self.err[i];
        (r < -tol && self.alpha[i] < self.c) || (r > tol && self.alpha[i] > 0.0)
    }

    fn run(&mut self, tol: f64, max_passes: usize) {
        let mut quiet = 0;
        let mut sweeps = 0;
        while quiet < max_passes && sweeps < MAX_SWEEPS {
            sweeps += 1;
            let mut changed = 0;
            for i in 0..self.n {
                if !self.violates(i, tol) {
                    continue;
                }
                // second choice: largest |E_i - E_j|, then a scan from i+1
                let mut best = None;
                let mut gap = -1.0;
                for j in 0..self.n {
                    let g = (self.err[i] - self.err[j]).abs();
                    if j != i && g > gap {
                        gap = g;
                        best = Some(j);
                    }
                }
                let mut ok = best.is_some_and(|j| self.take_step(i, j));
                if !ok {
                    for off in 1..self.n {
                        if self.take_step(i, (i + off) % self.n) {
                            ok = true;
                            break;
                        }
                    }
                }
                if ok {
                    changed += 1;
                }
            }
            if changed == 0 {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
    }
}

impl Svm {
    pub fn fit(cfg: &SvmConfig, x: &[Vec<f64>], y: &[ClassLabel]) -> Result<Self> {
        if !(cfg.c > 0.0) {
            return Err(Error::InvalidArgument("SVM C must be positive".into()));
        }
        let n = x.len();
        let d = x[0].len();
        let gamma = match cfg.kernel {
            Kernel::Linear => 0.0,
            Kernel::Rbf { gamma: Some(g) } => g,
            Kernel::Rbf { gamma: None } => {
                let mut total = 0.0;
                for j in 0..d {
                    let m = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                    total += x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
                }
                let mean_var = total / d as f64;
                if mean_var > 0.0 {
                    1.0 / (d as f64 * mean_var)
                } else {
                    1.0
                }
            }
        };
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel_value(cfg.kernel, gamma, &x[i], &x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let machines = present_classes(y)
            .into_iter()
            .map(|label| {
                let yy: Vec<f64> = y.iter().map(|l| if *l == label { 1.0 } else { -1.0 }).collect();
                let mut smo = Smo {
                    k: &k,
                    n,
                    err: yy.iter().map(|v| -v).collect(),
                    y: yy,
                    alpha: vec![0.0; n],
                    b: 0.0,
                    c: cfg.c,
                };
                smo.run(cfg.tol, cfg.max_passes);
                BinaryMachine {
                    label,
                    coef: smo.alpha.iter().zip(&smo.y).map(|(a, y)| a * y).collect(),
                    bias: smo.b,
                }
            })
            .collect();
        Ok(Svm {
            kernel: cfg.kernel,
            gamma,
            points: x.to_vec(),
            machines,
        })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn decision_values(&self, x: &[f64]) -> Vec<(ClassLabel, f64)> {
        let kv: Vec<f64> = self
            .points
            .iter()
            .map(|p| kernel_value(self.kernel, self.gamma, p, x))
            .collect();
        self.machines
            .iter()
            .map(|m| {
                let f: f64 = m
                    .coef
                    .iter()
                    .zip(&kv)
                    .filter(|(c, _)| **c != 0.0)
                    .map(|(c, k)| c * k)
                    .sum();
                (m.label, f + m.bias)
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        argmax_score(&self.decision_values(x)).expect("at least one machine")
    }
}
