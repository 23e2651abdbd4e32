use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{argmax_score, ClassLabel, NUM_CLASSES};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 64,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 20,
            validation_fraction: 0.1,
        }
    }
}

/// One hidden ReLU layer, softmax over all 14 classes, cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    /// `hidden × input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `NUM_CLASSES × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGradients {
    fn zeros_like(m: &Mlp) -> Self {
        MlpGradients {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

impl Mlp {
    /// Glorot-uniform weights from the seeded stream, zero biases.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0x4d4c50);
        let mut uniform = |fan_in: usize, fan_out: usize, count: usize| -> Vec<f64> {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..count).map(|_| r.random_range(-a..a)).collect()
        };
        let w1 = uniform(input, hidden, hidden * input);
        let w2 = uniform(hidden, NUM_CLASSES, NUM_CLASSES * hidden);
        Mlp {
            input,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn dim(&self) -> usize {
        self.input
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input..(j + 1) * self.input];
                (self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).max(0.0)
            })
            .collect();
        let logits: Vec<f64> = (0..NUM_CLASSES)
            .map(|c| {
                let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
                self.b2[c] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        (h, logits)
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Mean cross-entropy over the rows and its gradient.
    pub fn loss_and_gradients(&self, x: &[Vec<f64>], y: &[ClassLabel]) -> (f64, MlpGradients) {
        let mut g = MlpGradients::zeros_like(self);
        let mut loss = 0.0;
        let n = x.len() as f64;
        for (row, label) in x.iter().zip(y) {
            let (h, logits) = self.forward(row);
            let p = Self::softmax(&logits);
            let t = label.index();
            loss -= p[t].max(1e-300).ln();
            let mut dlogit = p;
            dlogit[t] -= 1.0;
            let mut dh = vec![0.0; self.hidden];
            for c in 0..NUM_CLASSES {
                let d = dlogit[c] / n;
                g.b2[c] += d;
                for j in 0..self.hidden {
                    g.w2[c * self.hidden + j] += d * h[j];
                    dh[j] += d * self.w2[c * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                if h[j] <= 0.0 {
                    continue;
                }
                g.b1[j] += dh[j];
                for i in 0..self.input {
                    g.w1[j * self.input + i] += dh[j] * row[i];
                }
            }
        }
        (loss / n, g)
    }

    pub fn loss(&self, x: &[Vec<f64>], y: &[ClassLabel]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(r, l)| {
                let p = Self::softmax(&self.forward(r).1);
                -p[l.index()].max(1e-300).ln()
            })
            .sum::<f64>()
            / x.len() as f64
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    pub fn fit(cfg: &MlpConfig, x: &[Vec<f64>], y: &[ClassLabel], seed: u64) -> Result<Self> {
        if cfg.hidden == 0 || cfg.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "MLP hidden size and batch size must be positive".into(),
            ));
        }
        let mut net = Mlp::init(x[0].len(), cfg.hidden, seed);
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut split_rng = rng::stream(seed, 0x5350);
        rng::shuffle(&mut order, &mut split_rng);
        let n_val = ((x.len() as f64 * cfg.validation_fraction).round() as usize).min(x.len() - 1);
        let (val, train) = order.split_at(n_val);
        let vx: Vec<Vec<f64>> = val.iter().map(|&i| x[i].clone()).collect();
        let vy: Vec<ClassLabel> = val.iter().map(|&i| y[i]).collect();
        let mut train = train.to_vec();
        let mut params = net.params();
        let mut adam = Adam {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            t: 0,
        };
        let mut best = (f64::INFINITY, params.clone());
        let mut since_best = 0;
        let mut epoch_rng = rng::stream(seed, 0x4550);
        for _ in 0..cfg.max_epochs {
            rng::shuffle(&mut train, &mut epoch_rng);
            for batch in train.chunks(cfg.batch_size) {
                let bx: Vec<Vec<f64>> = batch.iter().map(|&i| x[i].clone()).collect();
                let by: Vec<ClassLabel> = batch.iter().map(|&i| y[i]).collect();
                let (_, g) = net.loss_and_gradients(&bx, &by);
                adam.step(&mut params, &g.flatten(), cfg.learning_rate);
                net.set_params(&params);
            }
            if vx.is_empty() {
                continue;
            }
            let vl = net.loss(&vx, &vy);
            if !vl.is_finite() {
                return Err(Error::Numeric("MLP validation loss is not finite".into()));
            }
            if vl < best.0 {
                best = (vl, params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        if !vx.is_empty() {
            net.set_params(&best.1);
        }
        Ok(net)
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        let (_, logits) = self.forward(x);
        let scores: Vec<(ClassLabel, f64)> = ClassLabel::ALL.iter().map(|&l| (l, logits[l.index()])).collect();
        argmax_score(&scores).expect("14 outputs")
    }
}

/// Largest relative difference between analytic and central-difference gradients.
pub fn gradient_check(net: &Mlp, x: &[Vec<f64>], y: &[ClassLabel], step: f64) -> f64 {
    let (_, g) = net.loss_and_gradients(x, y);
    let analytic = g.flatten();
    let base = net.params();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        probe.set_params(&p);
        let up = probe.loss(x, y);
        p[i] = base[i] - step;
        probe.set_params(&p);
        let down = probe.loss(x, y);
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
        let x = vec![
            vec![0.3, -1.2, 0.8],
            vec![1.1, 0.4, -0.5],
            vec![-0.7, 0.9, 0.2],
            vec![0.05, -0.3, -1.4],
            vec![1.6, 1.2, 0.9],
        ];
        let y = vec![
            ClassLabel::A,
            ClassLabel::BN,
            ClassLabel::M,
            ClassLabel::A,
            ClassLabel::F,
        ];
        (x, y)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (x, y) = toy();
        let net = Mlp::init(3, 64, 21);
        let err = gradient_check(&net, &x, &y, 1e-4);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let net = Mlp::init(10, 64, 1);
        let a1 = (6.0 / 74.0f64).sqrt();
        let a2 = (6.0 / 78.0f64).sqrt();
        assert!(net.w1.iter().all(|w| w.abs() <= a1));
        assert!(net.w2.iter().all(|w| w.abs() <= a2));
        assert!(net.b1.iter().chain(&net.b2).all(|&b| b == 0.0));
    }

    #[test]
    fn learns_a_separable_problem() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 3) as f64 * 2.0 - 2.0, ((i * 7) % 10) as f64 * 0.05])
            .collect();
        let y: Vec<ClassLabel> = (0..60)
            .map(|i| [ClassLabel::B, ClassLabel::D, ClassLabel::L][i % 3])
            .collect();
        let net = Mlp::fit(&MlpConfig::default(), &x, &y, 8).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, l)| net.predict(r) == **l).count();
        assert!(acc >= 58, "{acc}");
        assert_eq!(Mlp::fit(&MlpConfig::default(), &x, &y, 8).unwrap(), net);
    }
}
