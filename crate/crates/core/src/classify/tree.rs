use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{argmax_by_count, ClassLabel, NUM_CLASSES};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for DtConfig {
    fn default() -> Self {
        DtConfig {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `⌈√d⌉` candidate features per split.
    Sqrt,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        label: ClassLabel,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Rows with `x[feature] <= threshold`.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn predict(&self, x: &[f64]) -> ClassLabel {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Gini impurity `1 - Σ p²` of a label multiset.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn counts_of(y: &[ClassLabel], idx: &[usize]) -> [usize; NUM_CLASSES] {
    let mut c = [0; NUM_CLASSES];
    for &i in idx {
        c[y[i].index()] += 1;
    }
    c
}

/// `Σ c²/n` of a child; maximizing its sum over both children maximizes the Gini decrease.
fn purity(counts: &[usize; NUM_CLASSES], n: usize) -> f64 {
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [ClassLabel],
    max_depth: Option<usize>,
    min_samples_split: usize,
    max_features: Option<usize>,
    rng: Option<rng::Rng>,
}

impl Grower<'_> {
    fn candidate_features(&mut self, d: usize) -> Vec<usize> {
        match (self.max_features, self.rng.as_mut()) {
            (Some(m), Some(r)) if m < d => {
                let mut all: Vec<usize> = (0..d).collect();
                for i in 0..m {
                    let j = r.random_range(i..d);
                    all.swap(i, j);
                }
                let mut pick = all[..m].to_vec();
                pick.sort_unstable();
                pick
            }
            _ => (0..d).collect(),
        }
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> TreeNode {
        let counts = counts_of(self.y, idx);
        let leaf = TreeNode::Leaf {
            label: argmax_by_count(&counts).expect("non-empty node"),
        };
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < self.min_samples_split.max(2) || self.max_depth.is_some_and(|m| depth >= m) {
            return leaf;
        }
        let d = self.x[0].len();
        let n = idx.len();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in self.candidate_features(d) {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = [0usize; NUM_CLASSES];
            let mut right = counts;
            for p in 0..n - 1 {
                let l = self.y[idx[p]].index();
                left[l] += 1;
                right[l] -= 1;
                let (v, w) = (self.x[idx[p]][f], self.x[idx[p + 1]][f]);
                if v == w {
                    continue;
                }
                let score = purity(&left, p + 1) + purity(&right, n - p - 1);
                // adjacent floats can round the midpoint up to `w`
                let mid = v + 0.5 * (w - v);
                let threshold = if mid < w { mid } else { v };
                let better = match best {
                    None => true,
                    Some((s, _, _)) => score > s,
                };
                if better {
                    best = Some((score, f, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        idx.sort_unstable();
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        if l.is_empty() || r.is_empty() {
            return leaf;
        }
        let left = self.grow(&mut l, depth + 1);
        let right = self.grow(&mut r, depth + 1);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

fn check_xy(x: &[Vec<f64>], y: &[ClassLabel]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InsufficientData("empty or mismatched training set".into()));
    }
    Ok(x[0].len())
}

/// CART with Gini impurity and exhaustive midpoint thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub dim: usize,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn fit(cfg: &DtConfig, x: &[Vec<f64>], y: &[ClassLabel]) -> Result<Self> {
        let dim = check_xy(x, y)?;
        let mut idx: Vec<usize> = (0..x.len()).collect();
        let mut g = Grower {
            x,
            y,
            max_depth: cfg.max_depth,
            min_samples_split: cfg.min_samples_split,
            max_features: None,
            rng: None,
        };
        Ok(DecisionTree {
            dim,
            root: g.grow(&mut idx, 0),
        })
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        self.root.predict(x)
    }
}

/// Bootstrap sample of tree `tree` in a forest seeded with `seed`.
pub fn bootstrap_indices(seed: u64, tree: usize, n: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, 2 * tree as u64);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub dim: usize,
    pub seed: u64,
    pub trees: Vec<TreeNode>,
}

impl RandomForest {
    /// Trees train in parallel; each draws from its own stream, so the forest
    /// equals the sequential one.
    pub fn fit(cfg: &RfConfig, x: &[Vec<f64>], y: &[ClassLabel], seed: u64) -> Result<Self> {
        let dim = check_xy(x, y)?;
        if cfg.n_trees == 0 {
            return Err(Error::InvalidArgument("forest needs at least one tree".into()));
        }
        let max_features = match cfg.max_features {
            MaxFeatures::Sqrt => Some(((dim as f64).sqrt().ceil() as usize).max(1)),
            MaxFeatures::All => None,
        };
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let boot = bootstrap_indices(seed, t, x.len());
                let bx: Vec<Vec<f64>> = boot.iter().map(|&i| x[i].clone()).collect();
                let by: Vec<ClassLabel> = boot.iter().map(|&i| y[i]).collect();
                let mut idx: Vec<usize> = (0..bx.len()).collect();
                let mut g = Grower {
                    x: &bx,
                    y: &by,
                    max_depth: cfg.max_depth,
                    min_samples_split: cfg.min_samples_split,
                    max_features,
                    rng: Some(rng::stream(seed, 2 * t as u64 + 1)),
                };
                g.grow(&mut idx, 0)
            })
            .collect();
        Ok(RandomForest { dim, seed, trees })
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        let mut votes = [0usize; NUM_CLASSES];
        for t in &self.trees {
            votes[t.predict(x).index()] += 1;
        }
        argmax_by_count(&votes).expect("forest has trees")
    }
}
