//! The six supervised classifiers over the 14 bifurcation classes.
//!
//! Every algorithm follows the same contract: [`fit`] takes a
//! [`LabeledDataset`], a [`ClassifierConfig`] and a seed and returns an
//! immutable [`ClassifierModel`]; prediction is deterministic and ties go to
//! the alphabetically first class tag.

mod mlp;
mod nb;
mod qda;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{ClassLabel, NUM_CLASSES};

pub use mlp::{gradient_check, Mlp, MlpConfig, MlpGradients};
pub use nb::{NaiveBayes, NbConfig};
pub use qda::{Qda, QdaConfig};
pub use svm::{Kernel, Svm, SvmConfig};
pub use tree::{bootstrap_indices, gini, DecisionTree, DtConfig, MaxFeatures, RandomForest, RfConfig, TreeNode};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    DT,
    RF,
    NB,
    QDA,
    SVM,
    MLP,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::RF,
        Algorithm::NB,
        Algorithm::SVM,
        Algorithm::QDA,
        Algorithm::DT,
        Algorithm::MLP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::DT => "DT",
            Algorithm::RF => "RF",
            Algorithm::NB => "NB",
            Algorithm::QDA => "QDA",
            Algorithm::SVM => "SVM",
            Algorithm::MLP => "MLP",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureProvenance {
    Geometric,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<ClassLabel>,
    pub provenance: FeatureProvenance,
}

impl LabeledDataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<ClassLabel>, provenance: FeatureProvenance) -> Result<Self> {
        let ds = LabeledDataset { x, y, provenance };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                found: self.y.len(),
            });
        }
        let d = self.dim();
        for (i, r) in self.x.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i * d + j });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for l in &self.y {
            c[l.index()] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            provenance: self.provenance,
        }
    }

    fn require_classes(&self, min: usize) -> Result<()> {
        self.validate()?;
        let present = self.class_counts().iter().filter(|&&c| c > 0).count();
        if present < min {
            return Err(Error::InsufficientData(format!(
                "{present} classes present, need at least {min}"
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of all six algorithms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub dt: DtConfig,
    pub rf: RfConfig,
    pub nb: NbConfig,
    pub qda: QdaConfig,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm")]
pub enum ClassifierModel {
    DT(DecisionTree),
    RF(RandomForest),
    NB(NaiveBayes),
    QDA(Qda),
    SVM(Svm),
    MLP(Mlp),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: ClassifierModel,
}

pub fn fit(
    algorithm: Algorithm,
    config: &ClassifierConfig,
    train: &LabeledDataset,
    seed: u64,
) -> Result<ClassifierModel> {
    train.require_classes(2)?;
    Ok(match algorithm {
        Algorithm::DT => ClassifierModel::DT(DecisionTree::fit(&config.dt, &train.x, &train.y)?),
        Algorithm::RF => ClassifierModel::RF(RandomForest::fit(&config.rf, &train.x, &train.y, seed)?),
        Algorithm::NB => ClassifierModel::NB(NaiveBayes::fit(&config.nb, &train.x, &train.y)?),
        Algorithm::QDA => ClassifierModel::QDA(Qda::fit(&config.qda, &train.x, &train.y)?),
        Algorithm::SVM => ClassifierModel::SVM(Svm::fit(&config.svm, &train.x, &train.y)?),
        Algorithm::MLP => ClassifierModel::MLP(Mlp::fit(&config.mlp, &train.x, &train.y, seed)?),
    })
}

impl ClassifierModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            ClassifierModel::DT(_) => Algorithm::DT,
            ClassifierModel::RF(_) => Algorithm::RF,
            ClassifierModel::NB(_) => Algorithm::NB,
            ClassifierModel::QDA(_) => Algorithm::QDA,
            ClassifierModel::SVM(_) => Algorithm::SVM,
            ClassifierModel::MLP(_) => Algorithm::MLP,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClassifierModel::DT(m) => m.dim,
            ClassifierModel::RF(m) => m.dim,
            ClassifierModel::NB(m) => m.dim(),
            ClassifierModel::QDA(m) => m.dim(),
            ClassifierModel::SVM(m) => m.dim(),
            ClassifierModel::MLP(m) => m.dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(match self {
            ClassifierModel::DT(m) => m.predict(x),
            ClassifierModel::RF(m) => m.predict(x),
            ClassifierModel::NB(m) => m.predict(x),
            ClassifierModel::QDA(m) => m.predict(x),
            ClassifierModel::SVM(m) => m.predict(x),
            ClassifierModel::MLP(m) => m.predict(x),
        })
    }

    pub fn predict_batch(&self, x: &[Vec<f64>]) -> Result<Vec<ClassLabel>> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::json("<model>", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::json("<model>", e))?;
        if f.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", f.version)));
        }
        Ok(f.model)
    }
}

/// Fits every requested algorithm on `train` and predicts `test`.
pub fn fit_predict_all(
    algorithms: &[Algorithm],
    config: &ClassifierConfig,
    train: &LabeledDataset,
    test: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<(Algorithm, Vec<ClassLabel>)>> {
    algorithms
        .iter()
        .map(|&a| {
            let m = fit(a, config, train, seed)?;
            Ok((a, m.predict_batch(test)?))
        })
        .collect()
}

/// Class indices present in `y`, ascending.
pub(crate) fn present_classes(y: &[ClassLabel]) -> Vec<ClassLabel> {
    let mut seen = [false; NUM_CLASSES];
    for l in y {
        seen[l.index()] = true;
    }
    ClassLabel::ALL.into_iter().filter(|l| seen[l.index()]).collect()
}
