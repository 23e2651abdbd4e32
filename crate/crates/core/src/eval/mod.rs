//! Class balancing, stratified cross-validation, metrics and reports.

mod metrics;
mod report;

pub use metrics::{ClassScore, ConfusionMatrix};
pub use report::{config_name, emit_report, CONFUSION_PREFIX, FIGURES_DIR, REPORT_JSON, SUMMARY_CSV};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, Algorithm, ClassifierConfig, ClassifierModel, FeatureProvenance, LabeledDataset};
use crate::dimred::{DrMethod, DrSpec, Reducer, Standardizer};
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::{rng, Error, Result};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
const BALANCE_STREAM: u64 = 0x42414c;
const FOLD_STREAM: u64 = 0x464f4c44;
const SPLIT_STREAM: u64 = 0x53504c54;

/// Indices of a balanced subset: every BoI plus as many BNs, drawn without
/// replacement. Returned in ascending order.
pub fn balance_indices(y: &[ClassLabel], seed: u64) -> Result<Vec<usize>> {
    let (boi, mut bn): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| y[i].is_boi());
    if bn.len() < boi.len() {
        return Err(Error::InsufficientData(format!(
            "{} BNs cannot balance {} BoIs",
            bn.len(),
            boi.len()
        )));
    }
    rng::shuffle(&mut bn, &mut rng::stream(seed, BALANCE_STREAM));
    bn.truncate(boi.len());
    let mut keep = [boi, bn].concat();
    keep.sort_unstable();
    Ok(keep)
}

pub fn balance_dataset(data: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    Ok(data.subset(&balance_indices(&data.y, seed)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
    /// Classes with fewer samples than folds, so some folds miss them.
    pub small_classes: Vec<ClassLabel>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every index outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Per class, shuffle the indices and deal them round-robin starting at fold 0.
pub fn stratified_folds(y: &[ClassLabel], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if y.len() < k {
        return Err(Error::InsufficientData(format!("{} samples for {k} folds", y.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut small_classes = Vec::new();
    for c in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            small_classes.push(c);
        }
        rng::shuffle(&mut idx, &mut rng::stream(seed, FOLD_STREAM + c.index() as u64));
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldPlan {
        k,
        seed,
        folds,
        small_classes,
    })
}

/// Stratified split: per class, `round(n_c · test_fraction)` shuffled rows go to the test side.
pub fn train_test_split(y: &[ClassLabel], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        rng::shuffle(&mut idx, &mut rng::stream(seed, SPLIT_STREAM + c.index() as u64));
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData(format!(
            "split of {} rows at {test_fraction} leaves an empty side",
            y.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A fitted model that labels one feature row at a time.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<ClassLabel>;
}

/// Standardize, optionally reduce, then classify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub algorithm: Algorithm,
    pub dr: DrSpec,
    pub classifier: ClassifierConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub standardizer: Standardizer,
    pub reducer: Option<Reducer>,
    pub model: ClassifierModel,
}

impl FittedPipeline {
    /// Every statistic comes from `train`; nothing else is visible here.
    pub fn fit(spec: &PipelineSpec, train: &LabeledDataset, seed: u64) -> Result<Self> {
        let standardizer = Standardizer::fit(&train.x)?;
        let z: Vec<Vec<f64>> = train.x.iter().map(|r| standardizer.transform(r)).collect();
        let mut dr = spec.dr;
        if dr.method == DrMethod::Lda {
            // a fold missing rare classes supports fewer discriminant directions
            let classes = train.class_counts().iter().filter(|&&c| c > 0).count();
            let cap = classes.saturating_sub(1).min(train.dim()).max(1);
            if dr.n_components > cap {
                log::debug!("LDA components reduced from {} to {cap} for this fold", dr.n_components);
                dr.n_components = cap;
            }
        }
        let reducer = dr.fit(&z, &train.y)?;
        let features = match &reducer {
            Some(r) => z.iter().map(|v| r.transform(v)).collect(),
            None => z,
        };
        let reduced = LabeledDataset::new(features, train.y.clone(), train.provenance)?;
        let model = classify::fit(spec.algorithm, &spec.classifier, &reduced, seed)?;
        Ok(FittedPipeline {
            standardizer,
            reducer,
            model,
        })
    }
}

impl Predictor for FittedPipeline {
    fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        let z = self.standardizer.transform(x);
        match &self.reducer {
            Some(r) => self.model.predict(&r.transform(&z)),
            None => self.model.predict(&z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub algorithm: String,
    /// `none`, `pca`, `lda`, `isomap`, or `cae` for latent features.
    pub dr_method: String,
    pub n_components: usize,
    pub provenance: FeatureProvenance,
    pub seed: u64,
}

impl ConfigFingerprint {
    pub fn for_pipeline(spec: &PipelineSpec, data: &LabeledDataset) -> Self {
        let (dr_method, n_components) = match (spec.dr.method, data.provenance) {
            (DrMethod::None, FeatureProvenance::Latent) => ("cae".to_string(), data.dim()),
            (DrMethod::None, FeatureProvenance::Geometric) => ("none".to_string(), data.dim()),
            (m, _) => (m.as_str().to_string(), spec.dr.n_components),
        };
        ConfigFingerprint {
            algorithm: spec.algorithm.to_string(),
            dr_method,
            n_components,
            provenance: data.provenance,
            seed: spec.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: ConfigFingerprint,
    pub k: usize,
    pub n_samples: usize,
    pub fold_accuracy: Vec<f64>,
    pub fold_macro_f1: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_accuracy: f64,
    pub std_macro_f1: f64,
    /// Accuracy and F1 of the pooled confusion matrix.
    pub pooled_accuracy: f64,
    pub pooled_macro_f1: f64,
    pub pooled_micro_f1: f64,
    pub per_class: Vec<ClassScore>,
    /// Classes with no samples at all, left out of every macro average.
    pub excluded_classes: Vec<ClassLabel>,
    pub confusion: ConfusionMatrix,
    pub flags: Vec<String>,
}

/// Cross-validation with a caller-supplied fit. `fit` receives the fold number and
/// a dataset holding only that fold's training rows; test rows reach the fitted
/// predictor one at a time, after fitting.
pub fn cross_validate_with<P, F>(
    config: ConfigFingerprint,
    data: &LabeledDataset,
    plan: &FoldPlan,
    fit: F,
) -> Result<CvReport>
where
    P: Predictor,
    F: Fn(usize, &LabeledDataset) -> Result<P> + Sync,
{
    data.validate()?;
    check_plan(plan, data.len())?;
    let per_fold: Vec<Result<(ConfusionMatrix, Vec<String>)>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let train = data.subset(&plan.train_indices(f));
            let model = fit(f, &train)?;
            let mut seen = [false; NUM_CLASSES];
            train.y.iter().for_each(|l| seen[l.index()] = true);
            let mut cm = ConfusionMatrix::default();
            let mut flags = Vec::new();
            for &i in &plan.folds[f] {
                let truth = data.y[i];
                if !seen[truth.index()] {
                    seen[truth.index()] = true;
                    flags.push(format!("fold {}: no training rows of class {}", f + 1, truth));
                }
                cm.add(truth, model.predict(&data.x[i])?);
            }
            Ok((cm, flags))
        })
        .collect();
    let mut confusion = ConfusionMatrix::default();
    let (mut fold_accuracy, mut fold_macro_f1, mut flags) = (Vec::new(), Vec::new(), Vec::new());
    for r in per_fold {
        let (cm, fl) = r?;
        fold_accuracy.push(cm.accuracy());
        fold_macro_f1.push(cm.macro_f1());
        confusion.merge(&cm);
        flags.extend(fl);
    }
    for c in &plan.small_classes {
        flags.push(format!("class {c} has fewer samples than folds"));
    }
    let excluded_classes = confusion.unsupported_classes();
    Ok(CvReport {
        config,
        k: plan.k,
        n_samples: data.len(),
        mean_accuracy: metrics::mean(&fold_accuracy),
        mean_macro_f1: metrics::mean(&fold_macro_f1),
        std_accuracy: metrics::std_dev(&fold_accuracy),
        std_macro_f1: metrics::std_dev(&fold_macro_f1),
        pooled_accuracy: confusion.accuracy(),
        pooled_macro_f1: confusion.macro_f1(),
        pooled_micro_f1: confusion.micro_f1(),
        per_class: ClassLabel::ALL.into_iter().map(|c| confusion.class_score(c)).collect(),
        excluded_classes,
        fold_accuracy,
        fold_macro_f1,
        confusion,
        flags,
    })
}

pub fn cross_validate(spec: &PipelineSpec, data: &LabeledDataset, plan: &FoldPlan) -> Result<CvReport> {
    cross_validate_with(ConfigFingerprint::for_pipeline(spec, data), data, plan, |f, train| {
        FittedPipeline::fit(spec, train, rng::derive_seed(spec.seed, f as u64))
    })
}

fn check_plan(plan: &FoldPlan, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in plan.folds.iter().flatten() {
        if i >= n || seen[i] {
            return Err(Error::InvalidArgument(format!(
                "fold plan is not a partition of {n} rows"
            )));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) || plan.folds.len() != plan.k {
        return Err(Error::InvalidArgument(format!(
            "fold plan is not a partition of {n} rows"
        )));
    }
    Ok(())
}
