use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cae::{CaeArchitecture, TrainConfig};
use crate::classify::{Algorithm, ClassifierConfig};
use crate::dimred::{DrMethod, DrSpec};
use crate::eval::DEFAULT_FOLDS;
use crate::phantom::PhantomSpec;
use crate::vesselgraph::DEFAULT_MATCH_TOL_MM;
use crate::volume::PATCH_SIDE;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_ENV: &str = "COWLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipelines {
    Geometric,
    Cae,
    Both,
}

impl Pipelines {
    pub fn geometric(self) -> bool {
        matches!(self, Pipelines::Geometric | Pipelines::Both)
    }

    pub fn cae(self) -> bool {
        matches!(self, Pipelines::Cae | Pipelines::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSettings {
    pub count: usize,
    /// Anatomical variability (hypoplasia, aplasia, jitter, rotation) on or off.
    pub variability: bool,
    /// Overrides the template's noise level when set.
    pub noise_sigma: Option<f64>,
    /// Phantom spec JSON; the bundled Circle-of-Willis template when absent.
    pub template: Option<PathBuf>,
}

impl Default for PhantomSettings {
    fn default() -> Self {
        PhantomSettings {
            count: 91,
            variability: true,
            noise_sigma: None,
            template: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSettings {
    /// Segmentation threshold on the normalized volume.
    pub threshold: f64,
    pub normalize_low_pct: f64,
    pub normalize_high_pct: f64,
    pub match_tol_mm: f64,
    pub patch_side: usize,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        ExtractionSettings {
            threshold: 0.5,
            normalize_low_pct: 1.0,
            normalize_high_pct: 99.9,
            match_tol_mm: DEFAULT_MATCH_TOL_MM,
            patch_side: PATCH_SIDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaeSettings {
    pub architecture: CaeArchitecture,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Patches drawn from the balanced set for training.
    pub train_patches: usize,
}

impl Default for CaeSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        CaeSettings {
            architecture: CaeArchitecture::default(),
            lr: t.lr,
            batch: t.batch,
            epochs: 12,
            train_patches: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings { folds: DEFAULT_FOLDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Root of every derived seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub phantoms: PhantomSettings,
    pub extraction: ExtractionSettings,
    pub pipelines: Pipelines,
    pub dr: Vec<DrSpec>,
    pub classifiers: Vec<Algorithm>,
    pub classifier_config: ClassifierConfig,
    pub cv: CvSettings,
    pub cae: CaeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seed: 2024,
            output_dir: PathBuf::from("cowlab-out"),
            phantoms: PhantomSettings::default(),
            extraction: ExtractionSettings::default(),
            pipelines: Pipelines::Both,
            dr: [DrMethod::Lda, DrMethod::Pca, DrMethod::Isomap]
                .into_iter()
                .map(DrSpec::with_defaults)
                .collect(),
            classifiers: Algorithm::ALL.to_vec(),
            classifier_config: ClassifierConfig::default(),
            cv: CvSettings::default(),
            cae: CaeSettings::default(),
        }
    }
}

/// Writes `value` at a dotted `path` inside a JSON document, creating objects as needed.
pub fn set_dotted(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let mut cur = doc;
    for (i, k) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{path:?}: {} is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert((*k).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*k).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one key")
}

/// Parses `key=value`; the value is read as JSON when it parses, otherwise as a string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl ExperimentConfig {
    /// Loads `path` (or the defaults), applies dotted overrides, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(ExperimentConfig::default()).expect("defaults serialize"),
        };
        for o in overrides {
            let (k, v) = parse_override(o)?;
            set_dotted(&mut doc, &k, v)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `COWLAB_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} is not {CONFIG_VERSION}", self.version));
        }
        if self.phantoms.count == 0 {
            return bad("phantoms.count must be at least 1".into());
        }
        if let Some(s) = self.phantoms.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("phantoms.noise_sigma {s} must be finite and non-negative"));
            }
        }
        if let Some(t) = &self.phantoms.template {
            PhantomSpec::read_json(t).map_err(|e| Error::Config(format!("phantoms.template: {e}")))?;
        }
        let e = &self.extraction;
        if !(e.threshold > 0.0 && e.threshold < 1.0) {
            return bad(format!("extraction.threshold {} outside (0, 1)", e.threshold));
        }
        if !(0.0 <= e.normalize_low_pct && e.normalize_low_pct < e.normalize_high_pct && e.normalize_high_pct <= 100.0)
        {
            return bad("extraction percentiles must satisfy 0 <= low < high <= 100".into());
        }
        if !(e.match_tol_mm > 0.0) || e.patch_side == 0 {
            return bad("extraction.match_tol_mm and patch_side must be positive".into());
        }
        if self.classifiers.is_empty() {
            return bad("no classifiers selected".into());
        }
        if self.pipelines.geometric() && self.dr.is_empty() {
            return bad("geometric pipeline needs at least one dr entry".into());
        }
        for d in &self.dr {
            if d.method != DrMethod::None && d.n_components == 0 {
                return bad(format!("{} needs a positive component count", d.method.as_str()));
            }
        }
        if self.cv.folds < 2 {
            return bad(format!("cv.folds {} must be at least 2", self.cv.folds));
        }
        if self.pipelines.cae() {
            let c = &self.cae;
            c.architecture.validate()?;
            if c.architecture.input_side != e.patch_side {
                return bad(format!(
                    "cae input side {} differs from patch side {}",
                    c.architecture.input_side, e.patch_side
                ));
            }
            if c.epochs == 0 || c.batch == 0 || !(c.lr > 0.0) || c.train_patches == 0 {
                return bad("cae epochs, batch, lr and train_patches must be positive".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn cae_train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.cae.lr,
            batch: self.cae.batch,
            epochs: self.cae.epochs,
            seed: crate::rng::derive_seed(self.seed, super::CAE_STREAM),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
    }

    #[test]
    fn dotted_overrides() {
        let c = ExperimentConfig::load(
            None,
            &[
                "phantoms.count=3".into(),
                "cv.folds=5".into(),
                "output_dir=/tmp/x".into(),
                "pipelines=\"geometric\"".into(),
                "classifiers=[\"DT\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.phantoms.count, 3);
        assert_eq!(c.cv.folds, 5);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.pipelines, Pipelines::Geometric);
        assert_eq!(c.classifiers, vec![Algorithm::DT]);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for o in [
            "phantoms.count=0",
            "cv.folds=1",
            "phantoms.cuont=3",
            "version=2",
            "extraction.threshold=1.5",
            "seed",
        ] {
            let e = ExperimentConfig::load(None, &[o.to_string()]).unwrap_err();
            assert_eq!(e.category(), crate::error::ErrorCategory::Config, "{o}: {e}");
        }
        assert!(ExperimentConfig::load(None, &["phantoms.template=\"/nonexistent.json\"".into()]).is_err());
    }

    #[test]
    fn set_dotted_creates_objects() {
        let mut v = serde_json::json!({"a": 1});
        set_dotted(&mut v, "b.c", serde_json::json!(2)).unwrap();
        assert_eq!(v["b"]["c"], 2);
        assert!(set_dotted(&mut v, "a.x", serde_json::json!(3)).is_err());
        assert!(set_dotted(&mut v, "a..x", serde_json::json!(3)).is_err());
    }
}
