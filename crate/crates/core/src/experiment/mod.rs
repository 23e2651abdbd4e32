//! Experiment configuration and the stages behind the command-line tool.
//!
//! Every stage reads and writes under `output_dir`:
//!
//! - `phantoms/`: one volume pair and one labels file per phantom.
//! - `extract/`: `features.csv`, `bifurcations.json` and `patches.bin`.
//! - `cae/`: autoencoder weights and loss log.
//! - `report/`: summary, confusion matrices, `report.json` and figures.
//! - `manifest.json`: config hash, seed and a checksum of every artifact.

mod config;
mod manifest;
mod patches;

pub use config::{
    parse_override, set_dotted, CaeSettings, CvSettings, ExperimentConfig, ExtractionSettings, PhantomSettings,
    Pipelines, CONFIG_VERSION, SEED_ENV,
};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use patches::{read_patch_store, write_patch_store};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cae::{self, CaeModel};
use crate::classify::{FeatureProvenance, LabeledDataset};
use crate::dimred::{DrMethod, DrSpec};
use crate::eval::{self, CvReport, PipelineSpec};
use crate::geomfeat::{self, FeatureContext, FeatureVector61};
use crate::label::ClassLabel;
use crate::phantom::{self, LabeledCenter, PhantomSpec, Variability};
use crate::vesselgraph::{self, Bifurcation, Point3, SegmentationMask};
use crate::volume::{self, Patch3D, Volume3D};
use crate::{rng, Error, Result};

pub const PHANTOM_DIR: &str = "phantoms";
pub const EXTRACT_DIR: &str = "extract";
pub const CAE_DIR: &str = "cae";
pub const REPORT_DIR: &str = "report";
pub const FEATURES_CSV: &str = "features.csv";
pub const BIFURCATIONS_JSON: &str = "bifurcations.json";
pub const PATCHES_BIN: &str = "patches.bin";
pub const CAE_WEIGHTS: &str = "cae_weights.bin";
pub const CAE_LOSS_CSV: &str = "loss.csv";

const PHANTOM_STREAM: u64 = 0x5048_0000;
pub(crate) const CAE_STREAM: u64 = 0x4341_0000;
const BALANCE_STREAM: u64 = 0x4241_0000;
const CAE_SUBSET_STREAM: u64 = 0x4353_0000;
const CV_STREAM: u64 = 0x4356_0000;
const CLASSIFIER_STREAM: u64 = 0x434c_0000;

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        },
    })
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn phantom_name(i: usize) -> String {
    format!("phantom_{i:03}")
}

/// Spec of phantom `i`: the template with this phantom's seed and the configured
/// variability and noise.
pub fn phantom_spec(cfg: &ExperimentConfig, i: usize) -> Result<PhantomSpec> {
    let mut spec = match &cfg.phantoms.template {
        Some(p) => PhantomSpec::read_json(p)?,
        None => phantom::default_cow_template(),
    };
    spec.rng_seed = rng::derive_seed(cfg.seed, PHANTOM_STREAM + i as u64);
    if !cfg.phantoms.variability {
        spec.variability = Variability {
            p_hypoplasia: 0.0,
            p_aplasia: 0.0,
            jitter_sigma_mm: 0.0,
            global_rotation_max_deg: 0.0,
        };
    }
    if let Some(s) = cfg.phantoms.noise_sigma {
        spec.raster.noise_sigma = s;
    }
    Ok(spec)
}

/// Generates the phantom corpus; returns the written files.
pub fn cmd_phantom(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    stage(
        "phantom",
        (|| {
            cfg.validate()?;
            let dir = cfg.output_dir.join(PHANTOM_DIR);
            create_dir(&dir)?;
            let per: Vec<Result<Vec<PathBuf>>> = (0..cfg.phantoms.count)
                .into_par_iter()
                .map(|i| {
                    let spec = phantom_spec(cfg, i)?;
                    let gt = phantom::realize(&spec)?;
                    let vol = phantom::rasterize(&gt.graph, &spec.raster, spec.rng_seed)?;
                    let name = phantom_name(i);
                    let vpath = dir.join(format!("{name}.json"));
                    volume::write_volume(&vol, &vpath)?;
                    let lpath = dir.join(format!("{name}_labels.json"));
                    gt.write_labels(&lpath)?;
                    log::info!(
                        "{name}: {} BoIs, {} BNs in ground truth",
                        gt.labeled_centers.len(),
                        gt.bn_centers.len()
                    );
                    Ok(vec![vpath.clone(), vpath.with_extension("raw"), lpath])
                })
                .collect();
            let files: Vec<PathBuf> = per.into_iter().collect::<Result<Vec<_>>>()?.concat();
            manifest::record(cfg, "phantom", &files)?;
            Ok(files)
        })(),
    )
}

/// Output of the segmentation-to-bifurcation chain on one volume.
pub struct Analysis {
    pub normalized: Volume3D,
    pub mask: SegmentationMask,
    pub bifurcations: Vec<Bifurcation>,
}

/// Normalize, threshold, thin, extract the centerline graph and collect bifurcations.
pub fn analyze_volume(v: &Volume3D, s: &ExtractionSettings) -> Analysis {
    let normalized = volume::normalize_volume_with(v, s.normalize_low_pct, s.normalize_high_pct);
    let mask = vesselgraph::segment(&normalized, s.threshold);
    let skeleton = vesselgraph::skeletonize(&mask);
    let graph = vesselgraph::extract_graph(&skeleton, &mask);
    let bifurcations = vesselgraph::collect_bifurcations(&graph);
    Analysis {
        normalized,
        mask,
        bifurcations,
    }
}

fn mask_centroid(mask: &SegmentationMask) -> Point3 {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for (i, &on) in mask.data.iter().enumerate() {
        if on {
            let p = mask.voxel_center_mm(i);
            (0..3).for_each(|k| sum[k] += p[k]);
            n += 1;
        }
    }
    if n == 0 {
        return [0.0; 3];
    }
    sum.map(|s| s / n as f64)
}

/// One detected bifurcation of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRecord {
    pub id: String,
    pub phantom: String,
    pub center_mm: Point3,
    pub center_voxel: [usize; 3],
    pub label: ClassLabel,
    /// Distance from a BN to the nearest ground-truth BoI center.
    pub nearest_boi_mm: Option<f64>,
    /// Part of the class-balanced evaluation set.
    pub balanced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub phantoms: usize,
    pub boi: usize,
    pub bn: usize,
    pub skipped: usize,
    pub balanced: usize,
}

struct PhantomRows {
    features: Vec<FeatureVector61>,
    records: Vec<BifurcationRecord>,
    skipped: usize,
}

fn phantom_paths(cfg: &ExperimentConfig, i: usize) -> (PathBuf, PathBuf) {
    let dir = cfg.output_dir.join(PHANTOM_DIR);
    let name = phantom_name(i);
    (
        dir.join(format!("{name}.json")),
        dir.join(format!("{name}_labels.json")),
    )
}

fn extract_phantom(cfg: &ExperimentConfig, i: usize) -> Result<PhantomRows> {
    let (vpath, lpath) = phantom_paths(cfg, i);
    let vol = volume::read_volume(&vpath)?;
    let (centers, _) = phantom::read_labels(&lpath)?;
    let a = analyze_volume(&vol, &cfg.extraction);
    let labeled = vesselgraph::match_to_centers(&a.bifurcations, &centers, cfg.extraction.match_tol_mm);
    let all_centers: Vec<Point3> = labeled.iter().map(|b| b.center).collect();
    let dims = vol.dims();
    let spacing = vol.spacing();
    let ctx = FeatureContext {
        volume_origin: vol.origin(),
        volume_extent_mm: [0, 1, 2].map(|k| dims[k] as f64 * spacing[k]),
        all_centers: &all_centers,
        tree_centroid: mask_centroid(&a.mask),
    };
    let name = phantom_name(i);
    let mut rows = PhantomRows {
        features: Vec::new(),
        records: Vec::new(),
        skipped: 0,
    };
    for (k, b) in labeled.iter().enumerate() {
        let label = b.label.unwrap_or(ClassLabel::BN);
        let values = match geomfeat::features(b, &ctx) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{name}: bifurcation {k} skipped: {e}");
                rows.skipped += 1;
                continue;
            }
        };
        let Some(center_voxel) = vol.world_to_voxel(b.center) else {
            rows.skipped += 1;
            continue;
        };
        let id = format!("{name}#{k:03}");
        rows.features.push(FeatureVector61 {
            values,
            label,
            bif_id: id.clone(),
        });
        rows.records.push(BifurcationRecord {
            id,
            phantom: name.clone(),
            center_mm: b.center,
            center_voxel,
            label,
            nearest_boi_mm: (!label.is_boi()).then(|| nearest(b.center, &centers)).flatten(),
            balanced: false,
        });
    }
    Ok(rows)
}

fn nearest(p: Point3, centers: &[LabeledCenter]) -> Option<f64> {
    centers
        .iter()
        .map(|c| (0..3).map(|k| (p[k] - c.pos[k]).powi(2)).sum::<f64>().sqrt())
        .min_by(|a, b| a.total_cmp(b))
}

/// Runs the extraction chain on every phantom, writes the feature table, the
/// bifurcation table and the patches of the balanced set.
pub fn cmd_extract(cfg: &ExperimentConfig) -> Result<ExtractSummary> {
    stage(
        "extract",
        (|| {
            cfg.validate()?;
            for i in 0..cfg.phantoms.count {
                let (v, l) = phantom_paths(cfg, i);
                for p in [v, l] {
                    if !p.exists() {
                        return Err(Error::InsufficientData(format!("missing phantom file {}", p.display())));
                    }
                }
            }
            let per: Vec<Result<PhantomRows>> = (0..cfg.phantoms.count)
                .into_par_iter()
                .map(|i| extract_phantom(cfg, i))
                .collect();
            let (mut features, mut records, mut skipped) = (Vec::new(), Vec::new(), 0);
            for r in per {
                let r = r?;
                features.extend(r.features);
                records.extend(r.records);
                skipped += r.skipped;
            }
            let y: Vec<ClassLabel> = records.iter().map(|r| r.label).collect();
            let keep = eval::balance_indices(&y, rng::derive_seed(cfg.seed, BALANCE_STREAM))?;
            keep.iter().for_each(|&i| records[i].balanced = true);

            let dir = cfg.output_dir.join(EXTRACT_DIR);
            create_dir(&dir)?;
            let fpath = dir.join(FEATURES_CSV);
            geomfeat::write_features_csv(&fpath, &features)?;
            let bpath = dir.join(BIFURCATIONS_JSON);
            let text = serde_json::to_string_pretty(&records).map_err(|e| Error::json(&bpath, e))?;
            std::fs::write(&bpath, text + "\n").map_err(|e| Error::io(&bpath, e))?;
            let mut files = vec![fpath, bpath];
            if cfg.pipelines.cae() {
                let ppath = dir.join(PATCHES_BIN);
                write_patch_store(&ppath, &balanced_patches(cfg, &records)?)?;
                files.push(ppath);
            }
            let summary = ExtractSummary {
                phantoms: cfg.phantoms.count,
                boi: y.iter().filter(|l| l.is_boi()).count(),
                bn: y.iter().filter(|l| !l.is_boi()).count(),
                skipped,
                balanced: keep.len(),
            };
            log::info!(
                "extracted {} BoIs and {} BNs from {} phantoms ({} skipped); balanced set of {}",
                summary.boi,
                summary.bn,
                summary.phantoms,
                summary.skipped,
                summary.balanced
            );
            manifest::record(cfg, "extract", &files)?;
            Ok(summary)
        })(),
    )
}

fn balanced_patches(cfg: &ExperimentConfig, records: &[BifurcationRecord]) -> Result<Vec<(String, Patch3D)>> {
    let per: Vec<Result<Vec<(String, Patch3D)>>> = (0..cfg.phantoms.count)
        .into_par_iter()
        .map(|i| {
            let name = phantom_name(i);
            let wanted: Vec<&BifurcationRecord> = records.iter().filter(|r| r.balanced && r.phantom == name).collect();
            if wanted.is_empty() {
                return Ok(Vec::new());
            }
            let vol = volume::read_volume(phantom_paths(cfg, i).0)?;
            let e = &cfg.extraction;
            let norm = volume::normalize_volume_with(&vol, e.normalize_low_pct, e.normalize_high_pct);
            wanted
                .into_iter()
                .map(|r| {
                    let mut p = volume::extract_patch(&norm, r.center_voxel, e.patch_side)?;
                    p.source_volume_id = name.clone();
                    p.label = Some(r.label);
                    Ok((r.id.clone(), p))
                })
                .collect()
        })
        .collect();
    Ok(per.into_iter().collect::<Result<Vec<_>>>()?.concat())
}

pub fn read_records(cfg: &ExperimentConfig) -> Result<Vec<BifurcationRecord>> {
    let path = cfg.output_dir.join(EXTRACT_DIR).join(BIFURCATIONS_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

/// Geometric features of the balanced set, in table order.
pub fn geometric_dataset(cfg: &ExperimentConfig) -> Result<(Vec<String>, LabeledDataset)> {
    let records = read_records(cfg)?;
    let rows = geomfeat::read_features_csv(cfg.output_dir.join(EXTRACT_DIR).join(FEATURES_CSV))?;
    if rows.len() != records.len() {
        return Err(Error::SizeMismatch {
            expected: records.len(),
            found: rows.len(),
        });
    }
    let (mut ids, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (r, f) in records.iter().zip(rows) {
        if f.bif_id != r.id {
            return Err(Error::InvalidArgument(format!(
                "feature row {} out of step with {}",
                f.bif_id, r.id
            )));
        }
        if r.balanced {
            ids.push(f.bif_id);
            x.push(f.values);
            y.push(f.label);
        }
    }
    Ok((ids, LabeledDataset::new(x, y, FeatureProvenance::Geometric)?))
}

fn read_patches(cfg: &ExperimentConfig) -> Result<Vec<(String, Patch3D)>> {
    read_patch_store(cfg.output_dir.join(EXTRACT_DIR).join(PATCHES_BIN))
}

/// Trains the autoencoder on a seeded subset of the balanced patches.
pub fn cmd_train_cae(cfg: &ExperimentConfig) -> Result<CaeModel> {
    stage(
        "train-cae",
        (|| {
            cfg.validate()?;
            let patches = read_patches(cfg)?;
            let mut order: Vec<usize> = (0..patches.len()).collect();
            rng::shuffle(&mut order, &mut rng::stream(cfg.seed, CAE_SUBSET_STREAM));
            order.truncate(cfg.cae.train_patches);
            order.sort_unstable();
            let train: Vec<Patch3D> = order.iter().map(|&i| patches[i].1.clone()).collect();
            log::info!(
                "training autoencoder on {} patches for {} epochs",
                train.len(),
                cfg.cae.epochs
            );
            let model = cae::train(&cfg.cae.architecture, &train, &cfg.cae_train_config())?;
            let dir = cfg.output_dir.join(CAE_DIR);
            create_dir(&dir)?;
            let w = dir.join(CAE_WEIGHTS);
            model.write_weights(&w)?;
            let l = dir.join(CAE_LOSS_CSV);
            model.write_loss_csv(&l)?;
            manifest::record(cfg, "train-cae", &[w, l])?;
            Ok(model)
        })(),
    )
}

/// Latent features of the balanced set, row-aligned with [`geometric_dataset`].
pub fn latent_dataset(cfg: &ExperimentConfig, model: &CaeModel) -> Result<(Vec<String>, LabeledDataset)> {
    let patches = read_patches(cfg)?;
    let ids = patches.iter().map(|p| p.0.clone()).collect();
    let just: Vec<Patch3D> = patches.into_iter().map(|p| p.1).collect();
    let rows: Vec<Result<Vec<f64>>> = just.par_iter().map(|p| Ok(model.forward_encode(p)?.values)).collect();
    let x = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let y = just
        .iter()
        .map(|p| {
            p.label
                .ok_or_else(|| Error::InvalidArgument("unlabeled patch in store".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, LabeledDataset::new(x, y, FeatureProvenance::Latent)?))
}

/// Every configured (reduction × classifier) pair on geometric features and every
/// classifier on latent features, under one shared fold plan.
pub fn evaluate(
    cfg: &ExperimentConfig,
    geometric: Option<&LabeledDataset>,
    latent: Option<&LabeledDataset>,
) -> Result<Vec<CvReport>> {
    let mut jobs: Vec<(PipelineSpec, &LabeledDataset)> = Vec::new();
    let spec = |algorithm, dr| PipelineSpec {
        algorithm,
        dr,
        classifier: cfg.classifier_config.clone(),
        seed: rng::derive_seed(cfg.seed, CLASSIFIER_STREAM),
    };
    if let Some(g) = geometric {
        for &dr in &cfg.dr {
            for &a in &cfg.classifiers {
                jobs.push((spec(a, dr), g));
            }
        }
    }
    if let Some(l) = latent {
        for &a in &cfg.classifiers {
            jobs.push((spec(a, DrSpec::with_defaults(DrMethod::None)), l));
        }
    }
    let cv_seed = rng::derive_seed(cfg.seed, CV_STREAM);
    jobs.par_iter()
        .map(|(s, d)| {
            let plan = eval::stratified_folds(&d.y, cfg.cv.folds, cv_seed)?;
            let r = eval::cross_validate(s, d, &plan)?;
            log::info!(
                "{} {} {}: accuracy {:.4}, macro-F1 {:.4}",
                r.config.algorithm,
                r.config.dr_method,
                r.config.n_components,
                r.mean_accuracy,
                r.mean_macro_f1
            );
            Ok(r)
        })
        .collect()
}

fn load_or_train_cae(cfg: &ExperimentConfig) -> Result<CaeModel> {
    let w = cfg.output_dir.join(CAE_DIR).join(CAE_WEIGHTS);
    if w.exists() {
        let m = CaeModel::read_weights(&w)?;
        if m.architecture == cfg.cae.architecture {
            return Ok(m);
        }
        log::info!("stored autoencoder has a different architecture; retraining");
    }
    cmd_train_cae(cfg)
}

/// Cross-validates every enabled configuration and writes the report.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<CvReport>> {
    stage(
        "run",
        (|| {
            cfg.validate()?;
            let geometric = if cfg.pipelines.geometric() {
                Some(geometric_dataset(cfg)?.1)
            } else {
                None
            };
            let latent = if cfg.pipelines.cae() {
                let m = load_or_train_cae(cfg)?;
                Some(latent_dataset(cfg, &m)?.1)
            } else {
                None
            };
            let reports = evaluate(cfg, geometric.as_ref(), latent.as_ref())?;
            let files = eval::emit_report(&reports, cfg.output_dir.join(REPORT_DIR))?;
            manifest::record(cfg, "run", &files)?;
            Ok(reports)
        })(),
    )
}

pub fn read_reports(cfg: &ExperimentConfig) -> Result<Vec<CvReport>> {
    #[derive(Deserialize)]
    struct ReportFile {
        reports: Vec<CvReport>,
    }
    let path = cfg.output_dir.join(REPORT_DIR).join(eval::REPORT_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let f: ReportFile = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    Ok(f.reports)
}

/// Re-emits the report files from `report.json` and checks them against the manifest.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    stage(
        "report",
        (|| {
            cfg.validate()?;
            let reports = read_reports(cfg)?;
            let files = eval::emit_report(&reports, cfg.output_dir.join(REPORT_DIR))?;
            manifest::record(cfg, "run", &files)?;
            Ok(files)
        })(),
    )
}
