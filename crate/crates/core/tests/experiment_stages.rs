use cowlab::classify::Algorithm;
use cowlab::dimred::{DrMethod, DrSpec};
use cowlab::experiment::*;
use cowlab::{Error, ErrorCategory};

fn small_config(dir: &std::path::Path, count: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = dir.to_path_buf();
    cfg.phantoms.count = count;
    cfg.pipelines = Pipelines::Geometric;
    cfg.classifiers = vec![Algorithm::DT, Algorithm::NB];
    cfg.dr = vec![
        DrSpec::with_defaults(DrMethod::Lda),
        DrSpec::with_defaults(DrMethod::Pca),
    ];
    cfg.cv.folds = 3;
    cfg
}

#[test]
fn zero_phantoms_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = cmd_phantom(&small_config(dir.path(), 0)).unwrap_err();
    assert_eq!(e.category(), ErrorCategory::Config);
}

#[test]
fn one_phantom_writes_volume_pair_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_phantom(&small_config(dir.path(), 1)).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["phantom_000.json", "phantom_000.raw", "phantom_000_labels.json"]
    );
    assert!(files.iter().all(|f| f.exists()));
    let m = Manifest::read(dir.path()).unwrap().unwrap();
    assert_eq!(m.stages["phantom"].len(), 3);
}

#[test]
fn extract_without_phantoms_fails_in_its_stage() {
    let dir = tempfile::tempdir().unwrap();
    match cmd_extract(&small_config(dir.path(), 1)).unwrap_err() {
        Error::Stage { stage, .. } => assert_eq!(stage, "extract"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn geometric_run_is_reproducible_and_guarded_by_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    cmd_phantom(&cfg).unwrap();
    let s = cmd_extract(&cfg).unwrap();
    assert!(s.boi > 13 && s.bn >= s.boi);
    assert_eq!(s.balanced, 2 * s.boi);
    let reports = cmd_run(&cfg).unwrap();
    assert_eq!(reports.len(), cfg.dr.len() * cfg.classifiers.len());
    let first = Manifest::read(dir.path()).unwrap().unwrap();

    // the whole chain again, from scratch, must reproduce every byte
    cmd_phantom(&cfg).unwrap();
    cmd_extract(&cfg).unwrap();
    cmd_run(&cfg).unwrap();
    cmd_report(&cfg).unwrap();
    assert_eq!(Manifest::read(dir.path()).unwrap().unwrap(), first);

    let mut tampered = first.clone();
    let entry = tampered.stages.get_mut("extract").unwrap().values_mut().next().unwrap();
    *entry = "0".repeat(64);
    std::fs::write(
        dir.path().join(MANIFEST_FILE),
        serde_json::to_string(&tampered).unwrap(),
    )
    .unwrap();
    match cmd_extract(&cfg).unwrap_err() {
        Error::Stage { source, .. } => assert!(matches!(*source, Error::ArtifactMismatch(_))),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn changed_config_starts_a_fresh_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 1);
    cmd_phantom(&cfg).unwrap();
    let before = Manifest::read(dir.path()).unwrap().unwrap();
    cfg.seed += 1;
    cmd_phantom(&cfg).unwrap();
    let after = Manifest::read(dir.path()).unwrap().unwrap();
    assert_ne!(before.config_sha256, after.config_sha256);
    assert_ne!(before.stages["phantom"], after.stages["phantom"]);
}

#[test]
fn zero_variability_corpus_yields_every_boi() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 2);
    cfg.phantoms.variability = false;
    cmd_phantom(&cfg).unwrap();
    let s = cmd_extract(&cfg).unwrap();
    assert_eq!(s.boi, 26);
    let per_phantom = read_records(&cfg)
        .unwrap()
        .iter()
        .filter(|r| r.label.is_boi() && r.phantom == "phantom_001")
        .count();
    assert_eq!(per_phantom, 13);
}
