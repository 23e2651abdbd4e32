use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Checksums of every artifact, keyed by stage and path relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: BTreeMap<String, BTreeMap<String, String>>,
}

impl Manifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join(MANIFEST_FILE)
    }

    pub fn read(out: &Path) -> Result<Option<Manifest>> {
        let p = Self::path(out);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::json(&p, e))
    }

    fn write(&self, out: &Path) -> Result<()> {
        let p = Self::path(out);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&p, e))?;
        std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    }
}

pub fn sha256_file(p: &Path) -> Result<String> {
    let mut f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(p, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hashes the stage's files into the manifest. Under an unchanged config, a file
/// whose hash differs from the recorded one is an error: the stage is expected
/// to be reproducible byte for byte.
pub(super) fn record(cfg: &ExperimentConfig, stage: &str, files: &[PathBuf]) -> Result<()> {
    let out = &cfg.output_dir;
    let fingerprint = cfg.fingerprint();
    let mut m = match Manifest::read(out)? {
        Some(m) if m.config_sha256 == fingerprint => m,
        _ => Manifest {
            config_sha256: fingerprint,
            seed: cfg.seed,
            stages: BTreeMap::new(),
        },
    };
    let mut fresh = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
        fresh.insert(rel, sha256_file(f)?);
    }
    if let Some(old) = m.stages.get(stage) {
        for (rel, h) in &fresh {
            if let Some(prev) = old.get(rel) {
                if prev != h {
                    return Err(Error::ArtifactMismatch(format!(
                        "{rel} differs from the recorded run under the same config ({prev} vs {h})"
                    )));
                }
            }
        }
    }
    m.stages.insert(stage.to_string(), fresh);
    m.write(out)
}
