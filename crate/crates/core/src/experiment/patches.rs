//! Binary store of labeled patches: magic, version, JSON header, then f32 voxels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::label::ClassLabel;
use crate::volume::Patch3D;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"COWLBPAT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    id: String,
    source_volume_id: String,
    center_voxel: [usize; 3],
    label: Option<ClassLabel>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    side: usize,
    entries: Vec<Entry>,
}

/// Writes `(id, patch)` pairs; every patch must share one side length.
pub fn write_patch_store(path: impl AsRef<Path>, patches: &[(String, Patch3D)]) -> Result<()> {
    let path = path.as_ref();
    let side = patches.first().map_or(0, |p| p.1.side);
    if let Some((id, _)) = patches
        .iter()
        .find(|p| p.1.side != side || p.1.data.len() != side.pow(3))
    {
        return Err(Error::InvalidArgument(format!("patch {id} does not have side {side}")));
    }
    let header = Header {
        side,
        entries: patches
            .iter()
            .map(|(id, p)| Entry {
                id: id.clone(),
                source_volume_id: p.source_volume_id.clone(),
                center_voxel: p.center_voxel,
                label: p.label,
            })
            .collect(),
    };
    let h = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
    let mut buf = Vec::with_capacity(20 + h.len() + 4 * patches.len() * side.pow(3));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(h.len() as u64).to_le_bytes());
    buf.extend_from_slice(&h);
    for (_, p) in patches {
        for v in &p.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_patch_store(path: impl AsRef<Path>) -> Result<Vec<(String, Patch3D)>> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::InvalidArgument(format!("{}: {m}", path.display()));
    if buf.len() < 20 || &buf[..8] != MAGIC {
        return Err(bad("not a patch store"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported patch store version {version}")));
    }
    let hlen = u64::from_le_bytes(buf[12..20].try_into().expect("8 bytes")) as usize;
    let h = buf.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(h).map_err(|e| Error::json(path, e))?;
    let n = header.side.pow(3);
    let body = &buf[20 + hlen..];
    if body.len() != 4 * n * header.entries.len() {
        return Err(Error::SizeMismatch {
            expected: 4 * n * header.entries.len(),
            found: body.len(),
        });
    }
    Ok(header
        .entries
        .into_iter()
        .zip(body.chunks_exact(4 * n.max(1)))
        .map(|(e, raw)| {
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            (
                e.id,
                Patch3D {
                    side: header.side,
                    data,
                    source_volume_id: e.source_volume_id,
                    center_voxel: e.center_voxel,
                    label: e.label,
                },
            )
        })
        .collect())
}
