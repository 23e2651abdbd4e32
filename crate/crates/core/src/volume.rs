//! Voxel volumes, the sidecar + raw file pair, patch cropping and intensity normalization.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::ClassLabel;

pub const PATCH_SIDE: usize = 32;

/// Scalar voxel grid, x-fastest.
///
/// Voxel `(i, j, k)` has its center at `origin + (i, j, k) * spacing` (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume("origin must be finite".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], value: f32) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Physical size of the grid along each axis (dims * spacing).
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn contains(&self, i: i64, j: i64, k: i64) -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < self.dims[0]
            && (j as usize) < self.dims[1]
            && (k as usize) < self.dims[2]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// Sets one voxel. Non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f32) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                index: self.index(i, j, k),
            });
        }
        let idx = self.index(i, j, k);
        self.data[idx] = value;
        Ok(())
    }

    pub fn voxel_center_mm(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Nearest voxel to a physical position, or `None` if it falls outside the grid.
    pub fn world_to_voxel(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing[a]).round();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    /// Applies `f` to every intensity. The result must stay finite.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Volume3D> {
        Volume3D::new(
            self.dims,
            self.spacing,
            self.origin,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn from_parts_unchecked(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Self {
            dims,
            spacing,
            origin,
            data,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data_file: String,
    dtype: String,
}

const DTYPE: &str = "f32le";

/// Reads a volume from its `.json` sidecar and the raw little-endian float32 blob it names.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if sidecar.dtype != DTYPE {
        return Err(Error::InvalidVolume(format!(
            "unsupported dtype {:?} in {}",
            sidecar.dtype,
            path.display()
        )));
    }
    let raw_path = resolve_data_file(path, &sidecar.data_file);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let n: usize = sidecar.dims.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::SizeMismatch {
            expected: n * 4,
            found: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume3D::new(sidecar.dims, sidecar.spacing, sidecar.origin, data)
}

fn resolve_data_file(sidecar: &Path, data_file: &str) -> PathBuf {
    let p = Path::new(data_file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        sidecar.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}

/// Writes `<stem>.json` and `<stem>.raw` next to each other; `path` names the sidecar.
pub fn write_volume(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad volume path {}", path.display())))?;
    let raw_name = format!("{stem}.raw");
    let raw_path = path.with_file_name(&raw_name);
    let mut bytes = Vec::with_capacity(v.data.len() * 4);
    for x in &v.data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&raw_path, &bytes).map_err(|e| Error::io(&raw_path, e))?;
    let sidecar = Sidecar {
        dims: v.dims,
        spacing: v.spacing,
        origin: v.origin,
        data_file: raw_name,
        dtype: DTYPE.to_string(),
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Cubic gray-level crop around a bifurcation center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch3D {
    pub side: usize,
    pub data: Vec<f32>,
    pub source_volume_id: String,
    pub center_voxel: [usize; 3],
    pub label: Option<ClassLabel>,
}

impl Patch3D {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[i + self.side * (j + self.side * k)]
    }
}

/// Crops a `side`³ cube whose index `side / 2` on each axis lands on `center`.
///
/// Voxels outside the volume read as 0 and values are clamped to [0, 1];
/// pass a normalized volume to get meaningful intensities.
pub fn extract_patch(v: &Volume3D, center: [usize; 3], side: usize) -> Result<Patch3D> {
    if side == 0 {
        return Err(Error::InvalidArgument("patch side must be positive".into()));
    }
    let [ci, cj, ck] = center;
    if !v.contains(ci as i64, cj as i64, ck as i64) {
        return Err(Error::OutOfBounds(ci as i64, cj as i64, ck as i64));
    }
    let half = (side / 2) as i64;
    let mut data = vec![0f32; side * side * side];
    for pk in 0..side {
        let k = ck as i64 + pk as i64 - half;
        for pj in 0..side {
            let j = cj as i64 + pj as i64 - half;
            for pi in 0..side {
                let i = ci as i64 + pi as i64 - half;
                if v.contains(i, j, k) {
                    let x = v.get(i as usize, j as usize, k as usize);
                    data[pi + side * (pj + side * pk)] = x.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(Patch3D {
        side,
        data,
        source_volume_id: String::new(),
        center_voxel: center,
        label: None,
    })
}

/// Percentile with linear interpolation between order statistics of `sorted`.
pub fn percentile_sorted(sorted: &[f32], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

/// Maps intensities by `(x - p_lo) / (p_hi - p_lo)` clamped to [0, 1].
///
/// A degenerate window (`p_hi == p_lo`) yields an all-zero volume.
pub fn normalize_volume_with(v: &Volume3D, lo_pct: f64, hi_pct: f64) -> Volume3D {
    let mut sorted = v.data.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = percentile_sorted(&sorted, lo_pct);
    let hi = percentile_sorted(&sorted, hi_pct);
    let width = hi - lo;
    let data = if width > 0.0 {
        v.data
            .iter()
            .map(|&x| (((x as f64 - lo) / width).clamp(0.0, 1.0)) as f32)
            .collect()
    } else {
        vec![0.0; v.data.len()]
    };
    Volume3D::from_parts_unchecked(v.dims, v.spacing, v.origin, data)
}

/// 1st to 99th percentile normalization.
pub fn normalize_volume(v: &Volume3D) -> Volume3D {
    normalize_volume_with(v, 1.0, 99.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vol(dims: [usize; 3], data: Vec<f32>) -> Volume3D {
        Volume3D::new(dims, [0.5, 0.5, 0.5], [0.0; 3], data).unwrap()
    }

    #[test]
    fn reads_zero_volume() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("v.raw"), [0u8; 32]).unwrap();
        fs::write(
            dir.path().join("v.json"),
            r#"{"dims":[2,2,2],"spacing":[1,1,1],"origin":[0,0,0],"data_file":"v.raw","dtype":"f32le"}"#,
        )
        .unwrap();
        let v = read_volume(dir.path().join("v.json")).unwrap();
        assert_eq!(v.data(), &[0.0; 8]);
    }

    #[test]
    fn short_raw_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("v.raw"), [0u8; 31]).unwrap();
        fs::write(
            dir.path().join("v.json"),
            r#"{"dims":[2,2,2],"spacing":[1,1,1],"origin":[0,0,0],"data_file":"v.raw","dtype":"f32le"}"#,
        )
        .unwrap();
        let err = read_volume(dir.path().join("v.json")).unwrap_err();
        assert!(matches!(
            err,
            Error::SizeMismatch {
                expected: 32,
                found: 31
            }
        ));
    }

    #[test]
    fn rejects_missing_malformed_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_volume(dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
        fs::write(dir.path().join("bad.json"), "{dims:").unwrap();
        assert!(matches!(
            read_volume(dir.path().join("bad.json")),
            Err(Error::Json { .. })
        ));
        let mut raw = vec![0u8; 8];
        raw[4..].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(dir.path().join("n.raw"), raw).unwrap();
        fs::write(
            dir.path().join("n.json"),
            r#"{"dims":[2,1,1],"spacing":[1,1,1],"origin":[0,0,0],"data_file":"n.raw","dtype":"f32le"}"#,
        )
        .unwrap();
        assert!(matches!(
            read_volume(dir.path().join("n.json")),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn sidecar_keeps_dims() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::filled([3, 4, 5], [0.5, 0.6, 0.7], [1.0, 2.0, 3.0], 0.0).unwrap();
        let p = dir.path().join("z.json");
        write_volume(&v, &p).unwrap();
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(side["dims"], serde_json::json!([3, 4, 5]));
        assert_eq!(side["dtype"], "f32le");
        assert_eq!(read_volume(&p).unwrap(), v);
    }

    proptest! {
        #[test]
        fn write_read_is_bit_exact(
            dims in (1usize..5, 1usize..5, 1usize..5),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from_seed(seed);
            let n = dims.0 * dims.1 * dims.2;
            let data: Vec<f32> = (0..n)
                .map(|_| f32::from_bits(rng.random::<u32>()))
                .map(|x| if x.is_finite() { x } else { 0.25 })
                .collect();
            let v = Volume3D::new([dims.0, dims.1, dims.2], [0.5, 1.0, 2.0], [-1.0, 0.0, 3.5], data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("v.json");
            write_volume(&v, &p).unwrap();
            let back = read_volume(&p).unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            let a: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn normalization_is_bounded_and_monotone(values in prop::collection::vec(-1e3f32..1e3, 2..200)) {
            let n = values.len();
            let v = vol([n, 1, 1], values.clone());
            let out = normalize_volume(&v);
            for i in 0..n {
                prop_assert!((0.0..=1.0).contains(&out.data()[i]));
                for j in 0..n {
                    if values[i] <= values[j] {
                        prop_assert!(out.data()[i] <= out.data()[j]);
                    }
                }
            }
        }

        #[test]
        fn patch_is_translation_consistent(
            shift in (0usize..4, 0usize..4, 0usize..4),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from_seed(seed);
            let dims = [24usize, 24, 24];
            let data: Vec<f32> = (0..24 * 24 * 24).map(|_| rng.random::<f32>()).collect();
            let a = vol(dims, data.clone());
            let mut shifted = vec![0f32; data.len()];
            for k in 0..24 {
                for j in 0..24 {
                    for i in 0..24 {
                        let (si, sj, sk) = (i + shift.0, j + shift.1, k + shift.2);
                        if si < 24 && sj < 24 && sk < 24 {
                            shifted[si + 24 * (sj + 24 * sk)] = data[i + 24 * (j + 24 * k)];
                        }
                    }
                }
            }
            let b = vol(dims, shifted);
            let pa = extract_patch(&a, [10, 10, 10], 8).unwrap();
            let pb = extract_patch(&b, [10 + shift.0, 10 + shift.1, 10 + shift.2], 8).unwrap();
            prop_assert_eq!(pa.data, pb.data);
        }
    }

    #[test]
    fn constant_volume_gives_constant_patch() {
        let v = Volume3D::filled([40, 40, 40], [0.5; 3], [0.0; 3], 0.5).unwrap();
        let p = extract_patch(&v, [20, 20, 20], PATCH_SIDE).unwrap();
        assert_eq!(p.data.len(), 32768);
        assert!(p.data.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn corner_patch_is_zero_padded() {
        let v = Volume3D::filled([6, 6, 6], [1.0; 3], [0.0; 3], 1.0).unwrap();
        let p = extract_patch(&v, [0, 0, 0], 4).unwrap();
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..4 {
                    let expected = if i >= 2 && j >= 2 && k >= 2 { 1.0 } else { 0.0 };
                    assert_eq!(p.get(i, j, k), expected, "({i},{j},{k})");
                }
            }
        }
    }

    #[test]
    fn bright_voxel_lands_at_patch_center() {
        // Already in [0, 1]: percentile normalization of a single bright voxel on a
        // constant background is degenerate (p1 == p99) and would zero the patch.
        let mut v = Volume3D::filled([40, 40, 40], [0.5; 3], [0.0; 3], 0.0).unwrap();
        v.set(20, 21, 22, 1.0).unwrap();
        let p = extract_patch(&v, [20, 21, 22], PATCH_SIDE).unwrap();
        for k in 0..32 {
            for j in 0..32 {
                for i in 0..32 {
                    let expected = if (i, j, k) == (16, 16, 16) { 1.0 } else { 0.0 };
                    assert_eq!(p.get(i, j, k), expected);
                }
            }
        }
    }

    #[test]
    fn patch_center_must_be_inside() {
        let v = Volume3D::filled([4, 4, 4], [1.0; 3], [0.0; 3], 0.0).unwrap();
        assert!(matches!(
            extract_patch(&v, [4, 0, 0], 4),
            Err(Error::OutOfBounds(4, 0, 0))
        ));
    }

    #[test]
    fn constant_volume_normalizes_to_zero() {
        let v = Volume3D::filled([5, 5, 5], [1.0; 3], [0.0; 3], 7.0).unwrap();
        assert!(normalize_volume(&v).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_ramp_uses_sorted_percentiles() {
        // 0, 1, ..., 100: p1 = 1 and p99 = 99 exactly by sorted-rank interpolation.
        let values: Vec<f32> = (0..=100).map(|x| x as f32).collect();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        assert!((percentile_sorted(&sorted, 1.0) - 1.0).abs() < 1e-12);
        assert!((percentile_sorted(&sorted, 99.0) - 99.0).abs() < 1e-12);
        let out = normalize_volume(&vol([101, 1, 1], values));
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[100], 1.0);
        assert!((out.data()[50] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn binary_data_is_unchanged() {
        let values: Vec<f32> = (0..50).map(|i| (i % 2) as f32).collect();
        let out = normalize_volume(&vol([50, 1, 1], values.clone()));
        assert_eq!(out.data(), &values[..]);
    }
}
