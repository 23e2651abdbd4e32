use super::segment::SegmentationMask;

/// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
fn edt_1d(f: &[f64], w2: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = first;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + w2 * (q * q) as f64) - (f[p] + w2 * (p * p) as f64)) / (2.0 * w2 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = w2 * d * d + f[p];
    }
}

/// Exact Euclidean distance (mm) from every voxel centre to the nearest
/// background voxel centre. Voxels outside the grid count as background;
/// background voxels get 0.
pub fn distance_transform_mm(mask: &SegmentationMask) -> Vec<f64> {
    // pad by one background voxel on every side
    let [nx, ny, nz] = mask.dims;
    let pd = [nx + 2, ny + 2, nz + 2];
    let pidx = |i: usize, j: usize, k: usize| (k * pd[1] + j) * pd[0] + i;
    let mut g = vec![0.0f64; pd[0] * pd[1] * pd[2]];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if mask.data[mask.index(i, j, k)] {
                    g[pidx(i + 1, j + 1, k + 1)] = f64::INFINITY;
                }
            }
        }
    }
    let max_n = *pd.iter().max().unwrap();
    let mut line = vec![0.0; max_n];
    let mut out = vec![0.0; max_n];
    let mut v = vec![0usize; max_n];
    let mut z = vec![0.0; max_n + 1];
    for axis in 0..3 {
        let w2 = mask.spacing[axis] * mask.spacing[axis];
        let n = pd[axis];
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..pd[ob] {
            for a in 0..pd[oa] {
                let at = |t: usize| {
                    let mut c = [0usize; 3];
                    c[axis] = t;
                    c[oa] = a;
                    c[ob] = b;
                    pidx(c[0], c[1], c[2])
                };
                for t in 0..n {
                    line[t] = g[at(t)];
                }
                edt_1d(&line[..n], w2, &mut out[..n], &mut v, &mut z);
                for t in 0..n {
                    g[at(t)] = out[t];
                }
            }
        }
    }
    let mut result = vec![0.0; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                result[mask.index(i, j, k)] = g[pidx(i + 1, j + 1, k + 1)].sqrt();
            }
        }
    }
    result
}
