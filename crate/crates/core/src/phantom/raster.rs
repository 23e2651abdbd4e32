use rand_distr::{Distribution, Normal};

use super::RasterSpec;
use crate::error::{Error, Result};
use crate::rng;
use crate::vesselgraph::VesselGraph;
use crate::volume::Volume3D;

/// Fails unless every sample point, padded by its radius, lies inside the voxel-center hull.
pub(crate) fn check_bounds(graph: &VesselGraph, raster: &RasterSpec) -> Result<()> {
    for e in &graph.edges {
        for (p, &r) in e.points.iter().zip(&e.radii) {
            for a in 0..3 {
                let lo = raster.origin[a];
                let hi = lo + (raster.dims[a] - 1) as f64 * raster.spacing[a];
                if p[a] - r < lo || p[a] + r > hi || !p[a].is_finite() {
                    return Err(Error::OutsideRaster(format!(
                        "point {:?} with radius {r} leaves the volume along axis {a}",
                        p
                    )));
                }
            }
        }
    }
    Ok(())
}

fn vessel_mask(graph: &VesselGraph, raster: &RasterSpec) -> Vec<bool> {
    let [nx, ny, nz] = raster.dims;
    let mut mask = vec![false; nx * ny * nz];
    for e in &graph.edges {
        for (p, &r) in e.points.iter().zip(&e.radii) {
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for a in 0..3 {
                let s = raster.spacing[a];
                let fl = ((p[a] - r - raster.origin[a]) / s).floor().max(0.0) as usize;
                let fh = ((p[a] + r - raster.origin[a]) / s).ceil() as usize;
                lo[a] = fl;
                hi[a] = fh.min(raster.dims[a] - 1);
            }
            let r2 = r * r;
            for k in lo[2]..=hi[2] {
                let dz = raster.origin[2] + k as f64 * raster.spacing[2] - p[2];
                for j in lo[1]..=hi[1] {
                    let dy = raster.origin[1] + j as f64 * raster.spacing[1] - p[1];
                    let row = (k * ny + j) * nx;
                    for i in lo[0]..=hi[0] {
                        let dx = raster.origin[0] + i as f64 * raster.spacing[0] - p[0];
                        if dx * dx + dy * dy + dz * dz <= r2 {
                            mask[row + i] = true;
                        }
                    }
                }
            }
        }
    }
    mask
}

/// Renders the graph's tubes into a TOF-like volume with seeded Gaussian noise.
pub fn rasterize(graph: &VesselGraph, raster: &RasterSpec, rng_seed: u64) -> Result<Volume3D> {
    raster.validate()?;
    check_bounds(graph, raster)?;
    let mask = vessel_mask(graph, raster);
    let vessel = raster.vessel_intensity as f32;
    let background = raster.background_intensity as f32;
    let mut data: Vec<f32> = mask.iter().map(|&m| if m { vessel } else { background }).collect();
    if raster.noise_sigma > 0.0 {
        let mut r = rng::stream(rng_seed, 0x5241_5354);
        let noise = Normal::new(0.0, raster.noise_sigma).expect("valid sigma");
        for v in &mut data {
            *v = (*v + noise.sample(&mut r) as f32).clamp(0.0, 1.0);
        }
    }
    Volume3D::new(raster.dims, raster.spacing, raster.origin, data)
}

/// Reference in-vessel set: every voxel centre tested against the sample points
/// of every edge whose padded bounding box contains it.
pub fn vessel_voxels_brute_force(graph: &VesselGraph, raster: &RasterSpec) -> Vec<bool> {
    let [nx, ny, nz] = raster.dims;
    let boxes: Vec<([f64; 3], [f64; 3])> = graph
        .edges
        .iter()
        .map(|e| {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for (p, r) in e.points.iter().zip(&e.radii) {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a] - r);
                    hi[a] = hi[a].max(p[a] + r);
                }
            }
            (lo, hi)
        })
        .collect();
    let mut out = vec![false; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = [
                    raster.origin[0] + i as f64 * raster.spacing[0],
                    raster.origin[1] + j as f64 * raster.spacing[1],
                    raster.origin[2] + k as f64 * raster.spacing[2],
                ];
                out[(k * ny + j) * nx + i] = graph.edges.iter().zip(&boxes).any(|(e, (lo, hi))| {
                    (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a])
                        && e.points.iter().zip(&e.radii).any(|(p, r)| {
                            let d2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2);
                            d2 <= r * r
                        })
                });
            }
        }
    }
    out
}
