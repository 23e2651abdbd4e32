//! The 61-slot geometric descriptor of a bifurcation.
//!
//! Slots (1-based) 1–36 hold twelve measurements per branch (arc length, chord,
//! tortuosity, mean/min/max/std radius, proximal and distal radius, taper, mean
//! and max curvature), 37–39 the normalized centre, 40–46 angles, 47–55 radius,
//! length and tortuosity ratios, 56 Murray deviation, 57 asymmetry, 58–59 sums,
//! and 60–61 context distances.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::ClassLabel;
use crate::vesselgraph::{dist, polyline_length, Bifurcation, BranchView, Point3};

pub const NUM_FEATURES: usize = 61;
pub const TANGENT_PROBE_MM: f64 = 2.0;
pub const CURVATURE_STEP_MM: f64 = 0.5;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector61 {
    pub values: Vec<f64>,
    pub label: ClassLabel,
    pub bif_id: String,
}

/// What the descriptor needs beyond the bifurcation itself.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub volume_origin: Point3,
    pub volume_extent_mm: [f64; 3],
    pub all_centers: &'a [Point3],
    pub tree_centroid: Point3,
}

/// How a slot responds to a uniform scaling of the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// Multiplied by the scale factor.
    Length,
    /// Divided by the scale factor (curvatures).
    Curvature,
    /// Unchanged.
    Invariant,
    /// Normalized position inside the volume.
    Location,
    /// Distances to other bifurcations or the tree centroid.
    Context,
}

/// Kind of the 0-based slot `i`.
pub fn slot_kind(i: usize) -> SlotKind {
    match i {
        0..=35 => match i % 12 {
            0 | 1 | 3..=8 => SlotKind::Length,
            2 | 9 => SlotKind::Invariant,
            _ => SlotKind::Curvature,
        },
        36..=38 => SlotKind::Location,
        39..=56 => SlotKind::Invariant,
        57 | 58 => SlotKind::Length,
        59 | 60 => SlotKind::Context,
        _ => panic!("slot {i} out of range"),
    }
}

pub fn tortuosity(points: &[Point3]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Degenerate("tortuosity needs at least 2 points".into()));
    }
    let chord = dist(points[0], *points.last().unwrap());
    if chord <= 0.0 {
        return Err(Error::Degenerate("zero chord length".into()));
    }
    Ok(polyline_length(points) / chord)
}

/// Unit vector from the centre to the point at arc length `min(probe_mm, L/2)`.
pub fn branch_tangent(b: &BranchView, probe_mm: f64) -> Result<Point3> {
    let l = b.arc_length();
    if !(l > 0.0) {
        return Err(Error::Degenerate("zero-length branch".into()));
    }
    let (p, _) = b.point_at(probe_mm.min(0.5 * l));
    let v = sub(p, b.points[0]);
    let n = norm(v);
    if !(n > 0.0) {
        return Err(Error::Degenerate("branch returns to its centre".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

/// Orders branches by descending mean radius, then longer arc length, then
/// lexicographically smaller distal endpoint.
pub fn order_branches(mut b: Bifurcation) -> Bifurcation {
    b.branches.sort_by(|x, y| {
        y.mean_radius()
            .total_cmp(&x.mean_radius())
            .then_with(|| y.arc_length().total_cmp(&x.arc_length()))
            .then_with(|| lex(x.points.last().unwrap(), y.points.last().unwrap()))
    });
    b
}

fn lex(a: &Point3, b: &Point3) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

/// Points along the polyline every `step` mm of arc length, starting at its first point.
pub fn resample(points: &[Point3], step: f64) -> Vec<Point3> {
    let mut out = vec![points[0]];
    let mut next = step;
    let mut acc = 0.0;
    for w in points.windows(2) {
        let d = dist(w[0], w[1]);
        while d > 0.0 && acc + d >= next {
            let t = (next - acc) / d;
            out.push([
                w[0][0] + t * (w[1][0] - w[0][0]),
                w[0][1] + t * (w[1][1] - w[0][1]),
                w[0][2] + t * (w[1][2] - w[0][2]),
            ]);
            next += step;
        }
        acc += d;
    }
    out
}

/// Inverse circumradius of the triangle `a b c`; 0 for collinear or coincident points.
pub fn menger_curvature(a: Point3, b: Point3, c: Point3) -> f64 {
    let (ab, bc, ca) = (dist(a, b), dist(b, c), dist(c, a));
    let denom = ab * bc * ca;
    if denom <= 0.0 {
        return 0.0;
    }
    2.0 * norm(cross(sub(b, a), sub(c, a))) / denom
}

/// (mean, max) Menger curvature after resampling at [`CURVATURE_STEP_MM`].
pub fn curvature_stats(points: &[Point3]) -> (f64, f64) {
    let r = resample(points, CURVATURE_STEP_MM);
    if r.len() < 3 {
        return (0.0, 0.0);
    }
    let ks: Vec<f64> = r.windows(3).map(|w| menger_curvature(w[0], w[1], w[2])).collect();
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    let max = ks.iter().copied().fold(0.0, f64::max);
    (mean, max)
}

fn angle_deg(a: Point3, b: Point3) -> f64 {
    (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

fn ratio(num: f64, den: f64) -> f64 {
    num / den.max(EPS)
}

struct BranchStats {
    length: f64,
    tortuosity: f64,
    mean_r: f64,
    slots: [f64; 12],
}

fn branch_stats(b: &BranchView) -> Result<BranchStats> {
    if b.points.len() < 2 || b.points.len() != b.radii.len() {
        return Err(Error::Degenerate("branch needs at least 2 points with radii".into()));
    }
    let length = b.arc_length();
    let chord = dist(b.points[0], *b.points.last().unwrap());
    let tortuosity = tortuosity(&b.points)?;
    let n = b.radii.len() as f64;
    let mean_r = b.mean_radius();
    let min_r = b.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let max_r = b.radii.iter().copied().fold(0.0, f64::max);
    let std_r = (b.radii.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / n).sqrt();
    let prox = b.radii[0];
    let distal = *b.radii.last().unwrap();
    let taper = ratio(prox - distal, length);
    let (k_mean, k_max) = curvature_stats(&b.points);
    Ok(BranchStats {
        length,
        tortuosity,
        mean_r,
        slots: [
            length, chord, tortuosity, mean_r, min_r, max_r, std_r, prox, distal, taper, k_mean, k_max,
        ],
    })
}

/// Fills the 61 slots for a bifurcation whose branches are already in canonical order.
pub fn features(b: &Bifurcation, ctx: &FeatureContext) -> Result<Vec<f64>> {
    if b.branches.len() != 3 {
        return Err(Error::Degenerate(format!("{} branches, expected 3", b.branches.len())));
    }
    let stats = b.branches.iter().map(branch_stats).collect::<Result<Vec<_>>>()?;
    let tangents = b
        .branches
        .iter()
        .map(|br| branch_tangent(br, TANGENT_PROBE_MM))
        .collect::<Result<Vec<_>>>()?;

    let mut v = Vec::with_capacity(NUM_FEATURES);
    for s in &stats {
        v.extend_from_slice(&s.slots);
    }
    for a in 0..3 {
        let x = (b.center[a] - ctx.volume_origin[a]) / ctx.volume_extent_mm[a].max(EPS);
        v.push(x.clamp(0.0, 1.0));
    }
    let t01 = angle_deg(tangents[0], tangents[1]);
    let t02 = angle_deg(tangents[0], tangents[2]);
    let t12 = angle_deg(tangents[1], tangents[2]);
    v.extend_from_slice(&[
        t01,
        t02,
        t12,
        t01 + t02 + t12,
        t01.min(t02).min(t12),
        t01.max(t02).max(t12),
    ]);
    let normal = cross(tangents[1], tangents[2]);
    let nn = norm(normal);
    let planarity = if nn < EPS {
        0.0
    } else {
        let c = (tangents[0][0] * normal[0] + tangents[0][1] * normal[1] + tangents[0][2] * normal[2]) / nn;
        c.abs().clamp(0.0, 1.0).asin().to_degrees()
    };
    v.push(planarity);
    let (r0, r1, r2) = (stats[0].mean_r, stats[1].mean_r, stats[2].mean_r);
    let (l0, l1, l2) = (stats[0].length, stats[1].length, stats[2].length);
    let (q0, q1, q2) = (stats[0].tortuosity, stats[1].tortuosity, stats[2].tortuosity);
    v.extend_from_slice(&[ratio(r1, r0), ratio(r2, r0), ratio(r2, r1)]);
    v.extend_from_slice(&[ratio(l1, l0), ratio(l2, l0), ratio(l2, l1)]);
    v.extend_from_slice(&[ratio(q1, q0), ratio(q2, q0), ratio(q2, q1)]);
    let r03 = r0.powi(3);
    v.push(ratio((r03 - r1.powi(3) - r2.powi(3)).abs(), r03));
    v.push(ratio(r1 * r1 - r2 * r2, r1 * r1 + r2 * r2));
    v.push(l0 + l1 + l2);
    v.push((r0 + r1 + r2) / 3.0);
    let nearest = ctx
        .all_centers
        .iter()
        .map(|&c| dist(c, b.center))
        .filter(|&d| d > 1e-12)
        .fold(f64::INFINITY, f64::min);
    v.push(if nearest.is_finite() { nearest } else { 0.0 });
    v.push(dist(b.center, ctx.tree_centroid));
    debug_assert_eq!(v.len(), NUM_FEATURES);
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(v)
}

/// Writes `slot_01..slot_61,label,bif_id` rows.
pub fn write_features_csv(path: impl AsRef<Path>, rows: &[FeatureVector61]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 1..=NUM_FEATURES {
        out.push_str(&format!("slot_{i:02},"));
    }
    out.push_str("label,bif_id\n");
    for r in rows {
        for x in &r.values {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{},{}\n", r.label, r.bif_id));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureVector61>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.split(',').count() != NUM_FEATURES + 2 || !header.starts_with("slot_01,") {
        return Err(Error::Config(format!("{}: unexpected feature header", path.display())));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != NUM_FEATURES + 2 {
            return Err(Error::Config(format!(
                "{}: row {} has {} cells",
                path.display(),
                n + 1,
                cells.len()
            )));
        }
        let values = cells[..NUM_FEATURES]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), n + 1)))?;
        let label = cells[NUM_FEATURES].parse::<ClassLabel>()?;
        rows.push(FeatureVector61 {
            values,
            label,
            bif_id: cells[NUM_FEATURES + 1].to_string(),
        });
    }
    Ok(rows)
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
