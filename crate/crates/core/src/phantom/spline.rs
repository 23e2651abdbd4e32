//! Uniform Catmull-Rom curves sampled at (near) constant arc-length steps.

use crate::vesselgraph::{dist, Point3};

const DENSE_PER_SPAN: usize = 128;

fn catmull_rom(p0: Point3, p1: Point3, p2: Point3, p3: Point3, t: f64) -> Point3 {
    let t2 = t * t;
    let t3 = t2 * t;
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = 0.5
            * ((2.0 * p1[a])
                + (-p0[a] + p2[a]) * t
                + (2.0 * p0[a] - 5.0 * p1[a] + 4.0 * p2[a] - p3[a]) * t2
                + (-p0[a] + 3.0 * p1[a] - 3.0 * p2[a] + p3[a]) * t3);
    }
    out
}

fn reflect(a: Point3, b: Point3) -> Point3 {
    [2.0 * a[0] - b[0], 2.0 * a[1] - b[1], 2.0 * a[2] - b[2]]
}

/// Sampled curve: points, per-point radii, and the sample index of every control point.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub points: Vec<Point3>,
    pub radii: Vec<f64>,
    pub control_index: Vec<usize>,
}

/// Samples the Catmull-Rom curve through `control` with steps of at most `step` mm.
///
/// Control points are hit exactly; radii interpolate linearly in the span parameter.
pub fn sample_catmull_rom(control: &[Point3], radii: &[f64], step: f64) -> SampledCurve {
    assert!(control.len() >= 2 && control.len() == radii.len());
    let n = control.len();
    let mut points = vec![control[0]];
    let mut out_radii = vec![radii[0]];
    let mut control_index = vec![0];
    for s in 0..n - 1 {
        let p1 = control[s];
        let p2 = control[s + 1];
        let p0 = if s == 0 { reflect(p1, p2) } else { control[s - 1] };
        let p3 = if s + 2 < n { control[s + 2] } else { reflect(p2, p1) };
        let mut cum = Vec::with_capacity(DENSE_PER_SPAN + 1);
        let mut prev = p1;
        cum.push(0.0);
        for d in 1..=DENSE_PER_SPAN {
            let q = catmull_rom(p0, p1, p2, p3, d as f64 / DENSE_PER_SPAN as f64);
            cum.push(cum[d - 1] + dist(prev, q));
            prev = q;
        }
        let total = cum[DENSE_PER_SPAN];
        let count = ((total / step).ceil() as usize).max(1);
        for j in 1..count {
            let target = total * j as f64 / count as f64;
            let d = cum.partition_point(|&c| c < target).clamp(1, DENSE_PER_SPAN);
            let seg = cum[d] - cum[d - 1];
            let frac = if seg > 0.0 { (target - cum[d - 1]) / seg } else { 0.0 };
            let t = (d as f64 - 1.0 + frac) / DENSE_PER_SPAN as f64;
            points.push(catmull_rom(p0, p1, p2, p3, t));
            out_radii.push(radii[s] + (radii[s + 1] - radii[s]) * t);
        }
        points.push(p2);
        out_radii.push(radii[s + 1]);
        control_index.push(points.len() - 1);
    }
    SampledCurve {
        points,
        radii: out_radii,
        control_index,
    }
}

/// Samples the straight or gently bent path `start → mid → end` (quadratic Bézier).
pub fn sample_quadratic(start: Point3, mid: Point3, end: Point3, step: f64) -> Vec<Point3> {
    let eval = |t: f64| -> Point3 {
        let u = 1.0 - t;
        let mut o = [0.0; 3];
        for a in 0..3 {
            o[a] = u * u * start[a] + 2.0 * u * t * mid[a] + t * t * end[a];
        }
        o
    };
    let mut cum = vec![0.0];
    let mut prev = start;
    for d in 1..=DENSE_PER_SPAN {
        let q = eval(d as f64 / DENSE_PER_SPAN as f64);
        cum.push(cum[d - 1] + dist(prev, q));
        prev = q;
    }
    let total = cum[DENSE_PER_SPAN];
    let count = ((total / step).ceil() as usize).max(1);
    let mut pts = vec![start];
    for j in 1..count {
        let target = total * j as f64 / count as f64;
        let d = cum.partition_point(|&c| c < target).clamp(1, DENSE_PER_SPAN);
        let seg = cum[d] - cum[d - 1];
        let frac = if seg > 0.0 { (target - cum[d - 1]) / seg } else { 0.0 };
        pts.push(eval((d as f64 - 1.0 + frac) / DENSE_PER_SPAN as f64));
    }
    pts.push(end);
    pts
}
