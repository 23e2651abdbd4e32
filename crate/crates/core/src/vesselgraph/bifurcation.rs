use serde::{Deserialize, Serialize};

use super::{dist, NodeKind, Point3, VesselGraph};
use crate::geomfeat::order_branches;
use crate::label::ClassLabel;

/// Branches are cut at this arc length (mm) unless another node comes first.
pub const BRANCH_TRUNCATION_MM: f64 = 10.0;
/// Arc length (mm) at which branch directions are probed for the degree-4+ pairing.
const PAIRING_PROBE_MM: f64 = 2.0;

/// How a branch ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    Endpoint,
    Bifurcation,
    Loop,
    Truncated,
}

/// One branch leaving a bifurcation centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchView {
    /// Polyline starting at the centre, oriented away from it.
    pub points: Vec<Point3>,
    pub radii: Vec<f64>,
    pub terminal_kind: Terminal,
}

impl BranchView {
    pub fn arc_length(&self) -> f64 {
        super::polyline_length(&self.points)
    }

    pub fn mean_radius(&self) -> f64 {
        self.radii.iter().sum::<f64>() / self.radii.len() as f64
    }

    /// Point at arc length `s` (clamped to the polyline) with its interpolated radius.
    pub fn point_at(&self, s: f64) -> (Point3, f64) {
        let mut acc = 0.0;
        for w in 0..self.points.len() - 1 {
            let (a, b) = (self.points[w], self.points[w + 1]);
            let d = dist(a, b);
            if acc + d >= s && d > 0.0 {
                let t = ((s - acc) / d).clamp(0.0, 1.0);
                let p = [
                    a[0] + t * (b[0] - a[0]),
                    a[1] + t * (b[1] - a[1]),
                    a[2] + t * (b[2] - a[2]),
                ];
                let r = self.radii[w] + t * (self.radii[w + 1] - self.radii[w]);
                return (p, r);
            }
            acc += d;
        }
        (*self.points.last().unwrap(), *self.radii.last().unwrap())
    }

    /// Copy cut at arc length `max_len`.
    pub fn truncated(&self, max_len: f64) -> BranchView {
        let mut points = vec![self.points[0]];
        let mut radii = vec![self.radii[0]];
        let mut acc = 0.0;
        for w in 1..self.points.len() {
            let d = dist(self.points[w - 1], self.points[w]);
            if acc + d > max_len {
                let (p, r) = self.point_at(max_len);
                if dist(p, *points.last().unwrap()) > 0.0 {
                    points.push(p);
                    radii.push(r);
                }
                return BranchView {
                    points,
                    radii,
                    terminal_kind: Terminal::Truncated,
                };
            }
            acc += d;
            points.push(self.points[w]);
            radii.push(self.radii[w]);
        }
        self.clone()
    }
}

/// A degree-3 junction with its three branches in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    pub node_id: usize,
    pub center: Point3,
    pub branches: Vec<BranchView>,
    pub label: Option<ClassLabel>,
}

fn direction(b: &BranchView) -> Point3 {
    let l = b.arc_length();
    let (p, _) = b.point_at(PAIRING_PROBE_MM.min(0.5 * l));
    let v = [p[0] - b.points[0][0], p[1] - b.points[0][1], p[2] - b.points[0][2]];
    let n = dist(v, [0.0; 3]);
    if n > 0.0 {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        [0.0; 3]
    }
}

/// One bifurcation per degree-3 node. A node of degree `d ≥ 4` yields `d − 2`
/// bifurcations: its two most collinear branches form the through vessel and
/// each remaining branch joins them.
pub fn collect_bifurcations(g: &VesselGraph) -> Vec<Bifurcation> {
    let mut views: Vec<Vec<BranchView>> = vec![Vec::new(); g.nodes.len()];
    let kind_of = |n: usize| match g.nodes[n].kind {
        NodeKind::Endpoint => Terminal::Endpoint,
        NodeKind::Bifurcation => Terminal::Bifurcation,
        NodeKind::Loop => Terminal::Loop,
    };
    for e in &g.edges {
        let fwd = BranchView {
            points: e.points.clone(),
            radii: e.radii.clone(),
            terminal_kind: kind_of(e.b),
        };
        let mut rp = e.points.clone();
        let mut rr = e.radii.clone();
        rp.reverse();
        rr.reverse();
        let back = BranchView {
            points: rp,
            radii: rr,
            terminal_kind: kind_of(e.a),
        };
        views[e.a].push(fwd.truncated(BRANCH_TRUNCATION_MM));
        views[e.b].push(back.truncated(BRANCH_TRUNCATION_MM));
    }
    let mut out = Vec::new();
    for (n, branches) in views.into_iter().enumerate() {
        let center = g.nodes[n].pos;
        let make = |bs: Vec<BranchView>| Bifurcation {
            node_id: g.nodes[n].id,
            center,
            branches: bs,
            label: None,
        };
        match branches.len() {
            0..=2 => {}
            3 => out.push(order_branches(make(branches))),
            d => {
                let dirs: Vec<Point3> = branches.iter().map(direction).collect();
                let mut best = (0, 1, f64::NEG_INFINITY);
                for i in 0..d {
                    for j in i + 1..d {
                        let c = (dirs[i][0] * dirs[j][0] + dirs[i][1] * dirs[j][1] + dirs[i][2] * dirs[j][2]).abs();
                        if c > best.2 + 1e-12 {
                            best = (i, j, c);
                        }
                    }
                }
                let (i, j, _) = best;
                for k in (0..d).filter(|&k| k != i && k != j) {
                    let bs = vec![branches[i].clone(), branches[j].clone(), branches[k].clone()];
                    out.push(order_branches(make(bs)));
                }
            }
        }
    }
    out
}
