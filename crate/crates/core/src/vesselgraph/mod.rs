//! Segmentation, thinning and centerline graphs.
//!
//! Chain: [`segment`] → [`skeletonize`] → [`extract_graph`] →
//! [`collect_bifurcations`] → [`match_to_ground_truth`].

mod bifurcation;
mod edt;
mod extract;
mod matching;
mod segment;
mod skeleton;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bifurcation::{collect_bifurcations, Bifurcation, BranchView, Terminal, BRANCH_TRUNCATION_MM};
pub use edt::distance_transform_mm;
pub use extract::{extract_graph, extract_graph_with, ExtractOptions};
pub use matching::{match_to_centers, match_to_ground_truth, optimal_assignment, DEFAULT_MATCH_TOL_MM};
pub use segment::{segment, SegmentationMask, MIN_COMPONENT_VOXELS};
pub use skeleton::{count_components_26, skeletonize};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Endpoint,
    Bifurcation,
    /// Anchor placed on an isolated cycle that has no junction or endpoint.
    Loop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub pos: Point3,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub points: Vec<Point3>,
    pub radii: Vec<f64>,
}

impl Edge {
    pub fn arc_length(&self) -> f64 {
        polyline_length(&self.points)
    }
}

/// Centerline graph in millimetres.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VesselGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl VesselGraph {
    /// Edge-end count per node (a self-loop counts twice).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    }

    pub fn node_index(&self, id: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Number of independent cycles, `E - V + C`.
    pub fn cycle_rank(&self) -> usize {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut comps = n;
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                parent[ra] = rb;
                comps -= 1;
            }
        }
        (self.edges.len() + comps).saturating_sub(n)
    }

    /// Checks the structural invariants: endpoints of polylines sit on their nodes,
    /// radii are positive, polylines have at least two points.
    pub fn validate(&self, tol_mm: f64) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Degenerate(format!("node {i} has id {}", n.id)));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.a >= self.nodes.len() || e.b >= self.nodes.len() {
                return Err(Error::Degenerate(format!("edge {i} references a missing node")));
            }
            if e.points.len() < 2 || e.points.len() != e.radii.len() {
                return Err(Error::Degenerate(format!("edge {i} has a malformed polyline")));
            }
            if e.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return Err(Error::Degenerate(format!("edge {i} has a non-positive radius")));
            }
            if dist(e.points[0], self.nodes[e.a].pos) > tol_mm
                || dist(*e.points.last().unwrap(), self.nodes[e.b].pos) > tol_mm
            {
                return Err(Error::Degenerate(format!("edge {i} polyline does not meet its nodes")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("<graph>", e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn polyline_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}
