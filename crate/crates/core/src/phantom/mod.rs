//! Labeled synthetic Circle-of-Willis phantoms.
//!
//! A [`PhantomSpec`] holds named anchor points (junctions) and arteries whose
//! control points may reference anchors. [`realize`] draws artery states,
//! jitters and rotates the geometry, samples every artery as a Catmull-Rom
//! curve, grows distal binary trees, and returns the exact centerline graph
//! with the labels of the surviving bifurcations of interest. [`rasterize`]
//! turns a graph into a TOF-like volume.

mod raster;
mod spline;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::ClassLabel;
use crate::rng;
use crate::vesselgraph::{dist, Edge, Node, NodeKind, Point3, VesselGraph};

pub use raster::{rasterize, vessel_voxels_brute_force};
pub use spline::{sample_catmull_rom, sample_quadratic, SampledCurve};

/// Arc-length step used to sample centerlines (mm).
pub const SAMPLE_STEP_MM: f64 = 0.25;
/// Radius multiplier applied to hypoplastic arteries.
pub const HYPOPLASIA_RADIUS_FACTOR: f64 = 0.3;
pub const NUM_BOI: usize = 13;

const TEMPLATE_JSON: &str = include_str!("../../data/cow_template.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlPoint {
    Anchor(String),
    Free(Point3),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArteryState {
    #[default]
    Normal,
    Hypoplastic,
    Aplastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArterySpec {
    pub name: String,
    pub control_points: Vec<ControlPoint>,
    pub radius_profile: Vec<f64>,
    #[serde(default)]
    pub state: ArteryState,
    /// Whether `realize` may draw a hypoplastic/aplastic state for this artery.
    #[serde(default)]
    pub variable: bool,
    /// Whether a distal binary tree grows from the artery's free end.
    #[serde(default)]
    pub distal_tree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variability {
    pub p_hypoplasia: f64,
    pub p_aplasia: f64,
    pub jitter_sigma_mm: f64,
    pub global_rotation_max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistalTreeSpec {
    pub levels: usize,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub radius_decay: f64,
    /// `[min, max]` child segment length per level (mm).
    pub segment_length_mm: Vec<[f64; 2]>,
    /// Maximum sideways bend of a child segment as a fraction of its length.
    pub max_bend_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub noise_sigma: f64,
    pub vessel_intensity: f64,
    pub background_intensity: f64,
}

impl RasterSpec {
    pub fn center(&self) -> Point3 {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + 0.5 * (self.dims[a] - 1) as f64 * self.spacing[a];
        }
        c
    }

    fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) || self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidSpec("raster dims and spacing must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidSpec("noise_sigma must be >= 0".into()));
        }
        for v in [self.vessel_intensity, self.background_intensity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec("intensities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub anchors: BTreeMap<String, Point3>,
    pub arteries: Vec<ArterySpec>,
    /// Anchor name → class tag of the 13 bifurcations of interest.
    pub boi_labels: BTreeMap<String, ClassLabel>,
    pub rng_seed: u64,
    pub variability: Variability,
    pub distal: DistalTreeSpec,
    pub raster: RasterSpec,
}

/// The checked-in Circle-of-Willis template (all arteries normal).
pub fn default_cow_template() -> PhantomSpec {
    PhantomSpec::from_json_str(TEMPLATE_JSON).expect("bundled template is valid")
}

impl PhantomSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: PhantomSpec = serde_json::from_str(text).map_err(|e| Error::json("<phantom spec>", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: PhantomSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn artery_mut(&mut self, name: &str) -> Option<&mut ArterySpec> {
        self.arteries.iter_mut().find(|a| a.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.boi_labels.len() != NUM_BOI {
            return bad(format!(
                "expected {NUM_BOI} boi labels, found {}",
                self.boi_labels.len()
            ));
        }
        let mut seen = [false; 14];
        for (anchor, &label) in &self.boi_labels {
            if !self.anchors.contains_key(anchor) {
                return bad(format!("boi label on unknown anchor {anchor}"));
            }
            if !label.is_boi() || seen[label.index()] {
                return bad(format!("label {label} is not a distinct A..M tag"));
            }
            seen[label.index()] = true;
        }
        for (name, p) in &self.anchors {
            if p.iter().any(|x| !x.is_finite()) {
                return bad(format!("anchor {name} is not finite"));
            }
        }
        let mut names = std::collections::HashSet::new();
        for a in &self.arteries {
            if !names.insert(a.name.as_str()) {
                return bad(format!("duplicate artery {}", a.name));
            }
            if a.control_points.len() < 4 {
                return bad(format!("artery {} needs at least 4 control points", a.name));
            }
            if a.control_points.len() != a.radius_profile.len() {
                return bad(format!("artery {} has mismatched radius profile", a.name));
            }
            if a.state != ArteryState::Aplastic && a.radius_profile.iter().any(|&r| !(r > 0.0)) {
                return bad(format!("artery {} has a non-positive radius", a.name));
            }
            for cp in &a.control_points {
                match cp {
                    ControlPoint::Anchor(n) if !self.anchors.contains_key(n) => {
                        return bad(format!("artery {} references unknown anchor {n}", a.name));
                    }
                    ControlPoint::Free(p) if p.iter().any(|x| !x.is_finite()) => {
                        return bad(format!("artery {} has a non-finite point", a.name));
                    }
                    _ => {}
                }
            }
        }
        let v = &self.variability;
        for p in [v.p_hypoplasia, v.p_aplasia] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]".into());
            }
        }
        if v.p_hypoplasia + v.p_aplasia > 1.0 + 1e-12 {
            return bad("p_hypoplasia + p_aplasia must not exceed 1".into());
        }
        if !(v.jitter_sigma_mm >= 0.0) || !(v.global_rotation_max_deg >= 0.0) {
            return bad("jitter and rotation must be >= 0".into());
        }
        let d = &self.distal;
        if d.segment_length_mm.len() < d.levels {
            return bad("distal tree needs a segment length range per level".into());
        }
        if !(d.angle_min_deg >= 0.0 && d.angle_min_deg <= d.angle_max_deg && d.angle_max_deg < 180.0) {
            return bad("distal branching angles must satisfy 0 <= min <= max < 180".into());
        }
        if !(d.radius_decay > 0.0 && d.radius_decay <= 1.0) {
            return bad("radius_decay must lie in (0, 1]".into());
        }
        if d.segment_length_mm.iter().any(|r| !(r[0] > 0.0 && r[0] <= r[1])) {
            return bad("segment length ranges must be positive and ordered".into());
        }
        self.raster.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCenter {
    pub pos: Point3,
    pub label: ClassLabel,
}

/// Exact graph of a realized phantom with the positions of its labeled and BN junctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub graph: VesselGraph,
    pub labeled_centers: Vec<LabeledCenter>,
    pub bn_centers: Vec<Point3>,
    pub artery_states: Vec<(String, ArteryState)>,
}

impl GroundTruth {
    /// Labels JSON: `[{pos, label}]`, BoIs first, then BN junctions tagged `"BN"`.
    pub fn labels_json(&self) -> Result<String> {
        let mut rows: Vec<LabeledCenter> = self.labeled_centers.clone();
        rows.extend(self.bn_centers.iter().map(|&pos| LabeledCenter {
            pos,
            label: ClassLabel::BN,
        }));
        serde_json::to_string_pretty(&rows).map_err(|e| Error::json("<labels>", e))
    }

    pub fn write_labels(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.labels_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads a labels JSON file back into (labeled centers, BN centers).
pub fn read_labels(path: impl AsRef<Path>) -> Result<(Vec<LabeledCenter>, Vec<Point3>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<LabeledCenter> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let (boi, bn): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.label.is_boi());
    Ok((boi, bn.into_iter().map(|r| r.pos).collect()))
}

const STREAM_STATES: u64 = 1;
const STREAM_JITTER: u64 = 2;
const STREAM_TREES: u64 = 3;
const STREAM_ROTATION: u64 = 4;

struct Segment {
    a: String,
    b: String,
    points: Vec<Point3>,
    radii: Vec<f64>,
}

/// Realizes one phantom from its spec. Same spec (including seed) ⇒ identical output.
pub fn realize(spec: &PhantomSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let seed = spec.rng_seed;
    let var = &spec.variability;

    // artery states: one uniform draw per artery, in declaration order
    let mut state_rng = rng::stream(seed, STREAM_STATES);
    let states: Vec<ArteryState> = spec
        .arteries
        .iter()
        .map(|a| {
            let u: f64 = state_rng.random();
            if a.state != ArteryState::Normal || !a.variable {
                a.state
            } else if u < var.p_aplasia {
                ArteryState::Aplastic
            } else if u < var.p_aplasia + var.p_hypoplasia {
                ArteryState::Hypoplastic
            } else {
                ArteryState::Normal
            }
        })
        .collect();

    // control-point jitter; anchors move once so junctions stay shared
    let mut jitter_rng = rng::stream(seed, STREAM_JITTER);
    let sigma = var.jitter_sigma_mm;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let jitter = |rng: &mut rng::Rng| -> Point3 {
        let mut d = [0.0; 3];
        for x in d.iter_mut() {
            *x = sigma * normal.sample(rng);
        }
        d
    };
    let mut anchors: BTreeMap<&str, Point3> = BTreeMap::new();
    for (name, p) in &spec.anchors {
        let d = jitter(&mut jitter_rng);
        anchors.insert(name.as_str(), add(*p, d));
    }
    let mut artery_points: Vec<Vec<Point3>> = Vec::with_capacity(spec.arteries.len());
    for a in &spec.arteries {
        let pts = a
            .control_points
            .iter()
            .map(|cp| match cp {
                ControlPoint::Anchor(n) => anchors[n.as_str()],
                ControlPoint::Free(p) => add(*p, jitter(&mut jitter_rng)),
            })
            .collect();
        artery_points.push(pts);
    }

    let mut tree_rng = rng::stream(seed, STREAM_TREES);
    let mut segments: Vec<Segment> = Vec::new();
    for (ai, a) in spec.arteries.iter().enumerate() {
        let state = states[ai];
        let factor = if state == ArteryState::Hypoplastic {
            HYPOPLASIA_RADIUS_FACTOR
        } else {
            1.0
        };
        let radii: Vec<f64> = a.radius_profile.iter().map(|r| r * factor).collect();
        let curve = sample_catmull_rom(&artery_points[ai], &radii, SAMPLE_STEP_MM);
        let key_of = |ci: usize| -> Option<String> {
            match &a.control_points[ci] {
                ControlPoint::Anchor(n) => Some(format!("anchor:{n}")),
                ControlPoint::Free(_) => None,
            }
        };
        let last = a.control_points.len() - 1;
        let start_key = key_of(0).unwrap_or_else(|| format!("{}:start", a.name));
        let end_key = key_of(last).unwrap_or_else(|| format!("{}:end", a.name));

        // trees draw their randomness even for removed arteries to keep streams aligned
        let tree = if a.distal_tree && spec.distal.levels > 0 {
            let n = curve.points.len();
            let tip = curve.points[n - 1];
            let back = curve.points[n.saturating_sub(5).min(n - 2)];
            let dir = normalize(sub(tip, back));
            Some(grow_tree(&spec.distal, &end_key, tip, dir, radii[last], &mut tree_rng))
        } else {
            None
        };
        if state == ArteryState::Aplastic {
            continue;
        }

        let mut cut_keys: Vec<(usize, String)> = vec![(0, start_key)];
        for ci in 1..last {
            if let Some(k) = key_of(ci) {
                cut_keys.push((curve.control_index[ci], k));
            }
        }
        cut_keys.push((curve.points.len() - 1, end_key));
        for w in cut_keys.windows(2) {
            let (s, ref ka) = w[0];
            let (e, ref kb) = w[1];
            segments.push(Segment {
                a: ka.clone(),
                b: kb.clone(),
                points: curve.points[s..=e].to_vec(),
                radii: curve.radii[s..=e].to_vec(),
            });
        }
        if let Some(t) = tree {
            segments.extend(t);
        }
    }

    // global rotation about the raster center
    let mut rot_rng = rng::stream(seed, STREAM_ROTATION);
    let axis = loop {
        let v = [
            normal.sample(&mut rot_rng),
            normal.sample(&mut rot_rng),
            normal.sample(&mut rot_rng),
        ];
        if norm(v) > 1e-9 {
            break normalize(v);
        }
    };
    let angle = rot_rng.random::<f64>() * var.global_rotation_max_deg.to_radians();
    let rot = rotation_matrix(axis, angle);
    let center = spec.raster.center();
    if angle != 0.0 {
        for s in &mut segments {
            for p in &mut s.points {
                *p = add(center, mat_vec(&rot, sub(*p, center)));
            }
        }
    }

    let (graph, key_to_node) = assemble_graph(segments);
    let degrees = graph.degrees();
    let mut labeled_centers = Vec::new();
    let mut labeled_nodes = std::collections::HashSet::new();
    for (anchor, &label) in &spec.boi_labels {
        if let Some(&ni) = key_to_node.get(&format!("anchor:{anchor}")) {
            if degrees[ni] >= 3 {
                labeled_centers.push(LabeledCenter {
                    pos: graph.nodes[ni].pos,
                    label,
                });
                labeled_nodes.insert(ni);
            }
        }
    }
    labeled_centers.sort_by_key(|c| c.label);
    let bn_centers = (0..graph.nodes.len())
        .filter(|&i| degrees[i] >= 3 && !labeled_nodes.contains(&i))
        .map(|i| graph.nodes[i].pos)
        .collect();
    let artery_states = spec
        .arteries
        .iter()
        .zip(&states)
        .map(|(a, &s)| (a.name.clone(), s))
        .collect();
    Ok(GroundTruth {
        graph,
        labeled_centers,
        bn_centers,
        artery_states,
    })
}

fn grow_tree(
    d: &DistalTreeSpec,
    root_key: &str,
    root: Point3,
    dir: Point3,
    radius: f64,
    rng: &mut rng::Rng,
) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut frontier = vec![(root_key.to_string(), root, dir, radius)];
    for level in 0..d.levels {
        let [lmin, lmax] = d.segment_length_mm[level];
        let mut next = Vec::new();
        for (key, p, dir, r) in frontier {
            let spread = (d.angle_min_deg + rng.random::<f64>() * (d.angle_max_deg - d.angle_min_deg)).to_radians();
            let roll = rng.random::<f64>() * std::f64::consts::TAU;
            let (u, w) = orthonormal_pair(dir);
            let n = add(scale(u, roll.cos()), scale(w, roll.sin()));
            let side = cross(n, dir);
            let child_r = r * d.radius_decay;
            for (ci, sign) in [1.0f64, -1.0].into_iter().enumerate() {
                let half = 0.5 * spread;
                let cdir = normalize(add(scale(dir, half.cos()), scale(side, sign * half.sin())));
                let len = lmin + rng.random::<f64>() * (lmax - lmin);
                let bend = (rng.random::<f64>() * 2.0 - 1.0) * d.max_bend_fraction * len;
                let end = add(p, scale(cdir, len));
                let mid = add(add(p, scale(cdir, 0.5 * len)), scale(n, bend));
                let pts = sample_quadratic(p, mid, end, SAMPLE_STEP_MM);
                let child_key = format!("{key}/{ci}");
                let radii = vec![child_r; pts.len()];
                out.push(Segment {
                    a: key.clone(),
                    b: child_key.clone(),
                    points: pts,
                    radii,
                });
                let tangent = normalize(sub(end, mid));
                next.push((child_key, end, tangent, child_r));
            }
        }
        frontier = next;
    }
    out
}

/// Merges pass-through (degree-2) junctions and numbers the remaining nodes.
fn assemble_graph(mut segments: Vec<Segment>) -> (VesselGraph, HashMap<String, usize>) {
    loop {
        let mut incident: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in segments.iter().enumerate() {
            incident.entry(s.a.as_str()).or_default().push(i);
            incident.entry(s.b.as_str()).or_default().push(i);
        }
        let merge = incident
            .iter()
            .find(|(_, v)| v.len() == 2 && v[0] != v[1])
            .map(|(k, v)| (k.to_string(), v[0], v[1]));
        let Some((key, i, j)) = merge else { break };
        let second = segments.remove(j);
        let first = &mut segments[i];
        if first.a == key {
            first.points.reverse();
            first.radii.reverse();
            std::mem::swap(&mut first.a, &mut first.b);
        }
        let (mut pts, mut radii, far) = if second.a == key {
            (second.points, second.radii, second.b)
        } else {
            let mut p = second.points;
            let mut r = second.radii;
            p.reverse();
            r.reverse();
            (p, r, second.a)
        };
        pts.remove(0);
        radii.remove(0);
        first.points.extend(pts);
        first.radii.extend(radii);
        first.b = far;
    }

    let mut key_to_node: HashMap<String, usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges = Vec::with_capacity(segments.len());
    let mut node_for = |key: &str, pos: Point3, nodes: &mut Vec<Node>| -> usize {
        if let Some(&i) = key_to_node.get(key) {
            return i;
        }
        let id = nodes.len();
        nodes.push(Node {
            id,
            pos,
            kind: NodeKind::Endpoint,
        });
        key_to_node.insert(key.to_string(), id);
        id
    };
    for s in segments {
        let a = node_for(&s.a, s.points[0], &mut nodes);
        let b = node_for(&s.b, *s.points.last().unwrap(), &mut nodes);
        edges.push(Edge {
            a,
            b,
            points: s.points,
            radii: s.radii,
        });
    }
    let mut graph = VesselGraph { nodes, edges };
    let deg = graph.degrees();
    for (n, d) in graph.nodes.iter_mut().zip(deg) {
        n.kind = if d >= 3 {
            NodeKind::Bifurcation
        } else {
            NodeKind::Endpoint
        };
    }
    (graph, key_to_node)
}

#[inline]
fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn norm(a: Point3) -> f64 {
    dist(a, [0.0; 3])
}
fn normalize(a: Point3) -> Point3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}
fn orthonormal_pair(d: Point3) -> (Point3, Point3) {
    let helper = if d[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = normalize(cross(d, helper));
    let w = cross(d, u);
    (u, w)
}
fn rotation_matrix(axis: Point3, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}
fn mat_vec(m: &[[f64; 3]; 3], v: Point3) -> Point3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Template with all randomness switched off: no jitter, rotation or variant states.
pub fn noiseless_template(seed: u64) -> PhantomSpec {
    let mut spec = default_cow_template();
    spec.rng_seed = seed;
    spec.variability = Variability {
        p_hypoplasia: 0.0,
        p_aplasia: 0.0,
        jitter_sigma_mm: 0.0,
        global_rotation_max_deg: 0.0,
    };
    spec.raster.noise_sigma = 0.0;
    spec
}
