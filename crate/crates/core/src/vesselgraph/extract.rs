use std::collections::{BTreeMap, HashMap, HashSet};

use super::edt::distance_transform_mm;
use super::segment::SegmentationMask;
use super::{dist, polyline_length, Edge, Node, NodeKind, Point3, VesselGraph};

/// Post-processing knobs for [`extract_graph_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Terminal edges shorter than `spur_radius_factor · r_junction + spur_extra_voxels · spacing`
    /// are removed as thinning artefacts. `0, 0` disables pruning.
    pub spur_radius_factor: f64,
    pub spur_extra_voxels: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            spur_radius_factor: 1.0,
            spur_extra_voxels: 1.5,
        }
    }
}

/// Centreline graph of a skeleton with radii from the mask's distance transform.
pub fn extract_graph(skeleton: &SegmentationMask, mask: &SegmentationMask) -> VesselGraph {
    extract_graph_with(skeleton, mask, ExtractOptions::default())
}

pub fn extract_graph_with(skeleton: &SegmentationMask, mask: &SegmentationMask, opts: ExtractOptions) -> VesselGraph {
    let edt = distance_transform_mm(mask);
    let min_spacing = mask.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    // guard against skeleton voxels outside the mask: radius is never below half a voxel
    let radius_at = |idx: usize| edt[idx].max(0.5 * min_spacing);
    let raw = trace(skeleton, &radius_at);
    let pruned = prune_spurs(raw, &opts, min_spacing);
    finalize(pruned)
}

struct RawGraph {
    nodes: Vec<Point3>,
    node_radius: Vec<f64>,
    loop_nodes: HashSet<usize>,
    edges: Vec<Edge>,
}

fn trace(sk: &SegmentationMask, radius_at: &dyn Fn(usize) -> f64) -> RawGraph {
    let fg: Vec<usize> = (0..sk.data.len()).filter(|&i| sk.data[i]).collect();
    let nbrs = |i: usize| -> Vec<usize> { sk.neighbors26(i).filter(|&n| sk.data[n]).collect() };
    let degree: HashMap<usize, usize> = fg.iter().map(|&i| (i, nbrs(i).len())).collect();

    // junction voxels (≥3 neighbours) clustered by 26-adjacency
    let mut node_of: HashMap<usize, usize> = HashMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &start in &fg {
        if degree[&start] < 3 || node_of.contains_key(&start) {
            continue;
        }
        let id = clusters.len();
        let mut comp = vec![start];
        node_of.insert(start, id);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for n in nbrs(v) {
                if degree[&n] >= 3 && !node_of.contains_key(&n) {
                    node_of.insert(n, id);
                    comp.push(n);
                    stack.push(n);
                }
            }
        }
        clusters.push(comp);
    }
    // two-neighbour voxels wedged between voxels of one cluster belong to it
    for &i in &fg {
        if degree[&i] == 2 && !node_of.contains_key(&i) {
            let ns = nbrs(i);
            if let (Some(&a), Some(&b)) = (node_of.get(&ns[0]), node_of.get(&ns[1])) {
                if a == b {
                    node_of.insert(i, a);
                    clusters[a].push(i);
                }
            }
        }
    }
    for &i in &fg {
        if degree[&i] == 1 && !node_of.contains_key(&i) {
            node_of.insert(i, clusters.len());
            clusters.push(vec![i]);
        }
    }

    let mut nodes = Vec::with_capacity(clusters.len());
    let mut node_radius = Vec::with_capacity(clusters.len());
    for c in &mut clusters {
        c.sort_unstable();
        let mut p = [0.0; 3];
        for &v in c.iter() {
            let q = sk.voxel_center_mm(v);
            for a in 0..3 {
                p[a] += q[a];
            }
        }
        for x in &mut p {
            *x /= c.len() as f64;
        }
        nodes.push(p);
        node_radius.push(c.iter().map(|&v| radius_at(v)).fold(0.0, f64::max));
    }

    let mut visited: HashSet<usize> = HashSet::new();
    let mut direct: HashSet<(usize, usize)> = HashSet::new();
    let mut edges = Vec::new();
    for (nid, cluster) in clusters.iter().enumerate() {
        for &cv in cluster {
            for first in nbrs(cv) {
                if let Some(&other) = node_of.get(&first) {
                    if other != nid {
                        let key = (cv.min(first), cv.max(first));
                        if direct.insert(key) {
                            edges.push(Edge {
                                a: nid,
                                b: other,
                                points: vec![nodes[nid], nodes[other]],
                                radii: vec![node_radius[nid], node_radius[other]],
                            });
                        }
                    }
                    continue;
                }
                if visited.contains(&first) {
                    continue;
                }
                let mut path = vec![first];
                visited.insert(first);
                let mut prev = cv;
                let mut cur = first;
                let end = loop {
                    let next = nbrs(cur).into_iter().find(|&n| n != prev && !path.contains(&n));
                    match next {
                        Some(n) if node_of.contains_key(&n) => break Some(node_of[&n]),
                        Some(n) if !visited.contains(&n) => {
                            visited.insert(n);
                            path.push(n);
                            prev = cur;
                            cur = n;
                        }
                        _ => break None,
                    }
                };
                let Some(end) = end else { continue };
                if end == nid && path.len() <= 2 {
                    continue;
                }
                let mut points = vec![nodes[nid]];
                let mut radii = vec![node_radius[nid]];
                for &v in &path {
                    points.push(sk.voxel_center_mm(v));
                    radii.push(radius_at(v));
                }
                points.push(nodes[end]);
                radii.push(node_radius[end]);
                edges.push(Edge {
                    a: nid,
                    b: end,
                    points,
                    radii,
                });
            }
        }
    }

    // isolated cycles of two-neighbour voxels
    let mut loop_nodes = HashSet::new();
    for &start in &fg {
        if node_of.contains_key(&start) || visited.contains(&start) || degree[&start] != 2 {
            continue;
        }
        let id = nodes.len();
        nodes.push(sk.voxel_center_mm(start));
        node_radius.push(radius_at(start));
        loop_nodes.insert(id);
        visited.insert(start);
        let mut points = vec![sk.voxel_center_mm(start)];
        let mut radii = vec![radius_at(start)];
        let mut prev = start;
        let mut cur = nbrs(start)[0];
        while cur != start && !visited.contains(&cur) {
            visited.insert(cur);
            points.push(sk.voxel_center_mm(cur));
            radii.push(radius_at(cur));
            let next = nbrs(cur).into_iter().find(|&n| n != prev);
            prev = cur;
            match next {
                Some(n) => cur = n,
                None => break,
            }
        }
        points.push(nodes[id]);
        radii.push(node_radius[id]);
        edges.push(Edge {
            a: id,
            b: id,
            points,
            radii,
        });
    }
    RawGraph {
        nodes,
        node_radius,
        loop_nodes,
        edges,
    }
}

fn degrees(n: usize, edges: &[Edge]) -> Vec<usize> {
    let mut d = vec![0; n];
    for e in edges {
        d[e.a] += 1;
        d[e.b] += 1;
    }
    d
}

/// Removes short terminal edges hanging off junctions, then merges pass-through nodes.
fn prune_spurs(mut g: RawGraph, opts: &ExtractOptions, spacing: f64) -> RawGraph {
    loop {
        let deg = degrees(g.nodes.len(), &g.edges);
        let mut remove = None;
        let mut best = f64::INFINITY;
        for (i, e) in g.edges.iter().enumerate() {
            let hub = match (deg[e.a], deg[e.b]) {
                (1, d) if d >= 3 => e.b,
                (d, 1) if d >= 3 => e.a,
                _ => continue,
            };
            let limit = opts.spur_radius_factor * g.node_radius[hub] + opts.spur_extra_voxels * spacing;
            let len = e.arc_length();
            if len < limit && len < best {
                best = len;
                remove = Some(i);
            }
        }
        let Some(i) = remove else { break };
        g.edges.remove(i);
        merge_pass_through(&mut g);
    }
    g
}

fn merge_pass_through(g: &mut RawGraph) {
    loop {
        let deg = degrees(g.nodes.len(), &g.edges);
        let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in g.edges.iter().enumerate() {
            if e.a != e.b {
                incident.entry(e.a).or_default().push(i);
                incident.entry(e.b).or_default().push(i);
            }
        }
        let found = incident
            .iter()
            .find(|(n, es)| deg[**n] == 2 && es.len() == 2 && !g.loop_nodes.contains(n))
            .map(|(&n, es)| (n, es[0], es[1]));
        let Some((node, i, j)) = found else { return };
        let second = g.edges.remove(j);
        let first = &mut g.edges[i];
        if first.a == node {
            first.points.reverse();
            first.radii.reverse();
            std::mem::swap(&mut first.a, &mut first.b);
        }
        let (mut pts, mut radii, far) = if second.a == node {
            (second.points, second.radii, second.b)
        } else {
            let (mut p, mut r) = (second.points, second.radii);
            p.reverse();
            r.reverse();
            (p, r, second.a)
        };
        pts.remove(0);
        radii.remove(0);
        first.points.extend(pts);
        first.radii.extend(radii);
        first.b = far;
        if first.a == first.b {
            // a merged ring keeps its node as the loop anchor
            g.loop_nodes.insert(first.a);
        }
    }
}

fn finalize(g: RawGraph) -> VesselGraph {
    let deg = degrees(g.nodes.len(), &g.edges);
    let mut remap = vec![usize::MAX; g.nodes.len()];
    let mut nodes = Vec::new();
    for (i, &p) in g.nodes.iter().enumerate() {
        if deg[i] == 0 {
            continue;
        }
        let kind = if deg[i] >= 3 {
            NodeKind::Bifurcation
        } else if g.loop_nodes.contains(&i) {
            NodeKind::Loop
        } else {
            NodeKind::Endpoint
        };
        remap[i] = nodes.len();
        nodes.push(Node {
            id: nodes.len(),
            pos: p,
            kind,
        });
    }
    let edges = g
        .edges
        .into_iter()
        .map(|mut e| {
            e.a = remap[e.a];
            e.b = remap[e.b];
            dedupe_points(&mut e);
            e
        })
        .collect();
    VesselGraph { nodes, edges }
}

/// Drops consecutive duplicate points (a node centroid can coincide with a voxel centre).
fn dedupe_points(e: &mut Edge) {
    let mut pts = Vec::with_capacity(e.points.len());
    let mut radii = Vec::with_capacity(e.radii.len());
    for (p, r) in e.points.iter().zip(&e.radii) {
        if pts.last().is_some_and(|q: &Point3| dist(*q, *p) < 1e-12) {
            continue;
        }
        pts.push(*p);
        radii.push(*r);
    }
    if pts.len() >= 2 || e.a == e.b {
        e.points = pts;
        e.radii = radii;
    }
    if e.points.len() < 2 {
        e.points.push(e.points[0]);
        e.radii.push(e.radii[0]);
    }
    debug_assert!(polyline_length(&e.points).is_finite());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vesselgraph::skeletonize;

    fn mask_with(dims: [usize; 3], voxels: &[[usize; 3]]) -> SegmentationMask {
        let mut m = SegmentationMask::empty(dims, [1.0; 3], [0.0; 3]);
        for v in voxels {
            let i = m.index(v[0], v[1], v[2]);
            m.data[i] = true;
        }
        m
    }

    #[test]
    fn straight_line_is_one_edge() {
        let vox: Vec<[usize; 3]> = (1..9).map(|i| [i, 2, 2]).collect();
        let m = mask_with([10, 5, 5], &vox);
        let g = extract_graph(&m, &m);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert!(g.nodes.iter().all(|n| n.kind == NodeKind::Endpoint));
        assert!((g.edges[0].arc_length() - 7.0).abs() < 1e-12);
        g.validate(0.5).unwrap();
    }

    #[test]
    fn canonical_y() {
        let mut vox = vec![[6, 6, 3]];
        for t in 1..6 {
            vox.push([6 - t, 6, 3]);
            vox.push([6 + t, 6 + t, 3]);
            vox.push([6 + t, 6 - t, 3]);
        }
        let m = mask_with([13, 13, 7], &vox);
        let g = extract_graph_with(
            &m,
            &m,
            ExtractOptions {
                spur_radius_factor: 0.0,
                spur_extra_voxels: 0.0,
            },
        );
        let deg = g.degrees();
        assert_eq!(g.edges.len(), 3);
        assert_eq!(deg.iter().filter(|&&d| d == 3).count(), 1);
        assert_eq!(deg.iter().filter(|&&d| d == 1).count(), 3);
        let hub = deg.iter().position(|&d| d == 3).unwrap();
        assert_eq!(g.nodes[hub].pos, [6.0, 6.0, 3.0]);
        assert_eq!(g.nodes[hub].kind, NodeKind::Bifurcation);
        g.validate(0.5).unwrap();
    }

    #[test]
    fn empty_skeleton_gives_empty_graph() {
        let m = mask_with([4, 4, 4], &[]);
        assert_eq!(extract_graph(&m, &m), VesselGraph::default());
    }

    #[test]
    fn torus_keeps_one_cycle() {
        let (cx, cy, cz, big, small) = (12.0, 12.0, 5.0, 7.0, 2.5);
        let mut vox = Vec::new();
        for k in 0..11 {
            for j in 0..25 {
                for i in 0..25 {
                    let (x, y, z) = (i as f64 - cx, j as f64 - cy, k as f64 - cz);
                    let q = ((x * x + y * y).sqrt() - big).powi(2) + z * z;
                    if q <= small * small {
                        vox.push([i, j, k]);
                    }
                }
            }
        }
        let m = mask_with([25, 25, 11], &vox);
        let s = skeletonize(&m);
        let g = extract_graph(&s, &m);
        assert_eq!(g.cycle_rank(), 1);
        g.validate(0.5).unwrap();
    }

    #[test]
    fn radii_come_from_the_mask() {
        let mut vox = Vec::new();
        for i in 0..20 {
            for j in 0..7 {
                for k in 0..7 {
                    if (j as f64 - 3.0).powi(2) + (k as f64 - 3.0).powi(2) <= 4.0 {
                        vox.push([i + 2, j + 1, k + 1]);
                    }
                }
            }
        }
        let m = mask_with([24, 9, 9], &vox);
        let s = skeletonize(&m);
        let g = extract_graph(&s, &m);
        assert_eq!(g.edges.len(), 1);
        let e = &g.edges[0];
        let mid = e.radii[e.radii.len() / 2];
        // nearest background voxel of the disk sits at offset (2, 1)
        assert!((mid - 5f64.sqrt()).abs() < 1e-9, "mid radius {mid}");
    }
}
