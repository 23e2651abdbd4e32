use super::bifurcation::Bifurcation;
use super::dist;
use crate::label::ClassLabel;
use crate::phantom::{GroundTruth, LabeledCenter};

pub const DEFAULT_MATCH_TOL_MM: f64 = 1.5;

/// Labels detections from the ground truth: closest pairs within `tol_mm` are
/// matched first, each GT centre and each detection at most once; everything
/// unmatched becomes BN.
pub fn match_to_ground_truth(bifs: &[Bifurcation], gt: &GroundTruth, tol_mm: f64) -> Vec<Bifurcation> {
    match_to_centers(bifs, &gt.labeled_centers, tol_mm)
}

/// As [`match_to_ground_truth`], against labeled centers read back from disk.
pub fn match_to_centers(bifs: &[Bifurcation], centers: &[LabeledCenter], tol_mm: f64) -> Vec<Bifurcation> {
    let mut pairs = Vec::new();
    for (i, b) in bifs.iter().enumerate() {
        for (j, c) in centers.iter().enumerate() {
            let d = dist(b.center, c.pos);
            if d <= tol_mm {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut label = vec![ClassLabel::BN; bifs.len()];
    let mut det_used = vec![false; bifs.len()];
    let mut gt_used = vec![false; centers.len()];
    for (_, i, j) in pairs {
        if !det_used[i] && !gt_used[j] {
            det_used[i] = true;
            gt_used[j] = true;
            label[i] = centers[j].label;
        }
    }
    bifs.iter()
        .zip(label)
        .map(|(b, l)| Bifurcation {
            label: Some(l),
            ..b.clone()
        })
        .collect()
}

/// Minimum-cost one-to-one assignment of rows to columns (Hungarian method).
///
/// Returns the column chosen for each row; rows beyond the column count get `None`.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    let n = rows.max(cols);
    let big = cost
        .iter()
        .flatten()
        .copied()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |m, c| m.max(c.abs()))
        * 4.0
        + 1.0;
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            let c = cost[i][j];
            if c.is_finite() {
                c
            } else {
                big
            }
        } else {
            0.0
        }
    };
    // potentials formulation, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}
