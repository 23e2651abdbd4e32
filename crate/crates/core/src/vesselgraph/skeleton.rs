use super::segment::SegmentationMask;

/// Index into a 3×3×3 neighbourhood cube, centre = 13.
#[inline]
const fn cube(dx: i64, dy: i64, dz: i64) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

struct CubeAdjacency {
    adj26: Vec<Vec<usize>>,
    adj6_n18: Vec<Vec<usize>>,
    in_n18: [bool; 27],
    face: [usize; 6],
}

fn cube_coords(c: usize) -> [i64; 3] {
    [(c % 3) as i64 - 1, ((c / 3) % 3) as i64 - 1, (c / 9) as i64 - 1]
}

impl CubeAdjacency {
    fn new() -> Self {
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6_n18 = vec![Vec::new(); 27];
        let mut in_n18 = [false; 27];
        for c in 0..27 {
            let p = cube_coords(c);
            let manhattan: i64 = p.iter().map(|x| x.abs()).sum();
            in_n18[c] = c != 13 && manhattan <= 2;
        }
        for a in 0..27 {
            for b in 0..27 {
                if a == b || a == 13 || b == 13 {
                    continue;
                }
                let (pa, pb) = (cube_coords(a), cube_coords(b));
                let d: Vec<i64> = (0..3).map(|i| (pa[i] - pb[i]).abs()).collect();
                if d.iter().all(|&x| x <= 1) {
                    adj26[a].push(b);
                }
                if in_n18[a] && in_n18[b] && d.iter().sum::<i64>() == 1 {
                    adj6_n18[a].push(b);
                }
            }
        }
        let face = [
            cube(-1, 0, 0),
            cube(1, 0, 0),
            cube(0, -1, 0),
            cube(0, 1, 0),
            cube(0, 0, -1),
            cube(0, 0, 1),
        ];
        CubeAdjacency {
            adj26,
            adj6_n18,
            in_n18,
            face,
        }
    }

    /// Simple point for the (26, 6) pair: one 26-component of foreground in N26*
    /// and one 6-component of background in N18* that touches a face neighbour.
    fn is_simple(&self, n: &[bool; 27]) -> bool {
        let mut seen = [false; 27];
        let mut stack = Vec::with_capacity(27);
        let mut fg_components = 0;
        for s in 0..27 {
            if s == 13 || !n[s] || seen[s] {
                continue;
            }
            fg_components += 1;
            if fg_components > 1 {
                return false;
            }
            seen[s] = true;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in &self.adj26[v] {
                    if n[w] && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        if fg_components != 1 {
            return false;
        }
        let mut seen = [false; 27];
        let mut bg_components = 0;
        for &s in &self.face {
            if n[s] || seen[s] {
                continue;
            }
            bg_components += 1;
            if bg_components > 1 {
                return false;
            }
            seen[s] = true;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in &self.adj6_n18[v] {
                    if self.in_n18[w] && !n[w] && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        bg_components == 1
    }
}

fn neighbourhood(m: &SegmentationMask, idx: usize) -> [bool; 27] {
    let c = m.coords(idx);
    let mut n = [false; 27];
    for (ci, slot) in n.iter_mut().enumerate() {
        let o = cube_coords(ci);
        *slot = m.get(c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]);
    }
    n
}

const DIRECTIONS: [[i64; 3]; 6] = [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]];

/// Topology-preserving thinning to a one-voxel-thick 26-connected centreline.
///
/// Each pass runs six directional sub-iterations. Within a sub-iteration the
/// border voxels facing that direction are collected first, then deleted one at
/// a time after re-checking that they are still simple and not line ends.
pub fn skeletonize(mask: &SegmentationMask) -> SegmentationMask {
    let adj = CubeAdjacency::new();
    let mut m = mask.clone();
    let mut fg: Vec<usize> = (0..m.data.len()).filter(|&i| m.data[i]).collect();
    loop {
        let mut deleted = 0usize;
        for d in DIRECTIONS {
            let candidates: Vec<usize> = fg
                .iter()
                .copied()
                .filter(|&i| {
                    let c = m.coords(i);
                    !m.get(c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2])
                })
                .filter(|&i| {
                    let n = neighbourhood(&m, i);
                    n.iter().filter(|&&b| b).count() > 2 && adj.is_simple(&n)
                })
                .collect();
            for i in candidates {
                let n = neighbourhood(&m, i);
                // count includes the centre voxel: >2 means not a line end
                if n.iter().filter(|&&b| b).count() > 2 && adj.is_simple(&n) {
                    m.data[i] = false;
                    deleted += 1;
                }
            }
            fg.retain(|&i| m.data[i]);
        }
        if deleted == 0 {
            return m;
        }
    }
}

/// Number of 26-connected foreground components.
pub fn count_components_26(mask: &SegmentationMask) -> usize {
    mask.components_26().len()
}
