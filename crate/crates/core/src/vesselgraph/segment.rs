use serde::{Deserialize, Serialize};

use crate::volume::Volume3D;

/// Components with fewer voxels than this are dropped by [`segment`].
pub const MIN_COMPONENT_VOXELS: usize = 27;

/// Binary mask on the grid of its source volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMask {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub data: Vec<bool>,
}

pub(crate) const OFFSETS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut k = -1;
    while k <= 1 {
        let mut j = -1;
        while j <= 1 {
            let mut i = -1;
            while i <= 1 {
                if !(i == 0 && j == 0 && k == 0) {
                    out[n] = [i, j, k];
                    n += 1;
                }
                i += 1;
            }
            j += 1;
        }
        k += 1;
    }
    out
};

impl SegmentationMask {
    pub fn empty(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        SegmentationMask {
            dims,
            spacing,
            origin,
            data: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn like(v: &Volume3D) -> Self {
        Self::empty(v.dims(), v.spacing(), v.origin())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Value at a signed index; anything outside the grid is background.
    #[inline]
    pub fn get(&self, i: i64, j: i64, k: i64) -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return false;
        }
        self.data[self.index(i, j, k)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn voxel_center_mm(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        [
            self.origin[0] + c[0] as f64 * self.spacing[0],
            self.origin[1] + c[1] as f64 * self.spacing[1],
            self.origin[2] + c[2] as f64 * self.spacing[2],
        ]
    }

    /// Linear indices of the in-grid 26-neighbours of `idx`.
    pub(crate) fn neighbors26(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(idx);
        OFFSETS_26.iter().filter_map(move |o| {
            let p = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
            if (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a]) {
                Some(self.index(p[0] as usize, p[1] as usize, p[2] as usize))
            } else {
                None
            }
        })
    }

    /// 26-connected components as lists of linear indices, in scan order of their first voxel.
    pub fn components_26(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.data.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                comp.push(v);
                for n in self.neighbors26(v) {
                    if self.data[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}

/// Global threshold followed by removal of 26-connected components under
/// [`MIN_COMPONENT_VOXELS`] voxels.
pub fn segment(v: &Volume3D, threshold: f64) -> SegmentationMask {
    let mut mask = SegmentationMask::like(v);
    let t = threshold as f32;
    for (m, &x) in mask.data.iter_mut().zip(v.data()) {
        *m = x >= t;
    }
    for comp in mask.components_26() {
        if comp.len() < MIN_COMPONENT_VOXELS {
            for i in comp {
                mask.data[i] = false;
            }
        }
    }
    mask
}
