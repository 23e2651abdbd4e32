//! PCA, LDA and Isomap with fit/transform contracts, plus the z-score
//! standardizer applied before any reduction.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::linalg::{
    cholesky, fix_sign, jacobi_eigen, lanczos_top_k, solve_lower, solve_lower_transpose, Matrix, SymmetricEigen,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PCA_COMPONENTS: usize = 10;
pub const DEFAULT_LDA_COMPONENTS: usize = 8;
pub const DEFAULT_ISOMAP_COMPONENTS: usize = 6;
pub const DEFAULT_ISOMAP_NEIGHBORS: usize = 10;
pub const DEFAULT_LDA_EPS_REL: f64 = 1e-6;
/// Training points averaged by the Isomap out-of-sample transform.
pub const ISOMAP_OOS_NEIGHBORS: usize = 5;
/// Above this size Isomap's MDS step uses Lanczos instead of a full Jacobi sweep.
const ISOMAP_DENSE_LIMIT: usize = 200;

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let d = x
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::InsufficientData("empty matrix".into()))?;
    for (i, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i * d + j });
        }
    }
    Ok(d)
}

fn column_means(x: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in x {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= x.len() as f64);
    m
}

/// Per-dimension z-score with statistics from the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns keep unit scale.
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = check_rows(x)?;
        let mean = column_means(x, d);
        let n = x.len() as f64;
        let std = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                let s = var.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

fn top_k(eig: &SymmetricEigen, k: usize, d: usize) -> (Matrix, Vec<f64>) {
    let mut comps = Matrix::zeros(k, d);
    for c in 0..k {
        let mut v = eig.vector(c);
        fix_sign(&mut v);
        comps.row_mut(c).copy_from_slice(&v);
    }
    (comps, eig.values[..k].to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub version: u32,
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

pub fn pca_fit(x: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let d = check_rows(x)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData("PCA needs at least 2 rows".into()));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!("PCA with k={k} on {n}x{d} data")));
    }
    let mean = column_means(x, d);
    let mut cov = Matrix::zeros(d, d);
    for r in x {
        let c: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = jacobi_eigen(&cov)?;
    let (components, mut eigenvalues) = top_k(&eig, k, d);
    eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(PcaModel {
        version: MODEL_FORMAT_VERSION,
        mean,
        components,
        eigenvalues,
    })
}

impl PcaModel {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components.matvec(&c)
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in z.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.components.row(c)) {
                *o += w * p;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub version: u32,
    pub global_mean: Vec<f64>,
    /// `k × d`.
    pub projection: Matrix,
    pub class_means: Vec<(ClassLabel, Vec<f64>)>,
    pub epsilon: f64,
}

pub fn lda_fit(x: &[Vec<f64>], y: &[ClassLabel], k: usize, eps_rel: f64) -> Result<LdaModel> {
    let d = check_rows(x)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, l) in y.iter().enumerate() {
        groups[l.index()].push(i);
    }
    let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| !groups[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::InsufficientData("LDA needs at least 2 classes".into()));
    }
    if k == 0 || k > (present.len() - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "LDA with k={k} but only {} classes in {d} dimensions",
            present.len()
        )));
    }
    let global_mean = column_means(x, d);
    let mut sw = Matrix::zeros(d, d);
    let mut sb = Matrix::zeros(d, d);
    let mut class_means = Vec::new();
    for &c in &present {
        let rows: Vec<Vec<f64>> = groups[c].iter().map(|&i| x[i].clone()).collect();
        let mu = column_means(&rows, d);
        for r in &rows {
            let v: Vec<f64> = r.iter().zip(&mu).map(|(a, b)| a - b).collect();
            for i in 0..d {
                for j in 0..d {
                    sw[(i, j)] += v[i] * v[j];
                }
            }
        }
        let dm: Vec<f64> = mu.iter().zip(&global_mean).map(|(a, b)| a - b).collect();
        let nc = rows.len() as f64;
        for i in 0..d {
            for j in 0..d {
                sb[(i, j)] += nc * dm[i] * dm[j];
            }
        }
        class_means.push((ClassLabel::from_index(c).unwrap(), mu));
    }
    let epsilon = eps_rel * sw.trace() / d as f64;
    for i in 0..d {
        sw[(i, i)] += epsilon.max(1e-300);
    }
    // Sw = L Lᵀ; eigenvectors of L⁻¹ Sb L⁻ᵀ map back through L⁻ᵀ
    let l = cholesky(&sw)?;
    let mut tmp = Matrix::zeros(d, d);
    for j in 0..d {
        let col = solve_lower(&l, &sb.column(j));
        for i in 0..d {
            tmp[(i, j)] = col[i];
        }
    }
    let mut c = Matrix::zeros(d, d);
    for i in 0..d {
        let row = solve_lower(&l, tmp.row(i));
        for j in 0..d {
            c[(i, j)] = row[j];
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let eig = jacobi_eigen(&c)?;
    let mut projection = Matrix::zeros(k, d);
    for comp in 0..k {
        let mut w = solve_lower_transpose(&l, &eig.vector(comp));
        fix_sign(&mut w);
        projection.row_mut(comp).copy_from_slice(&w);
    }
    Ok(LdaModel {
        version: MODEL_FORMAT_VERSION,
        global_mean,
        projection,
        class_means,
        epsilon,
    })
}

impl LdaModel {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = x.iter().zip(&self.global_mean).map(|(v, m)| v - m).collect();
        self.projection.matvec(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomapModel {
    pub version: u32,
    pub training_points: Vec<Vec<f64>>,
    /// `n × k`, centred columns.
    pub embedding: Matrix,
    pub k_nn: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Symmetric k-NN adjacency lists (ties broken by lower index); components joined
/// by their shortest inter-component edge.
pub fn knn_graph(x: &[Vec<f64>], k_nn: usize) -> Vec<Vec<(usize, f64)>> {
    let n = x.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&x[i], &x[j]).sqrt();
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
        for &j in order.iter().take(k_nn) {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    // join components until connected
    loop {
        let mut comp = vec![usize::MAX; n];
        let mut ncomp = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = ncomp;
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if adj[v][w] && comp[w] == usize::MAX {
                        comp[w] = ncomp;
                        stack.push(w);
                    }
                }
            }
            ncomp += 1;
        }
        if ncomp <= 1 {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            for j in i + 1..n {
                if comp[i] != comp[j] && dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        adj[best.1][best.2] = true;
        adj[best.2][best.1] = true;
    }
    (0..n)
        .map(|i| (0..n).filter(|&j| adj[i][j]).map(|j| (j, dist[i][j])).collect())
        .collect()
}

/// Single-source shortest paths (Dijkstra).
pub fn shortest_paths(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let n = adj.len();
    let mut d = vec![f64::INFINITY; n];
    d[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((OrdF64(0.0), source)));
    while let Some(Reverse((OrdF64(du), u))) = heap.pop() {
        if du > d[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = du + w;
            if nd < d[v] {
                d[v] = nd;
                heap.push(Reverse((OrdF64(nd), v)));
            }
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Double-centred matrix `-½ J D² J` of a distance matrix.
pub fn double_centered(dist: &[Vec<f64>]) -> Matrix {
    let n = dist.len();
    let mut b = Matrix::zeros(n, n);
    let sq: Vec<Vec<f64>> = dist.iter().map(|r| r.iter().map(|d| d * d).collect()).collect();
    let row_mean: Vec<f64> = sq.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let total = row_mean.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + total);
        }
    }
    b
}

pub fn isomap_fit(x: &[Vec<f64>], k: usize, k_nn: usize) -> Result<IsomapModel> {
    check_rows(x)?;
    let n = x.len();
    if n < k_nn + 1 || k_nn == 0 {
        return Err(Error::InsufficientData(format!(
            "Isomap with k_nn={k_nn} needs more than {n} rows"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("Isomap with k={k} on {n} rows")));
    }
    let adj = knn_graph(x, k_nn);
    let geo: Vec<Vec<f64>> = (0..n).map(|s| shortest_paths(&adj, s)).collect();
    let b = double_centered(&geo);
    let eig = if n <= ISOMAP_DENSE_LIMIT {
        jacobi_eigen(&b)?
    } else {
        lanczos_top_k(&b, k)?
    };
    let mut embedding = Matrix::zeros(n, k);
    for c in 0..k {
        let mut v = eig.vector(c);
        fix_sign(&mut v);
        let s = eig.values[c].max(0.0).sqrt();
        for i in 0..n {
            embedding[(i, c)] = v[i] * s;
        }
    }
    // remove round-off drift from the centring
    for c in 0..k {
        let m = (0..n).map(|i| embedding[(i, c)]).sum::<f64>() / n as f64;
        for i in 0..n {
            embedding[(i, c)] -= m;
        }
    }
    Ok(IsomapModel {
        version: MODEL_FORMAT_VERSION,
        training_points: x.to_vec(),
        embedding,
        k_nn,
    })
}

impl IsomapModel {
    /// Weighted average of the embeddings of the 5 nearest training points, weights `1/(d+1e-12)`.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut near: Vec<(f64, usize)> = self
            .training_points
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(p, x).sqrt(), i))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.embedding.cols;
        let mut out = vec![0.0; k];
        let mut wsum = 0.0;
        for &(d, i) in near.iter().take(ISOMAP_OOS_NEIGHBORS) {
            let w = 1.0 / (d + 1e-12);
            wsum += w;
            for (o, e) in out.iter_mut().zip(self.embedding.row(i)) {
                *o += w * e;
            }
        }
        out.iter_mut().for_each(|o| *o /= wsum);
        out
    }

    pub fn embedding_row(&self, i: usize) -> &[f64] {
        self.embedding.row(i)
    }
}

/// Any fitted reduction, for pipelines that choose the method at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Reducer {
    Pca(PcaModel),
    Lda(LdaModel),
    Isomap(IsomapModel),
}

impl Reducer {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Reducer::Pca(m) => m.transform(x),
            Reducer::Lda(m) => m.transform(x),
            Reducer::Isomap(m) => m.transform(x),
        }
    }
}

/// Reduction applied after standardization; `None` feeds standardized features through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrMethod {
    None,
    Pca,
    Lda,
    Isomap,
}

impl DrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DrMethod::None => "none",
            DrMethod::Pca => "pca",
            DrMethod::Lda => "lda",
            DrMethod::Isomap => "isomap",
        }
    }

    pub fn default_components(self) -> usize {
        match self {
            DrMethod::None => 0,
            DrMethod::Pca => DEFAULT_PCA_COMPONENTS,
            DrMethod::Lda => DEFAULT_LDA_COMPONENTS,
            DrMethod::Isomap => DEFAULT_ISOMAP_COMPONENTS,
        }
    }
}

impl std::str::FromStr for DrMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [DrMethod::None, DrMethod::Pca, DrMethod::Lda, DrMethod::Isomap]
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown reduction {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrSpec {
    pub method: DrMethod,
    pub n_components: usize,
    #[serde(default = "default_k_nn")]
    pub k_nn: usize,
    #[serde(default = "default_eps")]
    pub lda_eps_rel: f64,
}

fn default_k_nn() -> usize {
    DEFAULT_ISOMAP_NEIGHBORS
}

fn default_eps() -> f64 {
    DEFAULT_LDA_EPS_REL
}

impl DrSpec {
    pub fn new(method: DrMethod, n_components: usize) -> Self {
        DrSpec {
            method,
            n_components,
            k_nn: DEFAULT_ISOMAP_NEIGHBORS,
            lda_eps_rel: DEFAULT_LDA_EPS_REL,
        }
    }

    pub fn with_defaults(method: DrMethod) -> Self {
        Self::new(method, method.default_components())
    }

    /// Fits on already standardized rows; `None` for the identity.
    pub fn fit(&self, x: &[Vec<f64>], y: &[ClassLabel]) -> Result<Option<Reducer>> {
        Ok(match self.method {
            DrMethod::None => None,
            DrMethod::Pca => Some(Reducer::Pca(pca_fit(x, self.n_components)?)),
            DrMethod::Lda => Some(Reducer::Lda(lda_fit(x, y, self.n_components, self.lda_eps_rel)?)),
            DrMethod::Isomap => Some(Reducer::Isomap(isomap_fit(x, self.n_components, self.k_nn)?)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn gaussian_rows(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut r = rng::rng_from_seed(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| (0..d).map(|_| g.sample(&mut r)).collect()).collect()
    }

    #[test]
    fn pca_rank_one_line() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0]];
        let m = pca_fit(&x, 1).unwrap();
        assert!((m.components[(0, 0)] - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((m.components[(0, 1)] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        let full = pca_fit(&[x.clone(), vec![vec![3.0, 6.0]]].concat(), 2).unwrap();
        assert!(full.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn pca_isotropic_and_reconstruction() {
        let x = gaussian_rows(3, 4000, 4);
        let m = pca_fit(&x, 4).unwrap();
        for v in &m.eigenvalues {
            assert!((v - 1.0).abs() < 0.1, "{v}");
        }
        for r in x.iter().take(20) {
            let back = m.inverse_transform(&m.transform(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(m.components.row(i), m.components.row(j));
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert!(pca_fit(&x, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn pca_conserves_total_variance(seed in 0u64..10_000) {
            let x = gaussian_rows(seed, 20, 6);
            let m = pca_fit(&x, 6).unwrap();
            let mean = column_means(&x, 6);
            let trace: f64 = (0..6)
                .map(|j| x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / 19.0)
                .sum();
            let total: f64 = m.eigenvalues.iter().sum();
            prop_assert!((total - trace).abs() <= 1e-8 * trace);
        }
    }

    fn two_blobs(seed: u64, n: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
        let mut r = rng::rng_from_seed(seed);
        let g = Normal::new(0.0, 0.15).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            x.push(vec![c as f64 * sep + g.sample(&mut r), g.sample(&mut r)]);
            y.push(if c == 0 { ClassLabel::A } else { ClassLabel::B });
        }
        (x, y)
    }

    #[test]
    fn lda_two_blobs_separate_along_x() {
        let (x, y) = two_blobs(1, 200, 1.0);
        let m = lda_fit(&x, &y, 1, DEFAULT_LDA_EPS_REL).unwrap();
        let w = m.projection.row(0);
        let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!((w[0].abs() / n - 1.0).abs() < 0.05);
        let z: Vec<f64> = x.iter().map(|r| m.transform(r)[0]).collect();
        let mean_a = z
            .iter()
            .zip(&y)
            .filter(|(_, l)| **l == ClassLabel::A)
            .map(|(v, _)| v)
            .sum::<f64>()
            / 100.0;
        let mean_b = z
            .iter()
            .zip(&y)
            .filter(|(_, l)| **l == ClassLabel::B)
            .map(|(v, _)| v)
            .sum::<f64>()
            / 100.0;
        let thr = 0.5 * (mean_a + mean_b);
        let errors = z
            .iter()
            .zip(&y)
            .filter(|(v, l)| ((**v > thr) == (mean_b > thr)) != (**l == ClassLabel::B))
            .count();
        assert_eq!(errors, 0);
    }

    #[test]
    fn lda_rank_bound() {
        let x = gaussian_rows(5, 14 * 3, 20);
        let y: Vec<ClassLabel> = (0..42).map(|i| ClassLabel::ALL[i % 14]).collect();
        assert!(lda_fit(&x, &y, 13, 1e-6).is_ok());
        assert!(matches!(lda_fit(&x, &y, 14, 1e-6), Err(Error::InvalidArgument(_))));
        let one = vec![ClassLabel::A; 42];
        assert!(lda_fit(&x, &one, 1, 1e-6).is_err());
    }

    #[test]
    fn lda_is_translation_invariant() {
        let (x, y) = two_blobs(2, 60, 1.0);
        let shifted: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] + 7.5, r[1] - 3.0]).collect();
        let a = lda_fit(&x, &y, 1, 1e-6).unwrap();
        let b = lda_fit(&shifted, &y, 1, 1e-6).unwrap();
        for (r, s) in x.iter().zip(&shifted) {
            assert!((a.transform(r)[0] - b.transform(s)[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn isomap_line_preserves_gaps() {
        let t = [0.0, 0.3, 1.0, 1.2, 2.5, 2.6, 3.9, 4.0, 5.5, 6.0, 7.25, 8.0];
        let x: Vec<Vec<f64>> = t.iter().map(|&s| vec![1.0 + s * 0.6, 2.0 - s * 0.8, 0.5]).collect();
        let m = isomap_fit(&x, 1, 3).unwrap();
        for i in 1..t.len() {
            let gap = (m.embedding[(i, 0)] - m.embedding[(i - 1, 0)]).abs();
            assert!((gap - (t[i] - t[i - 1])).abs() < 1e-9);
        }
        let col_mean: f64 = (0..t.len()).map(|i| m.embedding[(i, 0)]).sum::<f64>() / t.len() as f64;
        assert!(col_mean.abs() < 1e-8);
        // a training point is its own nearest neighbour at distance 0
        for i in 0..t.len() {
            let z = m.transform(&x[i]);
            assert!((z[0] - m.embedding[(i, 0)]).abs() < 1e-9);
        }
    }

    #[test]
    fn disconnected_clusters_are_joined() {
        let mut x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        x.extend((0..6).map(|i| vec![50.0 + i as f64 * 0.1, 0.0]));
        let adj = knn_graph(&x, 2);
        let d = shortest_paths(&adj, 0);
        assert!(d.iter().all(|v| v.is_finite()));
        // 0.5 along the first cluster, then the 49.5 bridge
        assert!((d[6] - 50.0).abs() < 1e-9);
    }
}
