//! Small dense linear algebra: row-major matrices, cyclic Jacobi, Cholesky and Lanczos.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue.
/// `vectors` holds eigenvector `i` in column `i`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps until the off-diagonal norm drops below `1e-12` times the Frobenius norm.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: a.cols,
        });
    }
    let n = a.rows;
    let mut m = a.clone();
    // symmetrize against round-off in the caller's construction
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let mut v = Matrix::identity(n);
    let fro = m.frobenius();
    let tol = 1e-12 * fro;
    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut converged = fro == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged || off(&m) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off(&m) > tol {
        return Err(Error::Numeric("jacobi eigensolver did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Flips `v` so its largest-magnitude entry is positive (first such entry on ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Numeric(format!(
                        "matrix not positive definite (pivot {i} = {s})"
                    )));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// `log det` of `L Lᵀ`.
pub fn cholesky_logdet(l: &Matrix) -> f64 {
    (0..l.rows).map(|i| 2.0 * l[(i, i)].ln()).sum()
}

/// The `k` algebraically largest eigenpairs of a symmetric matrix by Lanczos
/// iteration with full reorthogonalization.
///
/// The Krylov dimension doubles until every requested Ritz pair has a residual
/// below `1e-10 * ‖a‖_F`, or the space is exhausted (then the result is exact up
/// to round-off). The start vector is a fixed deterministic sequence.
pub fn lanczos_top_k(a: &Matrix, k: usize) -> Result<SymmetricEigen> {
    let n = a.rows;
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: a.cols,
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot take {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let scale = a.frobenius();
    if scale == 0.0 {
        let mut vectors = Matrix::zeros(n, k);
        for i in 0..k {
            vectors[(i, i)] = 1.0;
        }
        return Ok(SymmetricEigen {
            values: vec![0.0; k],
            vectors,
        });
    }
    let tol = 1e-10 * scale;
    let mut m = (2 * k + 20).min(n);
    loop {
        let (basis, alpha, beta) = lanczos_basis(a, m);
        let steps = alpha.len();
        let mut t = Matrix::zeros(steps, steps);
        for i in 0..steps {
            t[(i, i)] = alpha[i];
            if i + 1 < steps {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = jacobi_eigen(&t)?;
        let take = k.min(steps);
        let mut vectors = Matrix::zeros(n, k);
        let mut worst = 0.0f64;
        for c in 0..take {
            let s = eig.vector(c);
            let mut y = vec![0.0; n];
            for (j, q) in basis.iter().enumerate() {
                let w = s[j];
                for (yi, qi) in y.iter_mut().zip(q) {
                    *yi += w * qi;
                }
            }
            let ny = norm(&y);
            y.iter_mut().for_each(|x| *x /= ny);
            let ay = a.matvec(&y);
            let theta = eig.values[c];
            let r: f64 = ay
                .iter()
                .zip(&y)
                .map(|(p, q)| (p - theta * q).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
            for i in 0..n {
                vectors[(i, c)] = y[i];
            }
        }
        if (worst <= tol && take == k) || m >= n {
            if take < k {
                return Err(Error::Numeric("krylov space smaller than requested rank".into()));
            }
            return Ok(SymmetricEigen {
                values: eig.values[..k].to_vec(),
                vectors,
            });
        }
        m = (2 * m).min(n);
    }
}

fn start_vector(n: usize, salt: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = (i as f64 + 1.0) * (0.618_033_988_749_895 + salt as f64 * 0.414_213_562);
            1.0 + (x.fract() - 0.5)
        })
        .collect()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn lanczos_basis(a: &Matrix, m: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = a.rows;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let mut q = start_vector(n, 0);
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let mut salt = 1;
    while basis.len() < m {
        let mut w = a.matvec(&q);
        let al = dot(&w, &q);
        basis.push(q);
        alpha.push(al);
        if basis.len() == m {
            break;
        }
        orthogonalize(&mut w, &basis);
        let mut b = norm(&w);
        if b < 1e-12 * a.frobenius().max(1e-300) {
            // invariant subspace found: continue with a fresh orthogonal direction
            let mut found = false;
            while salt < 64 {
                let mut r = start_vector(n, salt);
                salt += 1;
                orthogonalize(&mut r, &basis);
                let nr = norm(&r);
                if nr > 1e-8 {
                    w = r.iter().map(|x| x / nr).collect();
                    found = true;
                    break;
                }
            }
            if !found {
                break;
            }
            b = 0.0;
            beta.push(b);
            q = w;
            continue;
        }
        beta.push(b);
        q = w.iter().map(|x| x / b).collect();
    }
    (basis, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::rng_from_seed(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = rng.random_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = random_symmetric(12, 3);
        let e = jacobi_eigen(&a).unwrap();
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let vt = e.vectors.transpose();
        let mut d = Matrix::zeros(12, 12);
        for i in 0..12 {
            d[(i, i)] = e.values[i];
        }
        let back = e.vectors.matmul(&d).matmul(&vt);
        for (x, y) in back.data.iter().zip(&a.data) {
            assert!((x - y).abs() < 1e-10);
        }
        let vtv = vt.matmul(&e.vectors);
        for i in 0..12 {
            for j in 0..12 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_solves() {
        let b = random_symmetric(6, 9);
        let mut a = b.matmul(&b.transpose());
        for i in 0..6 {
            a[(i, i)] += 1.0;
        }
        let l = cholesky(&a).unwrap();
        let llt = l.matmul(&l.transpose());
        for (x, y) in llt.data.iter().zip(&a.data) {
            assert!((x - y).abs() < 1e-10);
        }
        let rhs = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let y = solve_lower(&l, &rhs);
        let x = solve_lower_transpose(&l, &y);
        let ax = a.matvec(&x);
        for (p, q) in ax.iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-9);
        }
        assert!(cholesky(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn lanczos_matches_jacobi_on_top_pairs() {
        for seed in 0..5 {
            let a = random_symmetric(40, seed);
            let full = jacobi_eigen(&a).unwrap();
            let top = lanczos_top_k(&a, 5).unwrap();
            for i in 0..5 {
                assert!((full.values[i] - top.values[i]).abs() < 1e-8, "seed {seed} pair {i}");
                let c = dot(&full.vector(i), &top.vector(i)).abs();
                assert!((c - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lanczos_handles_low_rank() {
        // rank-2 matrix: invariant subspace is hit early
        let u = [1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 0.0, 3.0];
        let v = [0.0, 1.0, 1.0, 0.0, 0.0, -2.0, 1.0, 0.0];
        let mut a = Matrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                a[(i, j)] = 3.0 * u[i] * u[j] + v[i] * v[j];
            }
        }
        let top = lanczos_top_k(&a, 3).unwrap();
        let full = jacobi_eigen(&a).unwrap();
        for i in 0..3 {
            assert!((top.values[i] - full.values[i]).abs() < 1e-9);
        }
    }
}
