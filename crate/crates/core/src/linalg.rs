//! Small dense linear algebra: a row-major matrix and a one-sided Jacobi SVD.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
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

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Truncated SVD `A ~ U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// n x r, orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative.
    pub sigma: Vec<f64>,
    /// p x r, orthonormal columns.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(&self.sigma)
    }

    /// `U diag(values) V^T` for replacement singular values.
    pub fn reconstruct_with(&self, values: &[f64]) -> Matrix {
        let (n, p) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(n, p);
        for (k, &s) in values.iter().enumerate().filter(|(_, &s)| s != 0.0) {
            for i in 0..n {
                let us = self.u[(i, k)] * s;
                if us == 0.0 {
                    continue;
                }
                for j in 0..p {
                    out[(i, j)] += us * self.v[(j, k)];
                }
            }
        }
        out
    }
}

const MAX_SWEEPS: usize = 100;
const ORTHO_TOL: f64 = 1e-15;

/// Top-`rank` singular triplets of `a` by one-sided Jacobi rotations.
pub fn svd(a: &Matrix, rank: usize) -> Result<SvdFactors> {
    let (n, p) = (a.rows(), a.cols());
    if rank == 0 || rank > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "rank must lie in 1..={}, got {rank}",
            n.min(p)
        )));
    }
    if let Some(idx) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: idx / p,
            col: idx % p,
        });
    }
    if n >= p {
        let (u, sigma, v) = jacobi_tall(a);
        Ok(truncate(u, sigma, v, rank))
    } else {
        let (v, sigma, u) = jacobi_tall(&a.transpose());
        Ok(truncate(u, sigma, v, rank))
    }
}

/// Full thin SVD of a tall matrix (rows >= cols), stored as column lists.
fn jacobi_tall(a: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let (m, n) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma_max = norms[order[0]];
    let floor = sigma_max * m.max(n) as f64 * f64::EPSILON;

    let mut u: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut zero_slots = Vec::new();
    for &k in &order {
        if norms[k] > floor && norms[k] > 0.0 {
            u.push(cols[k].iter().map(|x| x / norms[k]).collect());
            sigma.push(norms[k]);
        } else {
            zero_slots.push(u.len());
            u.push(Vec::new());
            sigma.push(0.0);
        }
    }
    for slot in zero_slots {
        u[slot] = orthonormal_complement(&u, m);
    }
    let v = order.iter().map(|&k| v[k].clone()).collect();
    (u, sigma, v)
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to every nonempty vector in `basis`.
fn orthonormal_complement(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..m {
        let mut cand = vec![0.0; m];
        cand[e] = 1.0;
        // Two Gram-Schmidt passes for numerical orthogonality.
        for _ in 0..2 {
            for b in basis.iter().filter(|b| !b.is_empty()) {
                let proj = dot(&cand, b);
                cand.iter_mut().zip(b).for_each(|(c, bi)| *c -= proj * bi);
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, cand));
        }
        if norm > 0.5 {
            break;
        }
    }
    let (norm, cand) = best.expect("m >= 1");
    cand.into_iter().map(|c| c / norm).collect()
}

fn truncate(u: Vec<Vec<f64>>, sigma: Vec<f64>, v: Vec<Vec<f64>>, rank: usize) -> SvdFactors {
    let to_matrix = |cols: &[Vec<f64>]| {
        let rows = cols[0].len();
        let mut out = Matrix::zeros(rows, rank);
        for (k, col) in cols.iter().take(rank).enumerate() {
            for (r, &x) in col.iter().enumerate() {
                out[(r, k)] = x;
            }
        }
        out
    };
    SvdFactors {
        u: to_matrix(&u),
        sigma: sigma[..rank].to_vec(),
        v: to_matrix(&v),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Soft-thresholds singular values: `U diag(max(sigma - tau, 0)) V^T`.
pub fn shrink(y: &Matrix, tau: f64) -> Result<Matrix> {
    let f = svd(y, y.rows().min(y.cols()))?;
    let shrunk: Vec<f64> = f.sigma.iter().map(|s| (s - tau).max(0.0)).collect();
    Ok(f.reconstruct_with(&shrunk))
}

/// Minimum-norm least-squares solution of `a x = b` via the pseudoinverse.
pub fn lstsq_min_norm(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Shape(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            a.rows()
        )));
    }
    let f = svd(a, a.rows().min(a.cols()))?;
    let cutoff = f.sigma.first().copied().unwrap_or(0.0) * 1e-12 * a.rows().max(a.cols()) as f64;
    let mut x = vec![0.0; a.cols()];
    for (k, &s) in f.sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let coef = (0..a.rows()).map(|i| f.u[(i, k)] * b[i]).sum::<f64>() / s;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += coef * f.v[(j, k)];
        }
    }
    Ok(x)
}
