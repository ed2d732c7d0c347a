use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::{LinalgError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(LinalgError::Dimension(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `AᵀA`.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    /// Symmetric within `tol` relative to the largest entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Lower Cholesky factor. Pivots below `n·eps·max(diag)` count as non-positive.
pub(crate) fn cholesky(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.rows;
    let max_diag = (0..n).fold(0.0_f64, |a, i| a.max(m[(i, i)].abs()));
    let floor = (n as f64) * f64::EPSILON * max_diag;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub(crate) fn cholesky_solve(l: &DenseMatrix, rhs: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

fn check_square(m: &DenseMatrix, rhs_len: usize) -> Result<()> {
    if m.rows != m.cols || m.rows != rhs_len || m.rows == 0 {
        return Err(LinalgError::Dimension(format!(
            "{}x{} system with {} right-hand entries",
            m.rows, m.cols, rhs_len
        )));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

/// Solves `M x = rhs` for symmetric positive-definite `M` by Cholesky.
pub fn spd_solve(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    check_square(m, rhs.len())?;
    if !m.is_symmetric(1e-10) {
        return Err(LinalgError::NotSymmetric);
    }
    let l = cholesky(m)?;
    let x = cholesky_solve(&l, rhs);
    warn_if_ill_conditioned(&l);
    Ok(x)
}

fn warn_if_ill_conditioned(l: &DenseMatrix) {
    let n = l.rows;
    let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0_f64), |(lo, hi), i| {
        let d = l[(i, i)];
        (lo.min(d), hi.max(d))
    });
    let estimate = (hi / lo).powi(2);
    if estimate > 1e10 {
        log::warn!("normal equations poorly conditioned (estimate {estimate:.3e})");
    }
}

/// Least squares `argmin ‖Ax − y‖²` through the normal equations. Columns are
/// equilibrated before factorization; the returned Gram matrix is the raw `AᵀA`.
pub fn least_squares(a: &DenseMatrix, y: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows < a.cols || a.rows != y.len() || a.cols == 0 {
        return Err(LinalgError::Dimension(format!(
            "{}x{} least squares with {} observations",
            a.rows,
            a.cols,
            y.len()
        )));
    }
    if !a.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let gram = a.gram();
    let n = a.cols;
    let scale: Vec<f64> = (0..n).map(|i| gram[(i, i)].sqrt()).collect();
    if let Some(i) = scale.iter().position(|&s| s == 0.0) {
        return Err(LinalgError::NotPositiveDefinite { pivot: i, value: 0.0 });
    }
    let mut scaled = gram.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] /= scale[i] * scale[j];
        }
    }
    let rhs: Vec<f64> = a.tr_matvec(y).iter().zip(&scale).map(|(r, s)| r / s).collect();
    let l = cholesky(&scaled)?;
    warn_if_ill_conditioned(&l);
    let z = cholesky_solve(&l, &rhs);
    let x = z.iter().zip(&scale).map(|(zi, s)| zi / s).collect();
    Ok((x, gram))
}

/// LU factorization with partial pivoting, used for indefinite KKT systems.
pub(crate) struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Fails when a pivot falls below `rel_tol` times the largest entry.
    pub(crate) fn factor(mut a: Vec<f64>, n: usize, rel_tol: f64) -> Option<Lu> {
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return None;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) =
                (k..n).map(|i| (i, a[i * n + k].abs())).fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= rel_tol * scale {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = f;
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        Some(Lu { n, lu: a, perm })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    if m.rows != m.cols {
        return Err(LinalgError::Dimension("eigenvalues of a non-square matrix".into()));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.rows;
    let mut a = m.clone();
    let total = a.norm();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
