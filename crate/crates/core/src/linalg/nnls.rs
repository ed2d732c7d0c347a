//! Lawson-Hanson nonnegative least squares working on the design matrix
//! itself. Forming `AᵀA` squares the condition number, which is fatal for
//! nearly collinear regressors such as neighbouring exponential kernels.

use std::ops::Range;

use super::{DenseMatrix, LinalgError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Householder QR of the chosen columns; `None` when they are numerically
/// dependent.
fn qr_solve(a: &DenseMatrix, cols: &[usize], y: &[f64]) -> Option<Vec<f64>> {
    let m = a.rows();
    let n = cols.len();
    let mut q: Vec<Vec<f64>> = cols.iter().map(|&j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let mut rhs = y.to_vec();
    let col_norm = q.iter().map(|c| super::norm(c)).fold(0.0, f64::max);
    for k in 0..n {
        let alpha = q[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha <= 1e-11 * col_norm {
            return None;
        }
        let alpha = if q[k][k] > 0.0 { -alpha } else { alpha };
        let mut v: Vec<f64> = q[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for c in q.iter_mut().skip(k).chain(std::iter::once(&mut rhs)) {
            let s: f64 = v.iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vv;
            for (ci, vi) in c[k..].iter_mut().zip(&v) {
                *ci -= s * vi;
            }
        }
        q[k][k] = alpha;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= q[j][i] * x[j];
        }
        x[i] = s / q[i][i];
    }
    Some(x)
}

fn residual(a: &DenseMatrix, x: &[f64], y: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(y).map(|(ax, y)| y - ax).collect()
}

/// `argmin ‖Ax − y‖` with `x[i] ≥ 0` for `i` in `nonnegative`; the other
/// variables are free.
pub fn nnls(a: &DenseMatrix, y: &[f64], nonnegative: Range<usize>) -> Result<NnlsSolution> {
    let (m, n) = (a.rows(), a.cols());
    if m != y.len() || n == 0 || nonnegative.end > n {
        return Err(LinalgError::Dimension(format!("{m}x{n} nnls with {} observations", y.len())));
    }
    if !a.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let bounded = |j: usize| nonnegative.contains(&j);
    let mut passive: Vec<usize> = (0..n).filter(|&j| !bounded(j)).collect();
    let mut x = vec![0.0; n];
    if !passive.is_empty() {
        let z = qr_solve(a, &passive, y).ok_or(LinalgError::NotConvex)?;
        for (&j, v) in passive.iter().zip(z) {
            x[j] = v;
        }
    }
    let col_scale = (0..n).map(|j| (0..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let tol = 1e-12 * col_scale * super::norm(y).max(f64::MIN_POSITIVE);
    let limit = 3 * n + 10;
    let mut rejected = vec![false; n];
    for iteration in 0..limit {
        let w = a.tr_matvec(&residual(a, &x, y));
        let candidate = (0..n)
            .filter(|&j| bounded(j) && !passive.contains(&j) && !rejected[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else {
            let residual_norm = super::norm(&residual(a, &x, y));
            return Ok(NnlsSolution { x, residual_norm, iterations: iteration });
        };
        passive.push(j);
        loop {
            let Some(z) = qr_solve(a, &passive, y) else {
                // Dependent on the passive columns: leave it out until x moves.
                passive.retain(|&p| p != j);
                rejected[j] = true;
                break;
            };
            let blocking = passive
                .iter()
                .zip(&z)
                .filter(|(&p, &zp)| bounded(p) && zp <= 0.0)
                .map(|(&p, &zp)| x[p] / (x[p] - zp))
                .fold(f64::INFINITY, f64::min);
            if blocking.is_infinite() {
                for (&p, v) in passive.iter().zip(z) {
                    x[p] = v;
                }
                rejected.iter_mut().for_each(|r| *r = false);
                break;
            }
            for (&p, zp) in passive.iter().zip(&z) {
                x[p] += blocking * (zp - x[p]);
            }
            passive.retain(|&p| !bounded(p) || x[p] > 1e-15 * col_scale.recip().max(1.0));
            for p in nonnegative.clone() {
                if !passive.contains(&p) {
                    x[p] = 0.0;
                }
            }
        }
    }
    Err(LinalgError::MaxIterations { iterations: limit, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_matches_exact_fit() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let s = nnls(&a, &[1.0, 3.0, 5.0], 0..0).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
        assert!(s.residual_norm < 1e-12);
    }

    #[test]
    fn bound_becomes_active() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = nnls(&a, &[2.0, -1.0], 0..2).unwrap();
        assert_eq!(s.x, vec![2.0, 0.0]);
    }
}
