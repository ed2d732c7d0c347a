//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use evr::estimators::{ImpulseEstimate, WindowData};
use evr::harness::jump::JumpSetup;
use evr::harness::touch::TouchSetup;
use evr::harness::{CellParams, ScenarioConfig, ScenarioKind};
use evr::linalg::{DenseMatrix, QpProblem};
use evr::signals::{make_exp_basis, ExpBasis, HeldDoubleIntegral, TimeSeries};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Touch scenario with noise and quantization off.
pub fn noiseless_touch(b: f64) -> TouchSetup {
    let mut cfg = ScenarioConfig { quantize: false, ..Default::default() };
    cfg.touch.noise_px = 0.0;
    cfg.touch.b = b;
    TouchSetup::from_config(&cfg, &CellParams::default()).unwrap()
}

pub fn jump_config() -> ScenarioConfig {
    ScenarioConfig { scenario: ScenarioKind::Jump, trials: 1, ..Default::default() }
}

/// Observations generated by one basis column with weight `c`, plus an
/// initial offset and drift.
pub fn one_hot_window(index: usize, c: f64, n_basis: usize) -> (WindowData, ExpBasis) {
    let dt = 1e-3;
    let basis = make_exp_basis(n_basis, 0.008, 0.5, 4.0, dt).unwrap();
    let u = TimeSeries::from_fn(0.0, dt, 10_001, |t| {
        (2.0 * std::f64::consts::PI * t).sin()
            + 0.6 * (2.0 * std::f64::consts::PI * 3.7 * t).cos()
            + 0.3 * (11.0 * t).sin()
    })
    .unwrap();
    let s2 = HeldDoubleIntegral::new(&u).unwrap().series();
    let conv = basis.convolve_column(index, &s2).unwrap();
    let phi = TimeSeries::from_fn(0.0, 1.0 / 60.0, 601, |t| {
        0.4 + 0.1 * t + c * conv.interpolate((t - 0.5 * dt).max(0.0)).unwrap()
    })
    .unwrap();
    (WindowData::new(phi, u, (0.0, 10.0)).unwrap(), basis)
}

/// Exact bin averages of the actuator response `b·α·e^{−αt}`, per unit `d`.
pub fn true_estimate(setup: &JumpSetup, d: f64) -> ImpulseEstimate {
    let p = &setup.params;
    let n = (setup.basis_length / p.dt).round() as usize;
    let kernel: Vec<f64> = (0..n)
        .map(|j| p.b / d * ((-p.alpha * j as f64 * p.dt).exp() - (-p.alpha * (j + 1) as f64 * p.dt).exp()) / p.dt)
        .collect();
    let dc = p.dt * kernel.iter().sum::<f64>();
    ImpulseEstimate {
        c: vec![vec![]],
        x0_over_d: 0.0,
        xdot0_over_d: 0.0,
        gb_over_d: p.g_b / d,
        dc_gain_over_d: vec![dc],
        kernel_over_d: vec![TimeSeries::scalar(0.0, p.dt, kernel).unwrap()],
        residual_rms: 0.0,
        qp_iterations: 0,
    }
}

/// Strictly convex QP with `m` equalities, nonnegativity on every variable
/// and a feasible point by construction.
pub struct RandomQp {
    pub h: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl RandomQp {
    pub fn draw(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Self {
        let l: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                h[i][j] = (0..n).map(|k| l[k][i] * l[k][j]).sum::<f64>();
            }
            h[i][i] += 0.5;
        }
        let f = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let feasible: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b = a.iter().map(|row| row.iter().zip(&feasible).map(|(x, y)| x * y).sum()).collect();
        Self { h, f, a, b }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn problem(&self) -> QpProblem {
        let n = self.n();
        let mut p = QpProblem::new(DenseMatrix::from_rows(&self.h).unwrap(), self.f.clone()).with_nonnegative(0..n);
        if !self.a.is_empty() {
            p = p.with_equalities(DenseMatrix::from_rows(&self.a).unwrap(), self.b.clone());
        }
        p
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut v = 0.0;
        for i in 0..n {
            v += self.f[i] * x[i];
            for j in 0..n {
                v += 0.5 * x[i] * self.h[i][j] * x[j];
            }
        }
        v
    }

    /// Enumerates every set of variables held at zero and keeps the best
    /// feasible stationary point of the remaining equality-constrained QP.
    pub fn exhaustive(&self) -> Vec<f64> {
        let n = self.n();
        let m = self.a.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << n) {
            let free: Vec<usize> = (0..n).filter(|j| mask & (1 << j) == 0).collect();
            let k = free.len();
            if k < m {
                continue;
            }
            let size = k + m;
            if size == 0 {
                let x = vec![0.0; n];
                let obj = self.objective(&x);
                if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                    best = Some((obj, x));
                }
                continue;
            }
            let mut kkt = DMatrix::<f64>::zeros(size, size);
            let mut rhs = DVector::<f64>::zeros(size);
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    kkt[(r, c)] = self.h[i][j];
                }
                for e in 0..m {
                    kkt[(r, k + e)] = self.a[e][i];
                    kkt[(k + e, r)] = self.a[e][i];
                }
                rhs[r] = -self.f[i];
            }
            for e in 0..m {
                rhs[k + e] = self.b[e];
            }
            let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
            if (&kkt * &sol - &rhs).amax() > 1e-9 {
                continue;
            }
            let mut x = vec![0.0; n];
            for (r, &i) in free.iter().enumerate() {
                x[i] = sol[r];
            }
            if x.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let obj = self.objective(&x);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, x));
            }
        }
        best.expect("feasible by construction").1
    }

    /// Augmented Lagrangian on the equalities; each subproblem solved by
    /// accelerated projected gradient onto the nonnegative orthant.
    pub fn projected_gradient(&self, tol: f64) -> Vec<f64> {
        let n = self.n();
        let m = self.a.len();
        let mut rho = 1.0;
        let mut lam = vec![0.0; m];
        let mut x = vec![0.0; n];
        let mut last_resid = f64::INFINITY;
        for _outer in 0..200 {
            let hm = DMatrix::from_fn(n, n, |i, j| {
                self.h[i][j] + rho * (0..m).map(|e| self.a[e][i] * self.a[e][j]).sum::<f64>()
            });
            let step = 1.0 / hm.symmetric_eigenvalues().max();
            let lin: Vec<f64> = (0..n)
                .map(|i| self.f[i] + (0..m).map(|e| self.a[e][i] * (lam[e] - rho * self.b[e])).sum::<f64>())
                .collect();
            let grad = |y: &[f64]| -> Vec<f64> {
                (0..n).map(|i| lin[i] + (0..n).map(|j| hm[(i, j)] * y[j]).sum::<f64>()).collect()
            };
            let mut y = x.clone();
            let mut t = 1.0_f64;
            for _ in 0..200_000 {
                let g = grad(&y);
                let next: Vec<f64> = (0..n).map(|i| (y[i] - step * g[i]).max(0.0)).collect();
                let moved = max_diff(&next, &x);
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let restart = next.iter().zip(&x).zip(&g).map(|((a, b), g)| (a - b) * g).sum::<f64>() > 0.0;
                y = if restart {
                    t = 1.0;
                    next.clone()
                } else {
                    let beta = (t - 1.0) / t_next;
                    t = t_next;
                    next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect()
                };
                x = next;
                if moved < tol * 1e-3 {
                    break;
                }
            }
            let resid: Vec<f64> =
                (0..m).map(|e| (0..n).map(|i| self.a[e][i] * x[i]).sum::<f64>() - self.b[e]).collect();
            for e in 0..m {
                lam[e] += rho * resid[e];
            }
            let worst = resid.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
            if worst < tol {
                break;
            }
            if worst > 0.25 * last_resid {
                rho = (rho * 4.0).min(1e4);
            }
            last_resid = worst;
        }
        x
    }
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
