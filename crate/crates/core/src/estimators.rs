//! Sliding-window estimation of embodied quantities.
//!
//! A scale-free observation `Φ(t)` tracks `x(t)/d` for some unknown size `d`.
//! Combined with the robot's own input `u` it pins down `d` (and the state)
//! in units of the input's effect: for the double integrator `ẍ = b·u`,
//!
//! ```text
//! Φ(t) = x(t0)/d + (t − t0)·ẋ(t0)/d + (b/d)·∫∫u
//! ```
//!
//! is linear in the unknowns. Richer actuators are handled by expanding the
//! impulse response `G/d` over a nonnegative exponential basis and dividing
//! by its DC gain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, least_squares, symmetric_eigenvalues, DenseMatrix, LinalgError};
use crate::signals::{ExpBasis, HeldDoubleIntegral, SignalError, TimeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("input does not excite the estimator (singular Gram matrix)")]
    SingularGram,
    #[error("b/d = {0:.3e} is too small to divide by")]
    DivisionDegenerate(f64),
    #[error("DC gain of the identified response is zero")]
    ZeroDcGain,
    #[error("invalid window: {0}")]
    BadWindow(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Solver(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// Inputs below this infinity norm count as no excitation.
pub const ZERO_INPUT_TOL: f64 = 1e-12;

/// Observations and inputs over one estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowData {
    /// Scale-free observations, camera rate.
    pub phi: TimeSeries,
    /// Inputs, control rate; scalar, or one channel per input for impulse fits.
    pub u: TimeSeries,
    pub window: (f64, f64),
}

impl WindowData {
    pub fn new(phi: TimeSeries, u: TimeSeries, window: (f64, f64)) -> Result<Self> {
        let (t0, t1) = window;
        if !(t1 > t0) {
            return Err(EstimatorError::BadWindow(format!("[{t0}, {t1}]")));
        }
        let slack = 1e-9;
        if phi.width() != 1 {
            return Err(EstimatorError::BadWindow("observations must be scalar".into()));
        }
        if phi.t0() < t0 - slack || phi.end_time() > t1 + slack {
            return Err(EstimatorError::BadWindow(format!(
                "observations span [{}, {}] outside [{t0}, {t1}]",
                phi.t0(),
                phi.end_time()
            )));
        }
        if u.t0() > t0 + slack || u.end_time() < t1 - slack || u.len() < 2 {
            return Err(EstimatorError::BadWindow(format!(
                "inputs span [{}, {}], window [{t0}, {t1}]",
                u.t0(),
                u.end_time()
            )));
        }
        Ok(Self { phi, u, window })
    }

    /// Inputs restricted to the window, starting exactly at its first grid point.
    fn window_inputs(&self) -> Result<TimeSeries> {
        let (t0, t1) = self.window;
        let start = self.u.index_of(t0).ok_or_else(|| EstimatorError::BadWindow("window start off grid".into()))?;
        let end = self.u.index_of(t1).ok_or_else(|| EstimatorError::BadWindow("window end off grid".into()))?;
        if (self.u.time(start) - t0).abs() > 1e-9 {
            return Err(EstimatorError::BadWindow("window must start on an input sample".into()));
        }
        Ok(self.u.slice(start, end + 1)?)
    }
}

/// Embodied (`·/b`) and characteristic-scale (`·/d`) state estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbodiedEstimate {
    pub x1_over_b: f64,
    pub x2_over_b: f64,
    pub d_over_b: f64,
    pub x1_over_d: f64,
    pub x2_over_d: f64,
    pub b_over_d: f64,
    pub gram_min_eig: f64,
    /// RMS of the fit residual in the regression target's units.
    pub residual_rms: f64,
    pub window: (f64, f64),
}

struct Regression {
    times: Vec<f64>,
    phi: Vec<f64>,
    s2: Vec<f64>,
}

fn double_integral_regression(w: &WindowData) -> Result<Regression> {
    let u = w.window_inputs()?;
    if u.max_abs() < ZERO_INPUT_TOL {
        return Err(EstimatorError::SingularGram);
    }
    let integral = HeldDoubleIntegral::new(&u)?;
    let times: Vec<f64> = w.phi.times().collect();
    let s2 = times
        .iter()
        .map(|&t| integral.at(t).ok_or_else(|| EstimatorError::BadWindow(format!("no input at t = {t}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Regression { phi: w.phi.values().to_vec(), times, s2 })
}

fn solve_regression(cols: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let rows = y.len();
    let k = cols.len();
    if rows < k {
        return Err(EstimatorError::BadWindow(format!("{rows} observations for {k} unknowns")));
    }
    let a = DenseMatrix::from_row_major(rows, k, (0..rows).flat_map(|r| cols.iter().map(move |c| c[r])).collect())?;
    let (x, gram) = least_squares(&a, y).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } => EstimatorError::SingularGram,
        other => other.into(),
    })?;
    let min_eig = symmetric_eigenvalues(&gram)?[0];
    let fit = a.matvec(&x);
    let rms = (fit.iter().zip(y).map(|(f, v)| (f - v).powi(2)).sum::<f64>() / rows as f64).sqrt();
    Ok((x, min_eig, rms))
}

/// Regresses the input's double integral on `{Φ, −1, −(t − t0)}`. Noise in
/// `Φ` enters a regressor here, so this form is biased under noise.
pub fn estimate_biased(w: &WindowData) -> Result<EmbodiedEstimate> {
    let r = double_integral_regression(w)?;
    let t0 = w.window.0;
    let cols = vec![r.phi.clone(), vec![-1.0; r.times.len()], r.times.iter().map(|t| -(t - t0)).collect()];
    let (x, min_eig, rms) = solve_regression(&cols, &r.s2)?;
    let (d_over_b, x1_over_b, x2_over_b) = (x[0], x[1], x[2]);
    Ok(EmbodiedEstimate {
        x1_over_b,
        x2_over_b,
        d_over_b,
        x1_over_d: x1_over_b / d_over_b,
        x2_over_d: x2_over_b / d_over_b,
        b_over_d: 1.0 / d_over_b,
        gram_min_eig: min_eig,
        residual_rms: rms,
        window: w.window,
    })
}

/// Regresses `Φ` on `{1, t − t0, ∫∫u}`; observation noise stays in the
/// target, so the coefficients are unbiased.
pub fn estimate_unbiased(w: &WindowData) -> Result<EmbodiedEstimate> {
    let r = double_integral_regression(w)?;
    let t0 = w.window.0;
    let cols = vec![vec![1.0; r.times.len()], r.times.iter().map(|t| t - t0).collect(), r.s2.clone()];
    let (x, min_eig, rms) = solve_regression(&cols, &r.phi)?;
    let (x1_over_d, x2_over_d, b_over_d) = (x[0], x[1], x[2]);
    if b_over_d.abs() < 1e-12 {
        return Err(EstimatorError::DivisionDegenerate(b_over_d));
    }
    Ok(EmbodiedEstimate {
        x1_over_b: x1_over_d / b_over_d,
        x2_over_b: x2_over_d / b_over_d,
        d_over_b: 1.0 / b_over_d,
        x1_over_d,
        x2_over_d,
        b_over_d,
        gram_min_eig: min_eig,
        residual_rms: rms,
        window: w.window,
    })
}

/// Identified impulse response and initial conditions, all per unit `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseEstimate {
    /// Basis weights, one vector per input channel.
    pub c: Vec<Vec<f64>>,
    pub x0_over_d: f64,
    pub xdot0_over_d: f64,
    /// Downward gravity per unit `d`; zero when not estimated.
    pub gb_over_d: f64,
    /// `Σ c` per input channel.
    pub dc_gain_over_d: Vec<f64>,
    /// `G/d` per input channel on the basis grid.
    pub kernel_over_d: Vec<TimeSeries>,
    pub residual_rms: f64,
    pub qp_iterations: usize,
}

/// Fits `Φ ≈ x0/d + t·ẋ0/d − (t²/2)·g/d + Σ c·(f ⊛ ∫∫u)` with `c ≥ 0`,
/// scoring only observations at least `fit_interval_start` seconds into the
/// window.
pub fn estimate_impulse_response(
    w: &WindowData,
    basis: &ExpBasis,
    with_gravity: bool,
    fit_interval_start: f64,
) -> Result<ImpulseEstimate> {
    let u = w.window_inputs()?;
    if (u.dt() - basis.dt()).abs() > 1e-12 * u.dt() {
        return Err(SignalError::GridMismatch { left: u.dt(), right: basis.dt() }.into());
    }
    if u.max_abs() < ZERO_INPUT_TOL {
        return Err(EstimatorError::SingularGram);
    }
    let t0 = w.window.0;
    let fit_from = t0 + fit_interval_start - 1e-9;
    let frames: Vec<usize> = (0..w.phi.len()).filter(|&k| w.phi.time(k) >= fit_from).collect();
    let n_inputs = u.width();
    let n_basis = basis.count();
    let n_free = if with_gravity { 3 } else { 2 };
    let n_vars = n_free + n_inputs * n_basis;
    if frames.len() < n_free + 1 {
        return Err(EstimatorError::BadWindow(format!("{} observations in the fit interval", frames.len())));
    }

    // Regressors sampled at the frames. The rectangle convolution leads the
    // continuous one by half a step, so it is read half a step early.
    let half = 0.5 * u.dt();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n_vars);
    let times: Vec<f64> = frames.iter().map(|&k| w.phi.time(k) - t0).collect();
    cols.push(vec![1.0; frames.len()]);
    cols.push(times.clone());
    if with_gravity {
        cols.push(times.iter().map(|t| -0.5 * t * t).collect());
    }
    for j in 0..n_inputs {
        let s2 = HeldDoubleIntegral::new(&u.channel(j))?.series();
        for i in 0..n_basis {
            let conv = basis.convolve_column(i, &s2)?;
            let col = frames
                .iter()
                .map(|&k| {
                    let t = w.phi.time(k) - half;
                    conv.interpolate(t.max(conv.t0()))
                        .ok_or_else(|| EstimatorError::BadWindow(format!("no input at t = {t}")))
                })
                .collect::<Result<Vec<_>>>()?;
            cols.push(col);
        }
    }
    let y: Vec<f64> = frames.iter().map(|&k| w.phi.value(k)).collect();
    // Unit-norm columns; the solve never forms the normal equations.
    let scale: Vec<f64> = cols.iter().map(|c| linalg::norm(c)).collect();
    if scale.contains(&0.0) {
        return Err(EstimatorError::SingularGram);
    }
    let rows = y.len();
    let a = DenseMatrix::from_row_major(
        rows,
        n_vars,
        (0..rows).flat_map(|r| cols.iter().zip(&scale).map(move |(c, s)| c[r] / s)).collect(),
    )?;
    let solution = linalg::nnls(&a, &y, n_free..n_vars).map_err(|e| match e {
        LinalgError::NotConvex => EstimatorError::SingularGram,
        other => other.into(),
    })?;
    let theta: Vec<f64> = solution.x.iter().zip(&scale).map(|(z, s)| z / s).collect();

    let fit = a.matvec(&solution.x);
    let residual_rms = (fit.iter().zip(&y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / rows as f64).sqrt();

    let c: Vec<Vec<f64>> = (0..n_inputs)
        .map(|j| theta[n_free + j * n_basis..n_free + (j + 1) * n_basis].iter().map(|v| v.max(0.0)).collect())
        .collect();
    let dc_gain_over_d = c.iter().map(|cj| cj.iter().sum()).collect();
    let kernel_over_d = c.iter().map(|cj| basis.combine(cj)).collect();
    Ok(ImpulseEstimate {
        c,
        x0_over_d: theta[0],
        xdot0_over_d: theta[1],
        gb_over_d: if with_gravity { theta[2] } else { 0.0 },
        dc_gain_over_d,
        kernel_over_d,
        residual_rms,
        qp_iterations: solution.iterations,
    })
}

/// Quantities expressed in embodied units, the distance over which one unit
/// of input yields one unit of acceleration at steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbodiedUnits {
    /// Position at the start of the window.
    pub position: f64,
    pub velocity: f64,
    /// The scene size `d`.
    pub scale: f64,
    pub gravity: Option<f64>,
    /// Impulse response normalized to unit DC gain.
    pub kernel: Option<TimeSeries>,
    pub dc_gain_over_d: f64,
}

pub trait ToEmbodied {
    fn to_embodied(&self) -> Result<EmbodiedUnits>;
}

impl ToEmbodied for EmbodiedEstimate {
    fn to_embodied(&self) -> Result<EmbodiedUnits> {
        if self.b_over_d == 0.0 || !self.b_over_d.is_finite() {
            return Err(EstimatorError::ZeroDcGain);
        }
        let k = self.b_over_d;
        Ok(EmbodiedUnits {
            position: self.x1_over_d / k,
            velocity: self.x2_over_d / k,
            scale: 1.0 / k,
            gravity: None,
            kernel: None,
            dc_gain_over_d: k,
        })
    }
}

impl ImpulseEstimate {
    /// Conversion using the DC gain of input channel `input`.
    pub fn to_embodied_via(&self, input: usize) -> Result<EmbodiedUnits> {
        let k = self.dc_gain_over_d[input];
        if k == 0.0 || !k.is_finite() {
            return Err(EstimatorError::ZeroDcGain);
        }
        Ok(EmbodiedUnits {
            position: self.x0_over_d / k,
            velocity: self.xdot0_over_d / k,
            scale: 1.0 / k,
            gravity: Some(self.gb_over_d / k),
            kernel: Some(self.kernel_over_d[input].map(|v| v / k)),
            dc_gain_over_d: k,
        })
    }
}

impl ToEmbodied for ImpulseEstimate {
    fn to_embodied(&self) -> Result<EmbodiedUnits> {
        self.to_embodied_via(0)
    }
}

/// Gram matrix `∫ φφᵀ dt` of the regressors `φ = vec(u ⊛ fᵀ)` over the
/// window, and its smallest eigenvalue.
pub fn excitation_check(u: &TimeSeries, basis: &ExpBasis, window: (f64, f64)) -> Result<(DenseMatrix, f64)> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(EstimatorError::BadWindow(format!("[{t0}, {t1}]")));
    }
    let start = u.index_of(t0).ok_or_else(|| EstimatorError::BadWindow("window start off grid".into()))?;
    let end = u.index_of(t1).ok_or_else(|| EstimatorError::BadWindow("window end off grid".into()))?;
    let u = u.slice(start, end + 1)?;
    let mut phis = Vec::new();
    for j in 0..u.width() {
        let channel = u.channel(j);
        for i in 0..basis.count() {
            phis.push(basis.convolve_column(i, &channel)?.values().to_vec());
        }
    }
    let k = phis.len();
    let mut gram = DenseMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = u.dt() * linalg::dot(&phis[a], &phis[b]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let min_eig = symmetric_eigenvalues(&gram)?[0].max(0.0);
    Ok((gram, min_eig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::make_exp_basis;
    use approx::assert_abs_diff_eq;

    fn window(u: Vec<f64>, phi: Vec<f64>, dt: f64, fps_dt: f64) -> WindowData {
        let t1 = (u.len() - 1) as f64 * dt;
        WindowData::new(
            TimeSeries::scalar(0.0, fps_dt, phi).unwrap(),
            TimeSeries::scalar(0.0, dt, u).unwrap(),
            (0.0, t1),
        )
        .unwrap()
    }

    #[test]
    fn zero_input_is_singular() {
        let w = window(vec![0.0; 3001], vec![10.0; 91], 0.001, 1.0 / 30.0);
        assert_eq!(estimate_unbiased(&w), Err(EstimatorError::SingularGram));
        assert_eq!(estimate_biased(&w), Err(EstimatorError::SingularGram));
    }

    #[test]
    fn exact_parabola_recovered() {
        // x = 2 + 0.5 t + (b/2) t² with b = 3, d = 0.5, u ≡ 1
        let dt = 0.001;
        let (b, d) = (3.0, 0.5);
        let u = vec![1.0; 3001];
        let phi: Vec<f64> = (0..91).map(|k| k as f64 / 30.0).map(|t| (2.0 + 0.5 * t + 0.5 * b * t * t) / d).collect();
        let w = window(u, phi, dt, 1.0 / 30.0);
        let e = estimate_unbiased(&w).unwrap();
        assert_abs_diff_eq!(e.b_over_d, b / d, epsilon = 1e-9);
        assert_abs_diff_eq!(e.x1_over_b, 2.0 / b, epsilon = 1e-9);
        assert_abs_diff_eq!(e.x2_over_b, 0.5 / b, epsilon = 1e-9);
        let biased = estimate_biased(&w).unwrap();
        assert_abs_diff_eq!(biased.d_over_b, d / b, epsilon = 1e-9);
    }

    #[test]
    fn window_validation() {
        let phi = TimeSeries::scalar(0.0, 0.1, vec![0.0; 40]).unwrap();
        let u = TimeSeries::scalar(0.0, 0.001, vec![0.0; 3001]).unwrap();
        assert!(WindowData::new(phi.clone(), u.clone(), (0.0, 3.0)).is_err());
        assert!(WindowData::new(phi, u, (1.0, 1.0)).is_err());
    }

    #[test]
    fn dc_gain_division() {
        let basis = make_exp_basis(2, 0.1, 0.2, 1.0, 0.01).unwrap();
        let e = ImpulseEstimate {
            c: vec![vec![1.5, 0.5]],
            x0_over_d: 1.5,
            xdot0_over_d: 0.2,
            gb_over_d: 4.0,
            dc_gain_over_d: vec![2.0],
            kernel_over_d: vec![basis.combine(&[1.5, 0.5])],
            residual_rms: 0.0,
            qp_iterations: 0,
        };
        let emb = e.to_embodied().unwrap();
        assert_abs_diff_eq!(emb.position, 0.75);
        assert_abs_diff_eq!(emb.gravity.unwrap(), 2.0);
        let kernel = emb.kernel.unwrap();
        assert_abs_diff_eq!(kernel.dt() * kernel.values().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let unit = ImpulseEstimate { dc_gain_over_d: vec![1.0], ..e.clone() }.to_embodied().unwrap();
        assert_eq!(unit.position, 1.5);
        let zero = ImpulseEstimate { dc_gain_over_d: vec![0.0], ..e };
        assert_eq!(zero.to_embodied(), Err(EstimatorError::ZeroDcGain));
    }

    #[test]
    fn excitation_of_degenerate_inputs() {
        let basis = make_exp_basis(3, 0.05, 0.3, 1.0, 0.001).unwrap();
        let n = 3001;
        let zero = TimeSeries::with_width(0.0, 0.001, 1, vec![0.0; n]).unwrap();
        let (_, min_eig) = excitation_check(&zero, &basis, (0.0, 3.0)).unwrap();
        assert_eq!(min_eig, 0.0);

        let s: Vec<f64> = (0..n).map(|k| (k as f64 * 0.001 * 5.0).sin()).collect();
        let twin = TimeSeries::with_width(0.0, 0.001, 2, s.iter().flat_map(|&v| [v, v]).collect()).unwrap();
        let (gram, min_eig) = excitation_check(&twin, &basis, (0.0, 3.0)).unwrap();
        assert!(min_eig <= 1e-10 * gram.trace());
    }

    #[test]
    fn independent_sinusoids_excite() {
        let basis = make_exp_basis(3, 0.05, 0.3, 1.0, 0.001).unwrap();
        let n = 5001;
        let vals: Vec<f64> = (0..n)
            .flat_map(|k| {
                let t = k as f64 * 0.001;
                [(2.0 * t).sin(), (7.0 * t).cos()]
            })
            .collect();
        let u = TimeSeries::with_width(0.0, 0.001, 2, vals).unwrap();
        let (_, min_eig) = excitation_check(&u, &basis, (0.0, 5.0)).unwrap();
        assert!(min_eig > 0.0);
    }
}
