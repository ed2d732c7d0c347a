//! Uniform-grid signals, cumulative integration, causal convolution and the
//! exponential basis used for actuator impulse responses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal too short: need at least {needed} samples, got {got}")]
    EmptySignal { needed: usize, got: usize },
    #[error("time grids differ: dt {left} vs {right}")]
    GridMismatch { left: f64, right: f64 },
    #[error("invalid basis specification: {0}")]
    BadBasisSpec(String),
    #[error("invalid signal: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Uniformly sampled signal. Sample `k` sits at `t0 + k * dt`; every sample
/// has the same width (1 for scalar signals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    width: usize,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn scalar(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::with_width(t0, dt, 1, values)
    }

    /// Builds a vector-valued series from row-major samples of `width` entries each.
    pub fn with_width(t0: f64, dt: f64, width: usize, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(SignalError::Invalid(format!("bad grid t0={t0} dt={dt}")));
        }
        if width == 0 || values.is_empty() {
            return Err(SignalError::EmptySignal { needed: 1, got: 0 });
        }
        if !values.len().is_multiple_of(width) {
            return Err(SignalError::Invalid(format!(
                "{} values do not split into samples of width {width}",
                values.len()
            )));
        }
        Ok(Self { t0, dt, width, values })
    }

    pub fn from_samples(t0: f64, dt: f64, samples: &[Vec<f64>]) -> Result<Self> {
        let width = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != width) {
            return Err(SignalError::Invalid("samples differ in width".into()));
        }
        Self::with_width(t0, dt, width, samples.concat())
    }

    /// Samples `f` on `n` grid points.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::scalar(t0, dt, values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    /// Scalar value of sample `k` (first channel for vector series).
    pub fn value(&self, k: usize) -> f64 {
        self.values[k * self.width]
    }

    /// Raw row-major storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, j: usize) -> TimeSeries {
        assert!(j < self.width, "channel {j} out of range");
        let values = self.values.iter().skip(j).step_by(self.width).copied().collect();
        TimeSeries { t0: self.t0, dt: self.dt, width: 1, values }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Linear interpolation of a scalar channel. `None` outside the grid.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        self.interpolate_channel(0, t)
    }

    pub fn interpolate_channel(&self, j: usize, t: f64) -> Option<f64> {
        let n = self.len();
        let x = (t - self.t0) / self.dt;
        let tol = 1e-9;
        if !x.is_finite() || x < -tol || x > (n - 1) as f64 + tol {
            return None;
        }
        let x = x.clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n.saturating_sub(2));
        if n == 1 {
            return Some(self.values[j]);
        }
        let frac = x - k as f64;
        let a = self.values[k * self.width + j];
        let b = self.values[(k + 1) * self.width + j];
        Some(a + frac * (b - a))
    }

    /// Index of the grid sample nearest to `t`, if inside the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = ((t - self.t0) / self.dt).round();
        if x < 0.0 || x as usize >= self.len() {
            None
        } else {
            Some(x as usize)
        }
    }

    /// Samples with indices in `start..end`, keeping the absolute time base.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.len() {
            return Err(SignalError::Invalid(format!("bad slice {start}..{end} of {}", self.len())));
        }
        Ok(TimeSeries {
            t0: self.time(start),
            dt: self.dt,
            width: self.width,
            values: self.values[start * self.width..end * self.width].to_vec(),
        })
    }

    fn require_scalar(&self) -> Result<()> {
        if self.width != 1 {
            return Err(SignalError::Invalid(format!("expected scalar signal, width {}", self.width)));
        }
        Ok(())
    }
}

fn same_grid(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Quadrature used by the cumulative integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Trapezoid rule for both integrals.
    #[default]
    Trapezoid,
    /// Exact for a zero-order-held input: sample `k` is applied on `[t_k, t_{k+1})`.
    Held,
}

/// Running integral, `out[0] = 0`.
pub fn cumulative_integral(u: &TimeSeries, quad: Quadrature) -> Result<TimeSeries> {
    u.require_scalar()?;
    if u.len() < 2 {
        return Err(SignalError::EmptySignal { needed: 2, got: u.len() });
    }
    let dt = u.dt;
    let v = &u.values;
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..v.len() {
        acc += match quad {
            Quadrature::Trapezoid => 0.5 * (v[k - 1] + v[k]) * dt,
            Quadrature::Held => v[k - 1] * dt,
        };
        out.push(acc);
    }
    Ok(TimeSeries { t0: u.t0, dt, width: 1, values: out })
}

/// Double integral `s(t) = ∫_{t0}^{t} ∫_{t0}^{σ} u`, trapezoid rule on both stages.
pub fn cumulative_double_integral(u: &TimeSeries) -> Result<TimeSeries> {
    cumulative_double_integral_with(u, Quadrature::Trapezoid)
}

pub fn cumulative_double_integral_with(u: &TimeSeries, quad: Quadrature) -> Result<TimeSeries> {
    match quad {
        Quadrature::Trapezoid => {
            let first = cumulative_integral(u, Quadrature::Trapezoid)?;
            cumulative_integral(&first, Quadrature::Trapezoid)
        }
        Quadrature::Held => Ok(HeldDoubleIntegral::new(u)?.series()),
    }
}

/// First and second integrals of a zero-order-held input, exact at any time
/// inside the grid.
#[derive(Debug, Clone)]
pub struct HeldDoubleIntegral {
    t0: f64,
    dt: f64,
    input: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl HeldDoubleIntegral {
    pub fn new(u: &TimeSeries) -> Result<Self> {
        u.require_scalar()?;
        if u.len() < 2 {
            return Err(SignalError::EmptySignal { needed: 2, got: u.len() });
        }
        let dt = u.dt;
        let n = u.len();
        let mut first = vec![0.0; n];
        let mut second = vec![0.0; n];
        for k in 1..n {
            let a = u.values[k - 1];
            first[k] = first[k - 1] + a * dt;
            second[k] = second[k - 1] + first[k - 1] * dt + 0.5 * a * dt * dt;
        }
        Ok(Self { t0: u.t0, dt, input: u.values.clone(), first, second })
    }

    pub fn series(&self) -> TimeSeries {
        TimeSeries { t0: self.t0, dt: self.dt, width: 1, values: self.second.clone() }
    }

    pub fn first_series(&self) -> TimeSeries {
        TimeSeries { t0: self.t0, dt: self.dt, width: 1, values: self.first.clone() }
    }

    /// Second integral at an arbitrary time inside the grid.
    pub fn at(&self, t: f64) -> Option<f64> {
        let n = self.second.len();
        let x = (t - self.t0) / self.dt;
        if !x.is_finite() || x < -1e-9 || x > (n - 1) as f64 + 1e-9 {
            return None;
        }
        let k = (x.max(0.0).floor() as usize).min(n - 1);
        let tau = (t - (self.t0 + k as f64 * self.dt)).max(0.0);
        if k == n - 1 {
            return Some(self.second[k]);
        }
        Some(self.second[k] + self.first[k] * tau + 0.5 * self.input[k] * tau * tau)
    }
}

/// Causal discrete convolution `out_k = dt · Σ_j g_j u_{k−j}`. The kernel's
/// first sample is taken at lag zero; output shares `u`'s grid and length.
pub fn convolve(g: &TimeSeries, u: &TimeSeries) -> Result<TimeSeries> {
    g.require_scalar()?;
    u.require_scalar()?;
    if !same_grid(g.dt, u.dt) {
        return Err(SignalError::GridMismatch { left: g.dt, right: u.dt });
    }
    let dt = u.dt;
    let (gv, uv) = (&g.values, &u.values);
    let out = (0..uv.len())
        .map(|k| {
            let m = gv.len().min(k + 1);
            dt * (0..m).map(|j| gv[j] * uv[k - j]).sum::<f64>()
        })
        .collect();
    Ok(TimeSeries { t0: u.t0, dt, width: 1, values: out })
}

/// Family of truncated, DC-normalized decaying exponentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpBasis {
    tau: Vec<f64>,
    t_g: f64,
    dt: f64,
    columns: Vec<TimeSeries>,
}

pub fn make_exp_basis(n: usize, tau_min: f64, tau_max: f64, t_g: f64, dt: f64) -> Result<ExpBasis> {
    if n == 0 {
        return Err(SignalError::BadBasisSpec("basis needs at least one column".into()));
    }
    if !(tau_min > 0.0) || !(tau_max >= tau_min) || !tau_max.is_finite() {
        return Err(SignalError::BadBasisSpec(format!("time constants [{tau_min}, {tau_max}]")));
    }
    if !(t_g > 0.0) || !(dt > 0.0) || t_g < dt {
        return Err(SignalError::BadBasisSpec(format!("truncation {t_g} with step {dt}")));
    }
    if n > 1 && tau_min == tau_max {
        return Err(SignalError::BadBasisSpec("repeated time constant".into()));
    }
    let tau: Vec<f64> = if n == 1 {
        vec![tau_min]
    } else {
        let (lo, hi) = (tau_min.ln(), tau_max.ln());
        (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
    };
    ExpBasis::from_time_constants(tau, t_g, dt)
}

impl ExpBasis {
    /// Builds the basis from explicit, strictly increasing time constants.
    pub fn from_time_constants(tau: Vec<f64>, t_g: f64, dt: f64) -> Result<ExpBasis> {
        if tau.is_empty() || tau.iter().any(|t| !(*t > 0.0)) {
            return Err(SignalError::BadBasisSpec("time constants must be positive".into()));
        }
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SignalError::BadBasisSpec("time constants must increase".into()));
        }
        let len = (t_g / dt).round() as usize;
        if len == 0 {
            return Err(SignalError::BadBasisSpec("truncation shorter than one step".into()));
        }
        let columns = tau
            .iter()
            .map(|&ti| {
                let raw: Vec<f64> = (0..len).map(|k| (-(k as f64) * dt / ti).exp()).collect();
                let mass = dt * raw.iter().sum::<f64>();
                TimeSeries::scalar(0.0, dt, raw.into_iter().map(|v| v / mass).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExpBasis { tau, t_g, dt, columns })
    }

    pub fn count(&self) -> usize {
        self.tau.len()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn truncation(&self) -> f64 {
        self.t_g
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn columns(&self) -> &[TimeSeries] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &TimeSeries {
        &self.columns[i]
    }

    /// Kernel `Σ_i c_i f_i` for a weight vector.
    pub fn combine(&self, c: &[f64]) -> TimeSeries {
        assert_eq!(c.len(), self.count(), "weight count");
        let len = self.columns[0].len();
        let values = (0..len).map(|k| c.iter().zip(&self.columns).map(|(ci, col)| ci * col.values[k]).sum()).collect();
        TimeSeries { t0: 0.0, dt: self.dt, width: 1, values }
    }

    /// Same result as `convolve(self.column(i), s)`, computed recursively in
    /// linear time using the geometric structure of the column.
    pub fn convolve_column(&self, i: usize, s: &TimeSeries) -> Result<TimeSeries> {
        s.require_scalar()?;
        if !same_grid(self.dt, s.dt) {
            return Err(SignalError::GridMismatch { left: self.dt, right: s.dt });
        }
        let col = &self.columns[i].values;
        let head = col[0];
        let len = col.len();
        let r = (-self.dt / self.tau[i]).exp();
        let tail = head * r.powi(len as i32);
        let mut acc = 0.0;
        let values = s
            .values
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                acc = r * acc + head * x;
                if k >= len {
                    acc -= tail * s.values[k - len];
                }
                self.dt * acc
            })
            .collect();
        Ok(TimeSeries { t0: s.t0, dt: s.dt, width: 1, values })
    }
}
