//! Ground-truth robot dynamics. The agent never reads these parameters; the
//! harness uses them to generate observations and score estimates.
//!
//! Inputs are held constant across each step and every update is the exact
//! solution for that held input, so trajectories match the continuous model
//! at the sample times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::TimeSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("non-finite value in plant update: {0}")]
    NumericFault(&'static str),
    #[error("invalid plant parameters: {0}")]
    BadParams(String),
    #[error("body never came back down within {0} s")]
    NoLanding(f64),
    #[error("mode cannot change from {from:?} to {to:?}")]
    BadTransition { from: Mode, to: Mode },
    #[error("flight must start in the airborne mode")]
    NotAirborne,
}

pub type Result<T> = std::result::Result<T, PlantError>;

/// Index of the vertical (up) axis for gravity-affected motion.
pub const UP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Acceleration produced by one unit of input.
    pub b: f64,
    /// Actuator rate, 1/s.
    pub alpha: f64,
    pub g_b: f64,
    pub body_half_width_l: f64,
    pub body_half_width_r: f64,
    /// Velocity-command leak time constant, s.
    pub leaky_tau: f64,
    pub dt: f64,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.b != 0.0
            && self.b.is_finite()
            && self.alpha > 0.0
            && self.dt > 0.0
            && self.leaky_tau > 0.0
            && self.g_b.is_finite()
            && self.body_half_width_l >= 0.0
            && self.body_half_width_r >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(PlantError::BadParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Grounded,
    Oscillating,
    Airborne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x: [f64; 3],
    pub v: [f64; 3],
    /// Actuator output in input units (vertical thrust).
    pub x_act: f64,
    /// Commanded velocity of a velocity-controlled base.
    pub v_cmd: [f64; 3],
    pub mode: Mode,
}

impl PlantState {
    pub fn at_rest(x: [f64; 3]) -> Self {
        Self { x, v: [0.0; 3], x_act: 0.0, v_cmd: [0.0; 3], mode: Mode::Grounded }
    }

    /// Moves to a later mode of the scenario script.
    pub fn transition(mut self, to: Mode) -> Result<Self> {
        if to < self.mode {
            return Err(PlantError::BadTransition { from: self.mode, to });
        }
        self.mode = to;
        Ok(self)
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PlantError::NumericFault(what))
    }
}

/// Double integrator `Ẍ = b·u` over one step.
pub fn step_double_integrator(s: &PlantState, u: [f64; 3], p: &PlantParams) -> Result<PlantState> {
    advance_double_integrator(s, u, p, p.dt)
}

/// Double integrator over an arbitrary span `h` with `u` held.
pub fn advance_double_integrator(s: &PlantState, u: [f64; 3], p: &PlantParams, h: f64) -> Result<PlantState> {
    check_finite(&u, "input")?;
    let mut out = *s;
    for i in 0..3 {
        let a = p.b * u[i];
        out.x[i] = s.x[i] + s.v[i] * h + 0.5 * a * h * h;
        out.v[i] = s.v[i] + a * h;
    }
    check_finite(&out.x, "position")?;
    Ok(out)
}

/// First-order actuator driving the vertical axis: `ẋ_act = α(u − x_act)`,
/// vertical acceleration `b·x_act − g_b`. Other axes coast.
pub fn step_first_order_actuator(s: &PlantState, u: f64, p: &PlantParams) -> Result<PlantState> {
    advance_first_order_actuator(s, u, p, p.dt)
}

pub fn advance_first_order_actuator(s: &PlantState, u: f64, p: &PlantParams, h: f64) -> Result<PlantState> {
    check_finite(&[u], "input")?;
    let gain = -(-p.alpha * h).exp_m1();
    let c = s.x_act - u;
    let a0 = p.b * u - p.g_b;
    let mut out = *s;
    out.x_act = s.x_act + gain * (u - s.x_act);
    for i in 0..3 {
        out.x[i] = s.x[i] + s.v[i] * h;
    }
    out.v[UP] = s.v[UP] + a0 * h + p.b * c * gain / p.alpha;
    out.x[UP] = s.x[UP] + s.v[UP] * h + 0.5 * a0 * h * h + p.b * c * (h / p.alpha - gain / (p.alpha * p.alpha));
    check_finite(&[out.x_act, out.v[UP], out.x[UP]], "actuator")?;
    Ok(out)
}

/// Velocity-controlled base emulating acceleration control:
/// `v̇_cmd = b·u − v_cmd/τ`, body velocity equals `v_cmd`.
pub fn step_leaky_velocity_command(s: &PlantState, u_accel: [f64; 3], p: &PlantParams) -> Result<PlantState> {
    advance_leaky_velocity_command(s, u_accel, p, p.dt)
}

pub fn advance_leaky_velocity_command(s: &PlantState, u: [f64; 3], p: &PlantParams, h: f64) -> Result<PlantState> {
    check_finite(&u, "input")?;
    let tau = p.leaky_tau;
    let gain = -(-h / tau).exp_m1();
    let mut out = *s;
    for i in 0..3 {
        let target = p.b * u[i] * tau;
        let v0 = s.v_cmd[i];
        out.v_cmd[i] = v0 + gain * (target - v0);
        out.x[i] = s.x[i] + target * h + (v0 - target) * tau * gain;
        out.v[i] = out.v_cmd[i];
    }
    check_finite(&out.x, "position")?;
    Ok(out)
}

/// Result of a ballistic flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Flight {
    /// Position samples (width 3) on the step grid up to touchdown.
    pub trajectory: TimeSeries,
    pub landing_time: f64,
    pub landing_position: [f64; 3],
    /// Horizontal distance covered from launch to touchdown.
    pub range: f64,
}

/// Longest flight simulated before giving up.
pub const FLIGHT_TIME_CAP: f64 = 120.0;

/// Integrates the airborne body until it returns to its launch height.
/// `residual_thrust` is the actuator input during flight, zero where absent.
pub fn simulate_flight(s0: &PlantState, p: &PlantParams, residual_thrust: Option<&TimeSeries>) -> Result<Flight> {
    if s0.mode != Mode::Airborne {
        return Err(PlantError::NotAirborne);
    }
    p.validate()?;
    let y0 = s0.x[UP];
    let input = |k: usize| residual_thrust.map_or(0.0, |r| if k < r.len() { r.value(k) } else { 0.0 });
    let mut samples = vec![s0.x.to_vec()];
    let mut s = *s0;
    let horizontal = |x: &[f64; 3]| ((x[0] - s0.x[0]).powi(2) + (x[1] - s0.x[1]).powi(2)).sqrt();

    let initial_accel = p.b * s0.x_act - p.g_b;
    if s0.v[UP] < 0.0 || (s0.v[UP] == 0.0 && initial_accel <= 0.0) {
        let trajectory = TimeSeries::from_samples(0.0, p.dt, &samples).expect("one sample");
        return Ok(Flight { trajectory, landing_time: 0.0, landing_position: s0.x, range: 0.0 });
    }

    let steps = (FLIGHT_TIME_CAP / p.dt).ceil() as usize;
    for k in 0..steps {
        let u = input(k);
        let next = advance_first_order_actuator(&s, u, p, p.dt)?;
        if next.x[UP] < y0 {
            // Bisect the exact intra-step motion for the crossing.
            let (mut lo, mut hi) = (0.0, p.dt);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if advance_first_order_actuator(&s, u, p, mid)?.x[UP] < y0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut landing = advance_first_order_actuator(&s, u, p, hi)?.x;
            landing[UP] = y0;
            let trajectory = TimeSeries::from_samples(0.0, p.dt, &samples).expect("uniform samples");
            return Ok(Flight {
                trajectory,
                landing_time: k as f64 * p.dt + hi,
                landing_position: landing,
                range: horizontal(&landing),
            });
        }
        samples.push(next.x.to_vec());
        s = next;
    }
    Err(PlantError::NoLanding(FLIGHT_TIME_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> PlantParams {
        PlantParams {
            b: 1.0,
            alpha: 10.0,
            g_b: 9.81,
            body_half_width_l: 0.0955,
            body_half_width_r: 0.0955,
            leaky_tau: 10.0,
            dt: 0.001,
        }
    }

    #[test]
    fn zero_input_at_rest_is_still() {
        let s = PlantState::at_rest([1.0, 2.0, 3.0]);
        assert_eq!(step_double_integrator(&s, [0.0; 3], &params()).unwrap(), s);
    }

    #[test]
    fn constant_input_parabola() {
        let p = params();
        let mut s = PlantState::at_rest([0.0; 3]);
        for _ in 0..1000 {
            s = step_double_integrator(&s, [1.0, 0.0, 0.0], &p).unwrap();
        }
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 2.0 * p.dt);
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gain_folds_into_input() {
        let p1 = PlantParams { b: 1.0, ..params() };
        let p2 = PlantParams { b: 2.0, ..params() };
        let (mut a, mut c) = (PlantState::at_rest([0.0; 3]), PlantState::at_rest([0.0; 3]));
        for k in 0..500 {
            let u = (k as f64 * 0.013).sin();
            a = step_double_integrator(&a, [2.0 * u, 0.0, u], &p1).unwrap();
            c = step_double_integrator(&c, [u, 0.0, 0.5 * u], &p2).unwrap();
            assert_eq!(a, c);
        }
    }

    #[test]
    fn non_finite_input_faults() {
        let s = PlantState::at_rest([0.0; 3]);
        assert!(step_double_integrator(&s, [f64::NAN, 0.0, 0.0], &params()).is_err());
        assert!(step_first_order_actuator(&s, f64::INFINITY, &params()).is_err());
    }

    #[test]
    fn actuator_step_response_is_exact() {
        let p = PlantParams { g_b: 0.0, ..params() };
        let mut s = PlantState::at_rest([0.0; 3]);
        let c = 3.0;
        for k in 1..=2000 {
            s = step_first_order_actuator(&s, c, &p).unwrap();
            let t = k as f64 * p.dt;
            assert_abs_diff_eq!(s.x_act, c * (1.0 - (-p.alpha * t).exp()), epsilon = 1e-9);
        }
        // position: c·b·(t²/2 − t/α + (1 − e^{−αt})/α²)
        let t = 2.0;
        let a = p.alpha;
        let expect = c * (t * t / 2.0 - t / a + (1.0 - (-a * t).exp()) / (a * a));
        assert_abs_diff_eq!(s.x[UP], expect, epsilon = 1e-9);
    }

    #[test]
    fn hover_input_balances_gravity() {
        let p = PlantParams { b: 0.2, ..params() };
        let mut s = PlantState::at_rest([0.0; 3]);
        s.x_act = p.g_b / p.b;
        let next = step_first_order_actuator(&s, p.g_b / p.b, &p).unwrap();
        assert_abs_diff_eq!(next.v[UP], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x[UP], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn actuator_multiplier() {
        let p = params();
        let s = PlantState::at_rest([0.0; 3]);
        let next = step_first_order_actuator(&s, 1.0, &p).unwrap();
        assert_abs_diff_eq!(next.x_act, 1.0 - (-0.01f64).exp(), epsilon = 1e-16);
        assert_abs_diff_eq!(next.x_act, 0.009950166250831893, epsilon = 1e-15);
    }

    #[test]
    fn leaky_base_limits() {
        let p = PlantParams { leaky_tau: 1e9, ..params() };
        let mut s = PlantState::at_rest([0.0; 3]);
        for _ in 0..1000 {
            s = step_leaky_velocity_command(&s, [1.0, 0.0, 0.0], &p).unwrap();
        }
        assert_abs_diff_eq!(s.v[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 1e-6);

        let p = params();
        let mut s = PlantState::at_rest([0.0; 3]);
        s.v_cmd = [1.0, 0.0, 0.0];
        for _ in 0..1000 {
            s = step_leaky_velocity_command(&s, [0.0; 3], &p).unwrap();
        }
        assert_abs_diff_eq!(s.v_cmd[0], (-0.1f64).exp(), epsilon = 1e-12);

        let mut s = PlantState::at_rest([0.0; 3]);
        for k in 1..=3000 {
            s = step_leaky_velocity_command(&s, [1.0, 0.0, 0.0], &p).unwrap();
            let t = k as f64 * p.dt;
            assert_abs_diff_eq!(s.v_cmd[0], 10.0 * (1.0 - (-t / 10.0).exp()), epsilon = 1e-12);
        }
    }

    fn launch(v: f64, theta: f64) -> PlantState {
        let mut s = PlantState::at_rest([0.0; 3]);
        s.v = [v * theta.cos(), 0.0, v * theta.sin()];
        s.transition(Mode::Airborne).unwrap()
    }

    #[test]
    fn projectile_range() {
        let p = params();
        for (v, th) in [(6.767, 20f64.to_radians()), (3.0, 60f64.to_radians())] {
            let f = simulate_flight(&launch(v, th), &p, None).unwrap();
            let expect = v * v * (2.0 * th).sin() / p.g_b;
            assert!((f.range - expect).abs() <= 2.0 * p.dt * v, "{} vs {expect}", f.range);
            assert_abs_diff_eq!(f.landing_time, 2.0 * v * th.sin() / p.g_b, epsilon = 1e-9);
        }
        let f = simulate_flight(&launch(9.81, 45f64.to_radians()), &p, None).unwrap();
        assert_abs_diff_eq!(f.range, 9.81, epsilon = 2.0 * p.dt * 9.81);
    }

    #[test]
    fn standing_start_lands_immediately() {
        let f = simulate_flight(&launch(0.0, 0.5), &params(), None).unwrap();
        assert_eq!(f.range, 0.0);
        assert_eq!(f.landing_time, 0.0);
    }

    #[test]
    fn sustained_thrust_never_lands() {
        let p = params();
        let thrust = TimeSeries::scalar(0.0, p.dt, vec![20.0; (FLIGHT_TIME_CAP / p.dt) as usize + 10]).unwrap();
        let mut s = launch(1.0, 1.0);
        s.x_act = 20.0;
        assert_eq!(simulate_flight(&s, &p, Some(&thrust)), Err(PlantError::NoLanding(FLIGHT_TIME_CAP)));
    }

    #[test]
    fn flight_requires_airborne_mode() {
        let s = PlantState::at_rest([0.0; 3]);
        assert_eq!(simulate_flight(&s, &params(), None), Err(PlantError::NotAirborne));
    }

    #[test]
    fn modes_only_advance() {
        let s = PlantState::at_rest([0.0; 3]).transition(Mode::Oscillating).unwrap();
        assert!(s.transition(Mode::Grounded).is_err());
        assert!(s.transition(Mode::Airborne).is_ok());
    }
}
