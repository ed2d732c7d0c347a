//! Controllers and planners working in embodied units.
//!
//! Everything here sees only estimates. Distances are in embodied units
//! (metres divided by the hidden input gain) and commands are raw inputs, so
//! the same gains behave identically for any gain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EmbodiedUnits;
use crate::linalg::{solve_qp, ConstraintRef, DenseMatrix, LinalgError, QpProblem};
use crate::signals::{SignalError, TimeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("estimate is {age:.2} s old (limit {limit:.2} s)")]
    StaleEstimate { age: f64, limit: f64 },
    #[error("body hull has no {0} contact offset")]
    MissingHull(&'static str),
    #[error("no distance estimate available")]
    NoEstimate,
    #[error("launch angle {0} rad leaves no horizontal or vertical component")]
    DegenerateAngle(f64),
    #[error("gains do not give a stable closed loop")]
    UnstableGains,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("jump plan infeasible: {constraint} off by {violation:.3e}")]
    Infeasible { constraint: String, violation: f64 },
    #[error(transparent)]
    Solver(#[from] LinalgError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub type Result<T> = std::result::Result<T, ControlError>;

/// Feedback gains on embodied position error, tuned for a unit-gain double
/// integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    /// PD gains placing both poles of `s² + kd·s + kp` at damping `zeta`
    /// and natural frequency `omega_n`.
    pub fn from_poles(zeta: f64, omega_n: f64) -> Self {
        Self { kp: omega_n * omega_n, ki: 0.0, kd: 2.0 * zeta * omega_n }
    }

    /// Whether `s³ + kd·s² + kp·s + ki` (or the quadratic when `ki = 0`) is
    /// Hurwitz.
    pub fn is_stable(&self) -> bool {
        let finite = self.kp.is_finite() && self.ki.is_finite() && self.kd.is_finite();
        if !finite || self.kp <= 0.0 || self.kd <= 0.0 || self.ki < 0.0 {
            return false;
        }
        self.ki == 0.0 || self.kd * self.kp > self.ki
    }
}

impl Default for PidGains {
    fn default() -> Self {
        Self::from_poles(1.0, 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    /// Keep going until the body touches.
    Contact,
    /// Stop commanding once the estimated remaining distance drops below this
    /// many embodied units.
    Distance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachConfig {
    /// Approach speed, embodied units per second.
    pub v_s: f64,
    pub gains: PidGains,
    pub stop: StopCondition,
    /// Largest accepted time since the estimate's window closed.
    pub max_estimate_age: f64,
}

impl Default for ApproachConfig {
    fn default() -> Self {
        Self { v_s: 0.3, gains: PidGains::default(), stop: StopCondition::Contact, max_estimate_age: 60.0 }
    }
}

impl ApproachConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_s > 0.0) || !self.v_s.is_finite() {
            return Err(ControlError::Invalid(format!("approach speed {}", self.v_s)));
        }
        if !self.gains.is_stable() {
            return Err(ControlError::UnstableGains);
        }
        if let StopCondition::Distance(d) = self.stop {
            if !(d >= 0.0) {
                return Err(ControlError::Invalid(format!("stop distance {d}")));
            }
        }
        Ok(())
    }
}

/// One camera sample during the approach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachObservation {
    /// Remaining distance over target size.
    pub depth_phi: f64,
    /// Lateral offset of the target centre in normalized image coordinates.
    pub lateral: f64,
}

/// Command for the axial (toward the target) and lateral axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApproachCommand {
    pub axial: f64,
    pub lateral: f64,
    pub done: bool,
}

/// Tracks a constant-speed ramp toward the target. Position comes from the
/// live observation scaled by the estimated `d`; velocity from integrating
/// the robot's own commands, which is exact in embodied units.
#[derive(Debug, Clone)]
pub struct ApproachController {
    cfg: ApproachConfig,
    scale: f64,
    window_end: f64,
    start_time: f64,
    start_distance: Option<f64>,
    velocity: [f64; 2],
    integral: f64,
    last: Option<(f64, ApproachCommand)>,
}

impl ApproachController {
    /// `estimate` supplies the scene size; `velocity` is the embodied velocity
    /// `[toward target, lateral]` at `start_time`.
    pub fn new(
        cfg: ApproachConfig,
        estimate: &EmbodiedUnits,
        window_end: f64,
        start_time: f64,
        velocity: [f64; 2],
    ) -> Result<Self> {
        cfg.validate()?;
        if !estimate.scale.is_finite() || estimate.scale <= 0.0 {
            return Err(ControlError::NoEstimate);
        }
        Ok(Self {
            cfg,
            scale: estimate.scale,
            window_end,
            start_time,
            start_distance: None,
            velocity,
            integral: 0.0,
            last: None,
        })
    }

    /// Estimated remaining distance in embodied units.
    pub fn distance(&self, obs: &ApproachObservation) -> f64 {
        obs.depth_phi * self.scale
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.velocity
    }

    /// Command at time `t`, held until the next call.
    pub fn step(&mut self, t: f64, obs: &ApproachObservation) -> Result<ApproachCommand> {
        let age = t - self.window_end;
        if age > self.cfg.max_estimate_age {
            return Err(ControlError::StaleEstimate { age, limit: self.cfg.max_estimate_age });
        }
        if let Some((t_prev, cmd)) = self.last {
            let h = t - t_prev;
            self.velocity[0] += cmd.axial * h;
            self.velocity[1] += cmd.lateral * h;
        }
        let distance = self.distance(obs);
        let start = *self.start_distance.get_or_insert(distance);
        let elapsed = t - self.start_time;
        let g = self.cfg.gains;

        let done = matches!(self.cfg.stop, StopCondition::Distance(th) if distance <= th);
        let cmd = if done {
            ApproachCommand { axial: -g.kd * self.velocity[0], lateral: -g.kd * self.velocity[1], done }
        } else {
            let lag = distance - (start - self.cfg.v_s * elapsed);
            if let Some((t_prev, _)) = self.last {
                self.integral += lag * (t - t_prev);
            }
            let axial = g.kp * lag + g.ki * self.integral + g.kd * (self.cfg.v_s - self.velocity[0]);
            let offset = obs.lateral * distance;
            let lateral = g.kp * offset - g.kd * self.velocity[1];
            ApproachCommand { axial, lateral, done }
        };
        self.last = Some((t, cmd));
        Ok(cmd)
    }
}

/// Declares a stall once the estimate has not decreased for `hold` seconds.
#[derive(Debug, Clone)]
pub struct StallDetector {
    hold: f64,
    best: f64,
    since: f64,
}

impl StallDetector {
    pub fn new(hold: f64, t0: f64) -> Self {
        Self { hold, best: f64::INFINITY, since: t0 }
    }

    pub fn update(&mut self, t: f64, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.since = t;
        }
        t - self.since >= self.hold
    }
}

/// Where the body was touched from, relative to the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Front,
}

/// Contact offsets from the camera to the body surface, in embodied units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyHull {
    left: Option<f64>,
    right: Option<f64>,
    front: Option<f64>,
}

impl BodyHull {
    /// Stores the offset measured by a completed touch on `side`.
    pub fn record_touch(&mut self, side: Side, offset: f64) -> Result<()> {
        if !(offset >= 0.0) || !offset.is_finite() {
            return Err(ControlError::Invalid(format!("contact offset {offset}")));
        }
        let slot = match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
            Side::Front => &mut self.front,
        };
        *slot = Some(offset);
        Ok(())
    }

    pub fn offset(&self, side: Side) -> Option<f64> {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Front => self.front,
        }
    }

    /// Total lateral width.
    pub fn width(&self) -> Result<f64> {
        let l = self.left.ok_or(ControlError::MissingHull("left"))?;
        let r = self.right.ok_or(ControlError::MissingHull("right"))?;
        Ok(l + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearingDecision {
    pub fits: bool,
    /// Opening width minus body width, embodied units.
    pub margin: f64,
}

/// The body fits when its width is strictly smaller than the gap between
/// the two edge positions.
pub fn clearing_decision(hull: &BodyHull, xl: [f64; 3], xr: [f64; 3]) -> Result<ClearingDecision> {
    let width = hull.width()?;
    if xl.iter().chain(&xr).any(|v| !v.is_finite()) {
        return Err(ControlError::Invalid("edge estimate is not finite".into()));
    }
    let gap = xl.iter().zip(&xr).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(ClearingDecision { fits: width < gap, margin: gap - width })
}

/// Approach speed as a multiple of the estimated target size per second.
pub fn safe_speed_from_target(multiple: f64, estimate: Option<&EmbodiedUnits>) -> Result<f64> {
    if !(multiple >= 0.0) {
        return Err(ControlError::Invalid(format!("speed multiple {multiple}")));
    }
    let est = estimate.ok_or(ControlError::NoEstimate)?;
    if !est.scale.is_finite() {
        return Err(ControlError::NoEstimate);
    }
    Ok(multiple * est.scale)
}

/// Largest speed that a fraction `alpha_frac` of the input limit can cancel
/// within `t_decel` seconds.
pub fn safe_speed_from_force(alpha_frac: f64, t_decel: f64, u_max: f64) -> Result<f64> {
    if !(alpha_frac >= 0.0 && t_decel >= 0.0 && u_max >= 0.0) {
        return Err(ControlError::Invalid(format!("{alpha_frac}, {t_decel}, {u_max}")));
    }
    Ok(alpha_frac * t_decel * u_max)
}

/// Launch speed and flight time to cover `distance` under `gravity` at
/// elevation `theta` (radians), landing at launch height.
pub fn solve_launch(distance: f64, gravity: f64, theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(ControlError::DegenerateAngle(theta));
    }
    if !(distance > 0.0 && gravity > 0.0) {
        return Err(ControlError::Invalid(format!("distance {distance}, gravity {gravity}")));
    }
    let v = (gravity * distance / (2.0 * theta).sin()).sqrt();
    Ok((v, distance / (v * theta.cos())))
}

/// Launch parameters and the run-up input.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPlan {
    pub theta_l: f64,
    pub v_l: f64,
    pub t_f: f64,
    pub d_m: f64,
    /// Run-up input without the gravity offset.
    pub u_j: TimeSeries,
    /// Input that holds the body against gravity.
    pub gravity_offset: f64,
    pub qp_iterations: usize,
}

impl JumpPlan {
    /// Input to send: the planned run-up on top of the gravity offset.
    pub fn command(&self) -> TimeSeries {
        self.u_j.map(|u| u + self.gravity_offset)
    }
}

/// Rows mapping held inputs `u_0..u_n` to end velocity and distance, for
/// a response whose impulse-response bin integrals are `kernel·dt`.
/// Acceleration is exact at the sample times and linear in between.
pub fn terminal_operators(kernel: &TimeSeries, n_steps: usize) -> (Vec<f64>, Vec<f64>) {
    let dt = kernel.dt();
    let m = n_steps + 1;
    let g = |j: usize| if j < kernel.len() { kernel.value(j) } else { 0.0 };
    // accel[k] = dt Σ_j g_j u_{k−1−j}
    let accel_row = |k: usize| {
        let mut row = vec![0.0; m];
        for i in 0..k {
            row[i] = dt * g(k - 1 - i);
        }
        row
    };
    let mut vel = vec![0.0; m];
    let mut pos = vec![0.0; m];
    let mut a_prev = accel_row(0);
    for k in 0..n_steps {
        let a_next = accel_row(k + 1);
        for i in 0..m {
            pos[i] += vel[i] * dt + dt * dt * (a_prev[i] / 3.0 + a_next[i] / 6.0);
            vel[i] += 0.5 * dt * (a_prev[i] + a_next[i]);
        }
        a_prev = a_next;
    }
    (vel, pos)
}

/// Minimum total-variation input that reaches `v_l` after exactly `d_m`
/// of travel within `t_j` seconds, starting and ending at zero.
pub fn plan_jump_control(
    theta_l: f64,
    v_l: f64,
    t_f: f64,
    d_m: f64,
    response: &EmbodiedUnits,
    t_j: f64,
) -> Result<JumpPlan> {
    let kernel = response.kernel.as_ref().ok_or(ControlError::NoEstimate)?;
    let gravity_offset = response.gravity.unwrap_or(0.0);
    if !(v_l >= 0.0 && d_m >= 0.0 && t_j > 0.0) {
        return Err(ControlError::Invalid(format!("v_l {v_l}, d_m {d_m}, t_j {t_j}")));
    }
    let dc: f64 = kernel.dt() * kernel.values().iter().sum::<f64>();
    if !(dc > 0.0) {
        return Err(ControlError::Invalid(format!("response DC gain {dc}")));
    }
    let dt = kernel.dt();
    let n_steps = (t_j / dt).round() as usize;
    let m = n_steps + 1;
    let (vel, pos) = terminal_operators(kernel, n_steps);

    let mut h = DenseMatrix::zeros(m, m);
    for k in 0..n_steps {
        let w = 2.0 / dt;
        h[(k, k)] += w;
        h[(k + 1, k + 1)] += w;
        h[(k, k + 1)] -= w;
        h[(k + 1, k)] -= w;
    }
    let mut first = vec![0.0; m];
    first[0] = 1.0;
    let mut last = vec![0.0; m];
    last[n_steps] = 1.0;
    let a_eq = DenseMatrix::from_rows(&[vel, pos, first, last])?;
    let problem =
        QpProblem::new(h, vec![0.0; m]).with_equalities(a_eq, vec![v_l, d_m, 0.0, 0.0]).with_nonnegative(0..m);
    let solution = solve_qp(&problem).map_err(|e| match e {
        LinalgError::Infeasible { constraint, violation } => ControlError::Infeasible {
            constraint: match constraint {
                ConstraintRef::Equality(0) => "terminal velocity".to_string(),
                ConstraintRef::Equality(1) => "run-up distance".to_string(),
                ConstraintRef::Equality(_) => "endpoint pin".to_string(),
                ConstraintRef::Inequality(i) => format!("u[{i}] >= 0"),
            },
            violation,
        },
        other => other.into(),
    })?;
    Ok(JumpPlan {
        theta_l,
        v_l,
        t_f,
        d_m,
        u_j: TimeSeries::scalar(0.0, dt, solution.x)?,
        gravity_offset,
        qp_iterations: solution.iterations,
    })
}

/// Reference tracking through an inverted first-order actuator model.
///
/// The plant is `ẍ = b·x_act`, `ẋ_act = α(u − x_act)`. The controller sees
/// `y = x/scale` and emits `u = (scale/b)·(v + v̇/α)` with
/// `v = kp·(ref − y) − kd·ẏ`, which cancels the actuator and leaves
/// `ẍ = kp·(scale·ref − x) − kd·ẋ`. `scale = d` gives characteristic-scale
/// tracking, `scale = b` embodied tracking.
pub fn simulate_characteristic_tracking(
    alpha: f64,
    b: f64,
    scale: f64,
    gains: PidGains,
    reference: &TimeSeries,
) -> Result<TimeSeries> {
    if !(PidGains { ki: 0.0, ..gains }).is_stable() {
        return Err(ControlError::UnstableGains);
    }
    if !(alpha > 0.0 && b != 0.0 && scale != 0.0) {
        return Err(ControlError::Invalid(format!("alpha {alpha}, b {b}, scale {scale}")));
    }
    let dt = reference.dt();
    let decay = (-alpha * dt).exp();
    let gain = -(-alpha * dt).exp_m1();
    let (mut x, mut v, mut act) = (0.0, 0.0, 0.0);
    let mut v_prev: Option<f64> = None;
    let mut out = Vec::with_capacity(reference.len());
    for k in 0..reference.len() {
        out.push(x);
        let cmd = gains.kp * (reference.value(k) - x / scale) - gains.kd * v / scale;
        let cmd_rate = v_prev.map_or(0.0, |p| (cmd - p) / dt);
        v_prev = Some(cmd);
        let u = scale / b * (cmd + cmd_rate / alpha);
        let c = act - u;
        x += v * dt + 0.5 * b * u * dt * dt + b * c * (dt / alpha - gain / (alpha * alpha));
        v += b * u * dt + b * c * gain / alpha;
        act = u + c * decay;
    }
    Ok(TimeSeries::scalar(reference.t0(), dt, out)?)
}

/// The response `ẍ = kp·(scale·ref − x) − kd·ẋ` that tracking aims for.
pub fn ideal_tracking(scale: f64, gains: PidGains, reference: &TimeSeries) -> Result<TimeSeries> {
    let dt = reference.dt();
    let (mut x, mut v) = (0.0, 0.0);
    let mut out = Vec::with_capacity(reference.len());
    // Fine substeps keep the explicit update close to the continuous loop.
    let sub = 20;
    let h = dt / sub as f64;
    for k in 0..reference.len() {
        out.push(x);
        let r = scale * reference.value(k);
        for _ in 0..sub {
            let a = gains.kp * (r - x) - gains.kd * v;
            x += v * h + 0.5 * a * h * h;
            v += a * h;
        }
    }
    Ok(TimeSeries::scalar(reference.t0(), dt, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn units(scale: f64) -> EmbodiedUnits {
        EmbodiedUnits { position: 0.0, velocity: 0.0, scale, gravity: None, kernel: None, dc_gain_over_d: 1.0 / scale }
    }

    #[test]
    fn launch_closed_form() {
        let (v, t) = solve_launch(9.81, 9.81, std::f64::consts::FRAC_PI_4).unwrap();
        assert_abs_diff_eq!(v, 9.81, epsilon = 1e-12);
        assert_abs_diff_eq!(t, 9.81 / (9.81 * std::f64::consts::FRAC_1_SQRT_2), epsilon = 1e-12);
        let (v1, _) = solve_launch(1.5, 9.81, 0.3).unwrap();
        let (v2, _) = solve_launch(3.0, 9.81, 0.3).unwrap();
        assert_abs_diff_eq!(v2 / v1, 2f64.sqrt(), epsilon = 1e-12);
        assert!(matches!(solve_launch(3.0, 9.81, 0.0), Err(ControlError::DegenerateAngle(_))));
        assert!(matches!(solve_launch(3.0, 9.81, std::f64::consts::FRAC_PI_2), Err(ControlError::DegenerateAngle(_))));
    }

    #[test]
    fn clearing_examples() {
        let mut hull = BodyHull::default();
        assert_eq!(clearing_decision(&hull, [0.0; 3], [1.0, 0.0, 0.0]), Err(ControlError::MissingHull("left")));
        hull.record_touch(Side::Left, 0.0955).unwrap();
        hull.record_touch(Side::Right, 0.0955).unwrap();
        let d = clearing_decision(&hull, [-0.125, 0.0, 1.5], [0.125, 0.0, 1.5]).unwrap();
        assert!(d.fits);
        assert_abs_diff_eq!(d.margin, 0.059, epsilon = 1e-12);
        assert!(!clearing_decision(&hull, [-0.0625, 0.0, 1.5], [0.0625, 0.0, 1.5]).unwrap().fits);
        // equality does not fit
        assert!(!clearing_decision(&hull, [0.0; 3], [0.191, 0.0, 0.0]).unwrap().fits);
        assert!(hull.record_touch(Side::Front, -0.1).is_err());
    }

    #[test]
    fn safe_speeds() {
        assert_abs_diff_eq!(safe_speed_from_force(1.0, 0.5, 2.0).unwrap(), 1.0);
        assert_eq!(safe_speed_from_target(0.0, Some(&units(0.5))).unwrap(), 0.0);
        assert_abs_diff_eq!(safe_speed_from_target(0.4, Some(&units(0.5))).unwrap(), 0.2);
        assert_eq!(safe_speed_from_target(0.4, None), Err(ControlError::NoEstimate));
    }

    #[test]
    fn on_target_at_speed_commands_nothing() {
        let cfg = ApproachConfig::default();
        let mut c = ApproachController::new(cfg, &units(2.0), 0.0, 0.0, [cfg.v_s, 0.0]).unwrap();
        let cmd = c.step(0.0, &ApproachObservation { depth_phi: 1.0, lateral: 0.0 }).unwrap();
        assert!(cmd.axial.abs() < 1e-9 && cmd.lateral.abs() < 1e-9);
    }

    #[test]
    fn stale_estimate_rejected() {
        let cfg = ApproachConfig { max_estimate_age: 1.0, ..Default::default() };
        let mut c = ApproachController::new(cfg, &units(1.0), 0.0, 0.0, [0.0; 2]).unwrap();
        let r = c.step(2.0, &ApproachObservation { depth_phi: 1.0, lateral: 0.0 });
        assert!(matches!(r, Err(ControlError::StaleEstimate { .. })));
    }

    #[test]
    fn gain_stability() {
        assert!(PidGains::from_poles(1.0, 1.0).is_stable());
        assert!(!PidGains { kp: 1.0, ki: 0.0, kd: -1.0 }.is_stable());
        assert!(!PidGains { kp: 1.0, ki: 5.0, kd: 2.0 }.is_stable());
        assert!(PidGains { kp: 4.0, ki: 1.0, kd: 4.0 }.is_stable());
    }

    #[test]
    fn stall_detection() {
        let mut s = StallDetector::new(0.5, 0.0);
        assert!(!s.update(0.0, 3.0));
        assert!(!s.update(0.3, 2.0));
        assert!(!s.update(0.7, 2.0));
        assert!(s.update(0.8, 2.1));
    }

    #[test]
    fn zero_jump_is_gravity_only() {
        let kernel = TimeSeries::from_fn(0.0, 0.001, 2000, |t| 10.0 * (-10.0 * t).exp()).unwrap();
        let resp = EmbodiedUnits { gravity: Some(49.05), kernel: Some(kernel), ..units(15.0) };
        let plan = plan_jump_control(0.35, 0.0, 0.0, 0.0, &resp, 0.25).unwrap();
        assert!(plan.u_j.values().iter().all(|u| u.abs() < 1e-9));
        assert!(plan.command().values().iter().all(|u| (u - 49.05).abs() < 1e-9));
    }
}
