//! Jumping a gap: lift off, oscillate vertically while fixating a line on the
//! far platform, identify the actuator response and gravity per unit gap,
//! then plan and execute an open-loop launch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Axis, ScenarioConfig};
use super::sweep::CellParams;
use super::{HarnessError, Result};
use crate::camera::{phi_line_height, CameraSpec, QuantizerState};
use crate::control::{plan_jump_control, solve_launch, JumpPlan};
use crate::estimators::{estimate_impulse_response, EmbodiedUnits, ImpulseEstimate, WindowData};
use crate::plant::{advance_first_order_actuator, simulate_flight, Mode, PlantParams, PlantState, UP};
use crate::signals::{make_exp_basis, ExpBasis, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSetup {
    pub params: PlantParams,
    pub gap: f64,
    pub camera: CameraSpec,
    pub quantize: bool,
    pub delta: f64,
    pub camera_height: f64,
    pub stroke: f64,
    pub lift_ramp: f64,
    pub frequency: f64,
    pub window: f64,
    pub fit_start: f64,
    pub basis_count: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub basis_length: f64,
    pub launch_angle: f64,
    pub run_up: f64,
    pub platform_half_width: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl JumpSetup {
    /// `rng` draws the quantizer offset when none is configured or swept.
    pub fn from_config(cfg: &ScenarioConfig, cell: &CellParams, rng: &mut ChaCha8Rng) -> Result<Self> {
        let j = &cfg.jump;
        let mut camera = j.camera.spec()?;
        if let Some(res) = cell.get(Axis::Res) {
            let r = res.round() as u32;
            camera.res_u = r;
            camera.res_v = r;
            camera.validate()?;
        }
        let delta = match cell.get(Axis::Delta).or(j.delta) {
            Some(d) => d,
            None => rng.gen_range(-0.5..0.5),
        };
        let params = PlantParams {
            b: cell.get(Axis::B).unwrap_or(j.b),
            alpha: cell.get(Axis::Alpha).unwrap_or(j.alpha),
            g_b: cell.get(Axis::G).unwrap_or(j.g),
            body_half_width_l: cfg.body.half_width_l,
            body_half_width_r: cfg.body.half_width_r,
            leaky_tau: 1.0,
            dt: cfg.dt,
        };
        params.validate()?;
        Ok(Self {
            params,
            gap: cell.get(Axis::Gap).unwrap_or(j.gap),
            camera,
            quantize: cfg.quantize,
            delta,
            camera_height: j.camera_height,
            stroke: j.stroke,
            lift_ramp: j.lift_ramp,
            frequency: j.oscillation_frequency,
            window: cell.get(Axis::Window).unwrap_or(j.window),
            fit_start: j.fit_start,
            basis_count: j.basis_count,
            tau_min: j.tau_min,
            tau_max: j.tau_max,
            basis_length: j.basis_length,
            launch_angle: j.launch_angle.to_radians(),
            run_up: j.run_up,
            platform_half_width: j.platform_half_width,
            kp: j.kp,
            ki: j.ki,
            kd: j.kd,
        })
    }

    pub fn basis(&self) -> Result<ExpBasis> {
        Ok(make_exp_basis(self.basis_count, self.tau_min, self.tau_max, self.basis_length, self.params.dt)?)
    }
}

/// Height reference for the measurement flight, relative to the ground.
#[derive(Debug, Clone, Copy)]
struct Profile {
    stroke: f64,
    frequency: f64,
    window: f64,
}

/// Phase durations after lift-off: climb, hold at the top, move to the
/// middle, settle, then the oscillation window.
const CLIMB: f64 = 2.0;
const HOLD: f64 = 0.5;
const CENTRE: f64 = 1.0;
const SETTLE: f64 = 0.5;

fn min_jerk(s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let pos = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let vel = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    (pos, vel)
}

impl Profile {
    /// `(height, rate)` at `t` seconds after lift-off.
    fn at(&self, t: f64) -> (f64, f64) {
        let top = self.stroke;
        let mid = self.stroke / 2.0;
        let amp = self.stroke / 4.0;
        if t < CLIMB {
            let (p, v) = min_jerk(t / CLIMB);
            (top * p, top * v / CLIMB)
        } else if t < CLIMB + HOLD {
            (top, 0.0)
        } else if t < CLIMB + HOLD + CENTRE {
            let (p, v) = min_jerk((t - CLIMB - HOLD) / CENTRE);
            (top - (top - mid) * p, -(top - mid) * v / CENTRE)
        } else if t < self.oscillation_start() {
            (mid, 0.0)
        } else {
            let w = 2.0 * std::f64::consts::PI * self.frequency;
            let tau = t - self.oscillation_start();
            (mid + amp * (w * tau).sin(), amp * w * (w * tau).cos())
        }
    }

    fn oscillation_start(&self) -> f64 {
        CLIMB + HOLD + CENTRE + SETTLE
    }

    /// Time at the top of the climb, where the top of the stroke is observed.
    fn top_time(&self) -> f64 {
        CLIMB + 0.5 * HOLD
    }

    fn end(&self) -> f64 {
        self.oscillation_start() + self.window
    }
}

/// Recorded measurement flight.
#[derive(Debug, Clone)]
pub struct Measurement {
    /// Total actuator input on the control grid.
    pub u: TimeSeries,
    /// Camera height over gap, for frames in the window.
    pub phi: TimeSeries,
    pub window: (f64, f64),
    /// Observation at rest on the ground and at the top of the climb.
    pub phi_bottom: f64,
    pub phi_top: f64,
}

/// Observed height: the fixated line's image coordinate is `−H/gap`.
fn observe(setup: &JumpSetup, s: &PlantState) -> Result<f64> {
    let q = QuantizerState::new(setup.delta, setup.quantize)?;
    let h = setup.camera_height + s.x[UP];
    Ok(-phi_line_height(-h, setup.gap, &setup.camera, q)?)
}

fn ground(mut s: PlantState) -> PlantState {
    if s.x[UP] < 0.0 {
        s.x[UP] = 0.0;
        s.v[UP] = s.v[UP].max(0.0);
    }
    s
}

/// Ramp up until lift-off, then fly the measurement profile under the
/// robot's own metric height controller.
pub fn measure(setup: &JumpSetup) -> Result<Measurement> {
    let p = &setup.params;
    let dt = p.dt;
    let b = p.b;
    let mut s = PlantState::at_rest([0.0; 3]);
    let phi_bottom = observe(setup, &s)?;
    let mut inputs = Vec::new();

    // Lift force ramp; the body leaves the ground once thrust beats gravity.
    let mut u = 0.0;
    let limit = (60.0 / dt) as usize;
    while !(s.x[UP] > 0.0 && s.v[UP] > 0.0) {
        if inputs.len() > limit {
            return Err(HarnessError::Trial("never lifted off".into()));
        }
        inputs.push(u);
        s = ground(advance_first_order_actuator(&s, u, p, dt)?);
        u += setup.lift_ramp * dt;
    }
    let lift_off = inputs.len();
    s = s.transition(Mode::Oscillating)?;

    let profile = Profile { stroke: setup.stroke, frequency: setup.frequency, window: setup.window };
    let osc_start = lift_off + (profile.oscillation_start() / dt).round() as usize;
    let total = lift_off + (profile.end() / dt).round() as usize;
    let top_step = lift_off + (profile.top_time() / dt).round() as usize;
    let mut integral = u;
    let mut phi_top = f64::NAN;
    let mut states = Vec::with_capacity(total - lift_off + 1);
    for k in lift_off..=total {
        let t = (k - lift_off) as f64 * dt;
        let (r, rv) = profile.at(t);
        let e = r - s.x[UP];
        let u = integral + (setup.kp * e + setup.kd * (rv - s.v[UP])) / b;
        integral += setup.ki * e * dt / b;
        if k == top_step {
            phi_top = observe(setup, &s)?;
        }
        states.push(s);
        inputs.push(u);
        s = ground(advance_first_order_actuator(&s, u, p, dt)?);
    }
    let u = TimeSeries::scalar(0.0, dt, inputs)?;

    let t0 = osc_start as f64 * dt;
    let t1 = total as f64 * dt;
    let frame_dt = setup.camera.frame_interval();
    let first = (t0 / frame_dt - 1e-9).ceil() as usize;
    let last = (t1 / frame_dt + 1e-9).floor() as usize;
    let mut phi = Vec::with_capacity(last - first + 1);
    for f in first..=last {
        let t = f as f64 * frame_dt;
        let k = ((t / dt + 1e-9).floor() as usize).min(total);
        let at = advance_first_order_actuator(&states[k - lift_off], u.value(k), p, t - k as f64 * dt)?;
        phi.push(observe(setup, &at)?);
    }
    let phi = TimeSeries::scalar(first as f64 * frame_dt, frame_dt, phi)?;
    Ok(Measurement { u, phi, window: (t0, t1), phi_bottom, phi_top })
}

/// Result of one jump.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOutcome {
    pub estimate: ImpulseEstimate,
    pub units: EmbodiedUnits,
    pub plan: JumpPlan,
    /// Launch speed reached by the run-up, metres per second.
    pub launch_speed: f64,
    pub range: f64,
}

/// Identification only.
pub fn identify(setup: &JumpSetup, m: &Measurement) -> Result<ImpulseEstimate> {
    let w = WindowData::new(m.phi.clone(), m.u.clone(), m.window)?;
    Ok(estimate_impulse_response(&w, &setup.basis()?, true, setup.fit_start)?)
}

/// Plans the launch from the estimate and flies it through the true plant.
pub fn launch(setup: &JumpSetup, m: &Measurement, estimate: &ImpulseEstimate) -> Result<JumpOutcome> {
    let units = estimate.to_embodied_via(0)?;
    let gravity = units.gravity.unwrap_or(0.0);
    let (v_l, t_f) = solve_launch(units.scale, gravity, setup.launch_angle)?;
    let d_m = 0.5 * (m.phi_top - m.phi_bottom) * units.scale;
    let plan = plan_jump_control(setup.launch_angle, v_l, t_f, d_m, &units, setup.run_up)?;

    // Run-up along the launch direction from a hover at the bottom, legs cut
    // at take-off.
    let p = &setup.params;
    let cmd = plan.command();
    let mut s = PlantState { x_act: plan.gravity_offset, ..PlantState::at_rest([0.0; 3]) };
    for k in 0..cmd.len() - 1 {
        s = advance_first_order_actuator(&s, cmd.value(k), p, p.dt)?;
    }
    let speed = s.v[UP];
    let theta = setup.launch_angle;
    let airborne = PlantState {
        x: [0.0; 3],
        v: [speed * theta.cos(), 0.0, speed * theta.sin()],
        x_act: 0.0,
        v_cmd: [0.0; 3],
        mode: Mode::Airborne,
    };
    let flight = simulate_flight(&airborne, p, None)?;
    Ok(JumpOutcome { estimate: estimate.clone(), units, plan, launch_speed: speed, range: flight.range })
}

pub fn run_jump(setup: &JumpSetup) -> Result<JumpOutcome> {
    let m = measure(setup)?;
    let est = identify(setup, &m)?;
    launch(setup, &m, &est)
}

pub const METRICS: &[&str] = &[
    "delta",
    "distance_est",
    "distance_true",
    "distance_error_pct",
    "gravity_est",
    "gravity_true",
    "gravity_error_pct",
    "run_up",
    "launch_speed_planned",
    "launch_speed_error_pct",
    "range",
    "range_error_pct",
    "success",
    "residual_rms",
];

pub fn metrics(setup: &JumpSetup, out: &JumpOutcome) -> Vec<f64> {
    let b = setup.params.b;
    let d_true = setup.gap / b;
    let g_true = setup.params.g_b / b;
    let d_est = out.units.scale;
    let g_est = out.units.gravity.unwrap_or(f64::NAN);
    let planned = out.plan.v_l * b;
    vec![
        setup.delta,
        d_est,
        d_true,
        100.0 * (d_est - d_true) / d_true,
        g_est,
        g_true,
        100.0 * (g_est - g_true) / g_true,
        out.plan.d_m,
        out.plan.v_l,
        100.0 * (out.launch_speed - planned) / planned,
        out.range,
        100.0 * (out.range - setup.gap) / setup.gap,
        if (out.range - setup.gap).abs() <= setup.platform_half_width { 1.0 } else { 0.0 },
        out.estimate.residual_rms,
    ]
}

pub fn run_trial(cfg: &ScenarioConfig, cell: &CellParams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let setup = JumpSetup::from_config(cfg, cell, rng)?;
    let out = run_jump(&setup)?;
    Ok(metrics(&setup, &out))
}
