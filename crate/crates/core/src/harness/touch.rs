//! Uncalibrated touching: oscillate open loop in front of a target, estimate
//! its size and distance in embodied units, then approach at constant
//! embodied speed until contact.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Axis, ScenarioConfig};
use super::sweep::CellParams;
use super::{HarnessError, Result};
use crate::camera::{phi_opening_edges, phi_target_width_at, CameraSpec, QuantizerState};
use crate::control::{ApproachConfig, ApproachController, ApproachObservation, PidGains, StallDetector, StopCondition};
use crate::estimators::{estimate_unbiased, EmbodiedEstimate, EmbodiedUnits, ToEmbodied, WindowData};
use crate::plant::{advance_double_integrator, PlantParams, PlantState};
use crate::signals::TimeSeries;

/// Axis indices in the plant state.
const LATERAL: usize = 0;
const FORWARD: usize = 2;

/// Everything one touch-style run needs, with sweep overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchSetup {
    pub b: f64,
    /// Initial camera-to-target distance, metres.
    pub distance: f64,
    /// Target (or opening) width, metres.
    pub width: f64,
    pub camera: CameraSpec,
    pub quantize: bool,
    pub noise_px: f64,
    /// Robot's lateral offset from the target centre, metres.
    pub lateral_offset: f64,
    /// Camera to the surface that makes contact, metres.
    pub contact_offset: f64,
    pub clearance: f64,
    pub period: f64,
    pub amplitude: f64,
    pub duration: f64,
    pub window: f64,
    pub approach: ApproachConfig,
    pub stall_hold: f64,
    pub timeout: f64,
    pub dt: f64,
}

impl TouchSetup {
    pub fn from_config(cfg: &ScenarioConfig, cell: &CellParams) -> Result<Self> {
        let t = &cfg.touch;
        let mut camera = t.camera.spec()?;
        if let Some(res) = cell.get(Axis::Res) {
            let res_v = res.round() as u32;
            camera.res_u = (res * camera.res_u as f64 / camera.res_v as f64).round() as u32;
            camera.res_v = res_v;
            camera.validate()?;
        }
        Ok(Self {
            b: cell.get(Axis::B).unwrap_or(t.b),
            distance: cell.get(Axis::Distance).unwrap_or(t.distance),
            width: cell.get(Axis::Width).unwrap_or(t.width),
            camera,
            quantize: cfg.quantize,
            noise_px: t.noise_px,
            lateral_offset: t.lateral_offset,
            contact_offset: cfg.body.front_offset,
            clearance: t.clearance,
            period: t.oscillation_period,
            amplitude: t.oscillation_amplitude,
            duration: t.oscillation_duration,
            window: cell.get(Axis::Window).unwrap_or(t.window),
            approach: ApproachConfig {
                v_s: t.approach_speed,
                gains: PidGains::from_poles(t.zeta, t.omega_n),
                stop: StopCondition::Contact,
                max_estimate_age: t.approach_timeout + 1.0,
            },
            stall_hold: t.stall_hold,
            timeout: t.approach_timeout,
            dt: cfg.dt,
        })
    }

    fn params(&self) -> PlantParams {
        PlantParams {
            b: self.b,
            alpha: 1.0,
            g_b: 0.0,
            body_half_width_l: 0.0,
            body_half_width_r: 0.0,
            leaky_tau: 1.0,
            dt: self.dt,
        }
    }

    /// Peak travel toward the target during the oscillation, metres.
    pub fn oscillation_reach(&self) -> f64 {
        2.0 * self.amplitude * self.b
    }

    /// The oscillation would bring the body within the clearance.
    pub fn unsafe_start(&self) -> bool {
        self.distance - self.oscillation_reach() < self.contact_offset + self.clearance
    }

    /// Forward input `A·cos(ωt)`; its double integral moves the body
    /// `amplitude·(1 − cos ωt)` embodied units toward the target. Sampling
    /// each held step at its midpoint keeps the mean velocity at zero, so the
    /// body is back at rest at its start after whole periods.
    pub fn oscillation_input(&self) -> Result<TimeSeries> {
        let n = (self.duration / self.dt).round() as usize;
        let omega = 2.0 * std::f64::consts::PI / self.period;
        let a = self.amplitude * omega * omega;
        let half = 0.5 * self.dt;
        Ok(TimeSeries::from_fn(0.0, self.dt, n + 1, |t| a * (omega * (t + half)).cos())?)
    }
}

/// Renders camera frames of a target of width `width` whose centre sits at
/// lateral 0 and depth `distance` in the world.
pub struct TargetCamera<'a> {
    pub setup: &'a TouchSetup,
    noise: Option<Normal<f64>>,
}

impl<'a> TargetCamera<'a> {
    pub fn new(setup: &'a TouchSetup) -> Self {
        let noise = (setup.noise_px > 0.0).then(|| Normal::new(0.0, setup.noise_px).expect("finite noise"));
        Self { setup, noise }
    }

    pub fn depth(&self, s: &PlantState) -> f64 {
        self.setup.distance - s.x[FORWARD]
    }

    /// Observation with a fresh quantizer offset and edge noise.
    pub fn observe(&self, s: &PlantState, rng: &mut ChaCha8Rng) -> Result<ApproachObservation> {
        let setup = self.setup;
        let q = QuantizerState::new(rng.gen_range(-0.5..0.5), setup.quantize)?;
        let mut edge_noise = [0.0; 2];
        if let Some(n) = &self.noise {
            edge_noise = [n.sample(rng), n.sample(rng)];
        }
        let z = self.depth(s);
        let centre = -s.x[LATERAL];
        let depth_phi = phi_target_width_at(centre, z, setup.width, &setup.camera, q, edge_noise)?;
        let (pl, pr) = phi_opening_edges(
            [centre - setup.width / 2.0, 0.0, z],
            [centre + setup.width / 2.0, 0.0, z],
            &setup.camera,
            q,
        )?;
        Ok(ApproachObservation { depth_phi, lateral: 0.5 * (pl + pr) })
    }

    /// Normalized edge coordinates, quantized with a fresh offset.
    pub fn edges(&self, s: &PlantState, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        let setup = self.setup;
        let q = QuantizerState::new(rng.gen_range(-0.5..0.5), setup.quantize)?;
        let z = self.depth(s);
        let centre = -s.x[LATERAL];
        Ok(phi_opening_edges(
            [centre - setup.width / 2.0, 0.0, z],
            [centre + setup.width / 2.0, 0.0, z],
            &setup.camera,
            q,
        )?)
    }
}

/// The open-loop oscillation and the frames recorded during it.
#[derive(Debug, Clone)]
pub struct Oscillation {
    /// Forward input on the control grid.
    pub u_fwd: TimeSeries,
    /// `Φ` for frames inside the estimation window.
    pub phi: TimeSeries,
    pub window: (f64, f64),
    pub end_state: PlantState,
}

/// Runs the oscillation from rest.
pub fn oscillate(setup: &TouchSetup, rng: &mut ChaCha8Rng) -> Result<Oscillation> {
    let camera = TargetCamera::new(setup);
    let p = setup.params();
    let u_fwd = setup.oscillation_input()?;
    let steps = u_fwd.len() - 1;
    let t_end = steps as f64 * setup.dt;
    let window = (t_end - setup.window, t_end);
    let frame_dt = setup.camera.frame_interval();
    let first_frame = (window.0 / frame_dt - 1e-9).ceil() as usize;

    let mut s = PlantState::at_rest([setup.lateral_offset, 0.0, 0.0]);
    let mut phi = Vec::new();
    let mut frame = first_frame;
    for k in 0..=steps {
        let t_k = k as f64 * setup.dt;
        let input = [0.0, 0.0, u_fwd.value(k)];
        // Frames falling in [t_k, t_k + dt) are rendered from the exact
        // intra-step state.
        loop {
            let t_f = frame as f64 * frame_dt;
            if t_f > window.1 + 1e-9 || t_f >= t_k + setup.dt - 1e-12 {
                break;
            }
            let at = advance_double_integrator(&s, input, &p, (t_f - t_k).max(0.0))?;
            phi.push(camera.observe(&at, rng)?.depth_phi);
            frame += 1;
        }
        if k < steps {
            s = advance_double_integrator(&s, input, &p, setup.dt)?;
        }
    }
    let phi = TimeSeries::scalar(first_frame as f64 * frame_dt, frame_dt, phi)?;
    Ok(Oscillation { u_fwd, phi, window, end_state: s })
}

impl Oscillation {
    /// Unbiased estimate over the window. The observation tracks remaining
    /// distance, which the forward input shrinks, hence the sign flip.
    pub fn estimate(&self) -> Result<EmbodiedEstimate> {
        let u = self.u_fwd.map(|v| -v);
        let w = WindowData::new(self.phi.clone(), u, self.window)?;
        Ok(estimate_unbiased(&w)?)
    }

    /// Embodied forward velocity at the end of the window, from the estimate
    /// and the inputs applied since its start.
    pub fn forward_velocity(&self, est: &EmbodiedEstimate) -> f64 {
        let (t0, t1) = self.window;
        let dt = self.u_fwd.dt();
        let k0 = (t0 / dt).round() as usize;
        let k1 = (t1 / dt).round() as usize;
        let applied: f64 = (k0..k1).map(|k| self.u_fwd.value(k) * dt).sum();
        applied - est.x2_over_b
    }

    /// Embodied remaining distance at the end of the window, propagated from
    /// the estimate with the robot's own inputs.
    pub fn final_distance(&self, est: &EmbodiedEstimate) -> f64 {
        let (t0, t1) = self.window;
        let dt = self.u_fwd.dt();
        let k0 = (t0 / dt).round() as usize;
        let k1 = (t1 / dt).round() as usize;
        let mut travelled = 0.0;
        let mut v = 0.0;
        for k in k0..k1 {
            let a = self.u_fwd.value(k);
            travelled += v * dt + 0.5 * a * dt * dt;
            v += a * dt;
        }
        est.x1_over_b + est.x2_over_b * (t1 - t0) - travelled
    }
}

/// What happened during the approach.
#[derive(Debug, Clone, PartialEq)]
pub struct Approach {
    /// Seconds from approach start to contact.
    pub arrival_time: f64,
    /// Remaining embodied distance estimated at contact.
    pub contact_estimate: f64,
    /// Seconds from contact until the visual stall detector fired.
    pub stall_lag: Option<f64>,
    /// Lateral offset of the body from the target centre at contact, metres.
    pub lateral_error: f64,
    pub state: PlantState,
}

/// Constant-speed approach until the contact surface reaches the target.
pub fn approach(
    setup: &TouchSetup,
    start: PlantState,
    t_start: f64,
    units: &EmbodiedUnits,
    v_fwd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Approach> {
    let camera = TargetCamera::new(setup);
    let p = setup.params();
    let frame_dt = setup.camera.frame_interval();
    let mut ctrl = ApproachController::new(setup.approach, units, t_start, t_start, [v_fwd, 0.0])?;
    let mut stall = StallDetector::new(setup.stall_hold, t_start);
    let contact_x = setup.distance - setup.contact_offset;
    let mut s = start;
    let frames = (setup.timeout / frame_dt).ceil() as usize;
    for i in 0..frames {
        let t = t_start + i as f64 * frame_dt;
        let obs = camera.observe(&s, rng)?;
        stall.update(t, ctrl.distance(&obs));
        let cmd = ctrl.step(t, &obs)?;
        let input = [cmd.lateral, 0.0, cmd.axial];
        let next = advance_double_integrator(&s, input, &p, frame_dt)?;
        if next.x[FORWARD] >= contact_x {
            let h = crossing_time(s.x[FORWARD], s.v[FORWARD], setup.b * cmd.axial, contact_x, frame_dt);
            let mut hit = advance_double_integrator(&s, input, &p, h)?;
            hit.v = [0.0; 3];
            let t_contact = t + h;
            let contact_estimate = ctrl.distance(&camera.observe(&hit, rng)?);
            // The body now rests against the target; keep watching for the
            // estimate to stop shrinking.
            let mut stall_lag = None;
            let first = (t_contact / frame_dt).ceil() as usize;
            for j in 0..((4.0 * setup.stall_hold / frame_dt).ceil() as usize) {
                let tf = (first + j) as f64 * frame_dt;
                let obs = camera.observe(&hit, rng)?;
                if stall.update(tf, ctrl.distance(&obs)) {
                    stall_lag = Some(tf - t_contact);
                    break;
                }
            }
            return Ok(Approach {
                arrival_time: t_contact - t_start,
                contact_estimate,
                stall_lag,
                lateral_error: hit.x[LATERAL],
                state: hit,
            });
        }
        s = next;
    }
    Err(HarnessError::Trial(format!("no contact within {} s", setup.timeout)))
}

/// Runs the approach loop until `done` accepts a state (checked once per
/// frame) or the timeout passes; returns whether `done` fired. When the
/// target is no longer observable the body coasts.
pub fn approach_until(
    setup: &TouchSetup,
    start: PlantState,
    t_start: f64,
    units: &EmbodiedUnits,
    v_fwd: f64,
    rng: &mut ChaCha8Rng,
    mut done: impl FnMut(&PlantState) -> bool,
) -> Result<bool> {
    let camera = TargetCamera::new(setup);
    let p = setup.params();
    let frame_dt = setup.camera.frame_interval();
    let mut ctrl = ApproachController::new(setup.approach, units, t_start, t_start, [v_fwd, 0.0])?;
    let mut s = start;
    let frames = (setup.timeout / frame_dt).ceil() as usize;
    let mut blind = false;
    for i in 0..frames {
        let t = t_start + i as f64 * frame_dt;
        let input = if blind {
            [0.0; 3]
        } else {
            match camera.observe(&s, rng) {
                Ok(obs) => {
                    let cmd = ctrl.step(t, &obs)?;
                    [cmd.lateral, 0.0, cmd.axial]
                }
                Err(HarnessError::Trial(_)) => {
                    blind = true;
                    [0.0; 3]
                }
                Err(e) => return Err(e),
            }
        };
        s = advance_double_integrator(&s, input, &p, frame_dt)?;
        if done(&s) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// First `τ ∈ [0, h]` with `x + v·τ + ½a·τ² = target`, given that the
/// crossing happens within the step.
fn crossing_time(x: f64, v: f64, a: f64, target: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if x + v * mid + 0.5 * a * mid * mid >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Result of one touching trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchOutcome {
    pub estimate: EmbodiedEstimate,
    pub units: EmbodiedUnits,
    pub approach: Approach,
}

/// Oscillate, estimate, approach, touch.
pub fn run_touch(setup: &TouchSetup, rng: &mut ChaCha8Rng) -> Result<TouchOutcome> {
    if setup.unsafe_start() {
        return Err(HarnessError::Skipped(format!(
            "oscillation reaches {:.3} m of a {:.3} m start",
            setup.oscillation_reach(),
            setup.distance
        )));
    }
    let osc = oscillate(setup, rng)?;
    let estimate = osc.estimate()?;
    let units = estimate.to_embodied()?;
    let v_fwd = osc.forward_velocity(&estimate);
    let approach = approach(setup, osc.end_state, osc.window.1, &units, v_fwd, rng)?;
    Ok(TouchOutcome { estimate, units, approach })
}

pub const METRICS: &[&str] = &[
    "width_est",
    "width_true",
    "width_error_pct",
    "body_offset_est",
    "body_offset_true",
    "body_offset_error_pct",
    "arrival_time",
    "stall_lag",
    "lateral_error",
    "gram_min_eig",
    "residual_rms",
];

/// Metric row for the report, in [`METRICS`] order.
pub fn metrics(setup: &TouchSetup, out: &TouchOutcome) -> Vec<f64> {
    let width_true = setup.width / setup.b;
    let offset_true = setup.contact_offset / setup.b;
    let width_est = out.estimate.d_over_b;
    let offset_est = out.approach.contact_estimate;
    vec![
        width_est,
        width_true,
        100.0 * (width_est - width_true) / width_true,
        offset_est,
        offset_true,
        100.0 * (offset_est - offset_true) / offset_true,
        out.approach.arrival_time,
        out.approach.stall_lag.unwrap_or(f64::NAN),
        out.approach.lateral_error,
        out.estimate.gram_min_eig,
        out.estimate.residual_rms,
    ]
}

pub fn run_trial(cfg: &ScenarioConfig, cell: &CellParams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let setup = TouchSetup::from_config(cfg, cell)?;
    let out = run_touch(&setup, rng)?;
    Ok(metrics(&setup, &out))
}
