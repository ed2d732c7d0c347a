//! Scenario configuration. Every field has a default, so an empty file (or
//! none at all) runs the paper-scale experiment for the chosen scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::camera::CameraSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Touch,
    Clear,
    Jump,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Touch => "touch",
            ScenarioKind::Clear => "clear",
            ScenarioKind::Jump => "jump",
        }
    }

    /// Sweep axes the scenario understands.
    pub fn axes(self) -> &'static [Axis] {
        match self {
            ScenarioKind::Touch => &[Axis::Distance, Axis::Width, Axis::B, Axis::Res, Axis::Window],
            ScenarioKind::Clear => &[Axis::Opening, Axis::Distance, Axis::B],
            ScenarioKind::Jump => &[Axis::Gap, Axis::B, Axis::Res, Axis::Delta, Axis::Alpha, Axis::G, Axis::Window],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    Distance,
    Width,
    B,
    Opening,
    Gap,
    Res,
    Delta,
    Alpha,
    G,
    Window,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Distance => "distance",
            Axis::Width => "width",
            Axis::B => "b",
            Axis::Opening => "opening",
            Axis::Gap => "gap",
            Axis::Res => "res",
            Axis::Delta => "delta",
            Axis::Alpha => "alpha",
            Axis::G => "g",
            Axis::Window => "window",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub res_u: u32,
    pub res_v: u32,
    /// Vertical field of view, degrees.
    pub vfov: f64,
    pub fps: f64,
}

impl CameraConfig {
    pub fn spec(&self) -> Result<CameraSpec, HarnessError> {
        CameraSpec::new(self.res_u, self.res_v, self.vfov, self.fps).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Wide-angle 1536×864 camera (120° horizontal) at 30 fps.
fn touch_camera() -> CameraConfig {
    CameraConfig { res_u: 1536, res_v: 864, vfov: 88.46, fps: 30.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyConfig {
    /// Camera to the left and right body surfaces, metres.
    pub half_width_l: f64,
    pub half_width_r: f64,
    /// Camera to the front surface, metres.
    pub front_offset: f64,
    pub length: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self { half_width_l: 0.0955, half_width_r: 0.0955, front_offset: 0.15, length: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TouchConfig {
    pub b: f64,
    /// Initial distance from camera to target, metres.
    pub distance: f64,
    /// Target width, metres.
    pub width: f64,
    pub camera: CameraConfig,
    pub oscillation_period: f64,
    /// Open-loop oscillation amplitude, embodied units.
    pub oscillation_amplitude: f64,
    pub oscillation_duration: f64,
    /// Estimation window at the end of the oscillation, seconds.
    pub window: f64,
    /// Approach speed, embodied units per second.
    pub approach_speed: f64,
    pub zeta: f64,
    pub omega_n: f64,
    /// Time without progress before the visual stall detector fires.
    pub stall_hold: f64,
    /// Give up the approach after this long.
    pub approach_timeout: f64,
    /// Gaussian noise on each edge, pixels.
    pub noise_px: f64,
    /// Lateral offset of the robot from the target centre, metres.
    pub lateral_offset: f64,
    /// Clearance kept during the oscillation; cells closer than this skip.
    pub clearance: f64,
}

impl Default for TouchConfig {
    fn default() -> Self {
        Self {
            b: 1.0,
            distance: 1.5,
            width: 0.15,
            camera: touch_camera(),
            oscillation_period: 3.0,
            oscillation_amplitude: 0.25,
            oscillation_duration: 9.0,
            window: 3.0,
            approach_speed: 0.3,
            zeta: 1.0,
            omega_n: 2.0,
            stall_hold: 0.5,
            approach_timeout: 60.0,
            noise_px: 0.2,
            lateral_offset: 0.0,
            clearance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClearConfig {
    pub b: f64,
    /// Opening width, metres.
    pub opening: f64,
    /// Initial distance to the opening plane, metres.
    pub distance: f64,
    /// Lateral misalignment of the robot with the opening centre, metres.
    pub lateral_offset: f64,
    /// Side touches to measure the hull use this target and distance.
    pub touch_width: f64,
    pub touch_distance: f64,
    /// Drive through the opening when the decision says it fits.
    pub traverse: bool,
}

impl Default for ClearConfig {
    fn default() -> Self {
        Self {
            b: 1.0,
            opening: 0.25,
            distance: 1.5,
            lateral_offset: 0.03,
            touch_width: 0.15,
            touch_distance: 1.5,
            traverse: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpConfig {
    pub b: f64,
    /// Actuator rate, 1/s.
    pub alpha: f64,
    pub g: f64,
    /// Horizontal distance to the fixated line and the landing target, metres.
    pub gap: f64,
    pub camera: CameraConfig,
    /// Camera height above the fixated line when resting on the ground.
    pub camera_height: f64,
    /// Vertical travel available to the body, metres.
    pub stroke: f64,
    /// Lift-force ramp before take-off, input units per second.
    pub lift_ramp: f64,
    pub oscillation_frequency: f64,
    /// Estimation window length, seconds.
    pub window: f64,
    /// Residuals are scored from this many seconds into the window.
    pub fit_start: f64,
    pub basis_count: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Basis truncation length, seconds.
    pub basis_length: f64,
    /// Launch elevation, degrees.
    pub launch_angle: f64,
    /// Run-up duration, seconds.
    pub run_up: f64,
    /// Landing counts as success within this distance of the target.
    pub platform_half_width: f64,
    /// Fixed quantizer offset; random per trial when absent.
    pub delta: Option<f64>,
    /// Height-hold gains of the built-in metric controller.
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            b: 0.2,
            alpha: 10.0,
            g: 9.81,
            gap: 3.0,
            camera: CameraConfig { res_u: 200, res_v: 200, vfov: 90.0, fps: 60.0 },
            camera_height: 0.3,
            stroke: 0.5,
            lift_ramp: 100.0,
            oscillation_frequency: 1.0,
            window: 10.0,
            fit_start: 4.0,
            basis_count: 50,
            tau_min: 0.008,
            tau_max: 0.5,
            basis_length: 4.0,
            launch_angle: 20.0,
            run_up: 0.25,
            platform_half_width: 0.25,
            delta: None,
            kp: 150.0,
            ki: 20.0,
            kd: 15.5,
        }
    }
}

/// Values to sweep, one list per axis. Absent axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub distance: Option<Vec<f64>>,
    pub width: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub opening: Option<Vec<f64>>,
    pub gap: Option<Vec<f64>>,
    pub res: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub g: Option<Vec<f64>>,
    pub window: Option<Vec<f64>>,
}

impl SweepAxes {
    pub fn get(&self, axis: Axis) -> Option<&Vec<f64>> {
        match axis {
            Axis::Distance => self.distance.as_ref(),
            Axis::Width => self.width.as_ref(),
            Axis::B => self.b.as_ref(),
            Axis::Opening => self.opening.as_ref(),
            Axis::Gap => self.gap.as_ref(),
            Axis::Res => self.res.as_ref(),
            Axis::Delta => self.delta.as_ref(),
            Axis::Alpha => self.alpha.as_ref(),
            Axis::G => self.g.as_ref(),
            Axis::Window => self.window.as_ref(),
        }
    }

    pub fn set(&mut self, axis: Axis, values: Vec<f64>) {
        let slot = match axis {
            Axis::Distance => &mut self.distance,
            Axis::Width => &mut self.width,
            Axis::B => &mut self.b,
            Axis::Opening => &mut self.opening,
            Axis::Gap => &mut self.gap,
            Axis::Res => &mut self.res,
            Axis::Delta => &mut self.delta,
            Axis::Alpha => &mut self.alpha,
            Axis::G => &mut self.g,
            Axis::Window => &mut self.window,
        };
        *slot = Some(values);
    }
}

/// `count` evenly spaced quantizer offsets covering [−0.5, 0.5].
pub fn delta_envelope(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| -0.5 + i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub trials: usize,
    pub output: PathBuf,
    pub quantize: bool,
    /// Worker threads; 0 uses every core, 1 runs serially.
    pub parallel: usize,
    /// Control period, seconds.
    pub dt: f64,
    pub body: BodyConfig,
    pub touch: TouchConfig,
    pub clear: ClearConfig,
    pub jump: JumpConfig,
    pub sweep: SweepAxes,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Touch,
            seed: 1,
            trials: 5,
            output: PathBuf::from("out"),
            quantize: true,
            parallel: 0,
            dt: 0.001,
            body: BodyConfig::default(),
            touch: TouchConfig::default(),
            clear: ClearConfig::default(),
            jump: JumpConfig::default(),
            sweep: SweepAxes::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt = {}", self.dt));
        }
        let allowed = self.scenario.axes();
        for axis in ALL_AXES {
            if let Some(values) = self.sweep.get(axis) {
                if values.is_empty() {
                    return bad(format!("sweep axis `{}` is empty", axis.name()));
                }
                if !allowed.contains(&axis) {
                    return bad(format!("`{}` cannot be swept in the {} scenario", axis.name(), self.scenario.name()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad(format!("sweep axis `{}` has a non-finite value", axis.name()));
                }
            }
        }
        let positive =
            |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { bad(format!("{name} = {v}")) };
        let t = &self.touch;
        positive("touch.b", t.b)?;
        positive("touch.distance", t.distance)?;
        positive("touch.width", t.width)?;
        positive("touch.window", t.window)?;
        positive("touch.approach_speed", t.approach_speed)?;
        positive("touch.oscillation_period", t.oscillation_period)?;
        if t.window > t.oscillation_duration {
            return bad("touch.window exceeds the oscillation".into());
        }
        t.camera.spec()?;
        let c = &self.clear;
        positive("clear.b", c.b)?;
        positive("clear.opening", c.opening)?;
        positive("clear.distance", c.distance)?;
        let j = &self.jump;
        positive("jump.b", j.b)?;
        positive("jump.alpha", j.alpha)?;
        positive("jump.g", j.g)?;
        positive("jump.gap", j.gap)?;
        positive("jump.stroke", j.stroke)?;
        positive("jump.window", j.window)?;
        positive("jump.run_up", j.run_up)?;
        if j.fit_start >= j.window {
            return bad("jump.fit_start must fall inside the window".into());
        }
        if !(j.launch_angle > 0.0 && j.launch_angle < 90.0) {
            return bad(format!("jump.launch_angle = {}", j.launch_angle));
        }
        if let Some(d) = j.delta {
            if !(-0.5..=0.5).contains(&d) {
                return bad(format!("jump.delta = {d}"));
            }
        }
        j.camera.spec()?;
        if self.body.half_width_l < 0.0 || self.body.half_width_r < 0.0 || self.body.front_offset < 0.0 {
            return bad("body offsets must be nonnegative".into());
        }
        Ok(())
    }
}

pub const ALL_AXES: [Axis; 10] = [
    Axis::Distance,
    Axis::Width,
    Axis::B,
    Axis::Opening,
    Axis::Gap,
    Axis::Res,
    Axis::Delta,
    Axis::Alpha,
    Axis::G,
    Axis::Window,
];
