//! Pinhole camera with identity intrinsics. Everything outside [`quantize`]
//! works in normalized image coordinates (`x/z`, `y/z`); pixels only appear
//! when modelling the sensor grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("feature outside the field of view")]
    OutOfView,
    #[error("target spans {width_px:.2} px, below one pixel")]
    DegenerateTarget { width_px: f64 },
    #[error("invalid camera specification: {0}")]
    BadSpec(String),
}

pub type Result<T> = std::result::Result<T, CameraError>;

/// Targets narrower than this many pixels trigger a warning.
pub const NARROW_TARGET_PX: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub res_u: u32,
    pub res_v: u32,
    /// Vertical field of view, degrees.
    pub vfov: f64,
    pub fps: f64,
}

impl CameraSpec {
    pub fn new(res_u: u32, res_v: u32, vfov: f64, fps: f64) -> Result<Self> {
        let cam = Self { res_u, res_v, vfov, fps };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.res_u < 2 || self.res_v < 2 {
            return Err(CameraError::BadSpec(format!("resolution {}x{}", self.res_u, self.res_v)));
        }
        if !(self.vfov > 0.0 && self.vfov < 180.0) {
            return Err(CameraError::BadSpec(format!("vertical field of view {}", self.vfov)));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(CameraError::BadSpec(format!("frame rate {}", self.fps)));
        }
        Ok(())
    }

    /// Focal length in pixels (square pixels).
    pub fn focal_px(&self) -> f64 {
        (self.res_v as f64 / 2.0) / (self.vfov.to_radians() / 2.0).tan()
    }

    /// Largest visible normalized coordinate along an axis.
    pub fn half_extent(&self, axis: ImageAxis) -> f64 {
        (self.resolution(axis) as f64 / 2.0) / self.focal_px()
    }

    fn resolution(&self, axis: ImageAxis) -> u32 {
        match axis {
            ImageAxis::Horizontal => self.res_u,
            ImageAxis::Vertical => self.res_v,
        }
    }

    pub fn to_pixels(&self, p: f64, axis: ImageAxis) -> f64 {
        p * self.focal_px() + self.resolution(axis) as f64 / 2.0
    }

    pub fn from_pixels(&self, px: f64, axis: ImageAxis) -> f64 {
        (px - self.resolution(axis) as f64 / 2.0) / self.focal_px()
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.fps
    }

    fn visible(&self, p: f64, axis: ImageAxis) -> bool {
        p.abs() <= self.half_extent(axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageAxis {
    Horizontal,
    Vertical,
}

/// Offset of the pixel grid relative to the scene, shared by every edge in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerState {
    delta: f64,
    enabled: bool,
}

impl QuantizerState {
    pub fn new(delta: f64, enabled: bool) -> Result<Self> {
        if !(delta.abs() <= 0.5) {
            return Err(CameraError::BadSpec(format!("quantizer offset {delta} outside [-0.5, 0.5]")));
        }
        Ok(Self { delta, enabled })
    }

    pub fn disabled() -> Self {
        Self { delta: 0.0, enabled: false }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }
}

/// Result of snapping a coordinate to the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub value: f64,
    /// The pixel coordinate fell outside the sensor and was clamped.
    pub saturated: bool,
}

pub fn project_point(x: [f64; 3]) -> Result<[f64; 2]> {
    if !(x[2] > 0.0) {
        return Err(CameraError::BehindCamera(x[2]));
    }
    Ok([x[0] / x[2], x[1] / x[2]])
}

/// Applies `round(p_px + Δ) − Δ` on the pixel grid.
pub fn quantize(p: f64, cam: &CameraSpec, q: QuantizerState, axis: ImageAxis) -> Quantized {
    quantize_noisy(p, cam, q, axis, 0.0)
}

/// As [`quantize`], with a pixel-space perturbation added before rounding.
pub fn quantize_noisy(p: f64, cam: &CameraSpec, q: QuantizerState, axis: ImageAxis, noise_px: f64) -> Quantized {
    if !q.enabled && noise_px == 0.0 {
        return Quantized { value: p, saturated: false };
    }
    let px = cam.to_pixels(p, axis) + noise_px;
    let snapped = if q.enabled { (px + q.delta).round() - q.delta } else { px };
    let limit = cam.resolution(axis) as f64;
    let clamped = snapped.clamp(0.0, limit);
    Quantized { value: cam.from_pixels(clamped, axis), saturated: clamped != snapped }
}

/// `Φ = Z / d` from the image width of a flat, fronto-parallel target of
/// width `d` centred on the optical axis at depth `z`.
pub fn phi_target_width(z: f64, d: f64, cam: &CameraSpec, q: QuantizerState) -> Result<f64> {
    phi_target_width_at(0.0, z, d, cam, q, [0.0, 0.0])
}

/// Target centred at lateral offset `x_center`; `edge_noise_px` perturbs the
/// left and right edge before quantization.
pub fn phi_target_width_at(
    x_center: f64,
    z: f64,
    d: f64,
    cam: &CameraSpec,
    q: QuantizerState,
    edge_noise_px: [f64; 2],
) -> Result<f64> {
    if !(d > 0.0) {
        return Err(CameraError::DegenerateTarget { width_px: 0.0 });
    }
    let [pl, _] = project_point([x_center - d / 2.0, 0.0, z])?;
    let [pr, _] = project_point([x_center + d / 2.0, 0.0, z])?;
    if !cam.visible(pl, ImageAxis::Horizontal) || !cam.visible(pr, ImageAxis::Horizontal) {
        return Err(CameraError::OutOfView);
    }
    let true_px = (pr - pl) * cam.focal_px();
    if true_px < 1.0 {
        return Err(CameraError::DegenerateTarget { width_px: true_px });
    }
    if true_px < NARROW_TARGET_PX {
        log::warn!("target spans only {true_px:.2} px; width estimates become unreliable");
    }
    let ql = quantize_noisy(pl, cam, q, ImageAxis::Horizontal, edge_noise_px[0]);
    let qr = quantize_noisy(pr, cam, q, ImageAxis::Horizontal, edge_noise_px[1]);
    let width = qr.value - ql.value;
    if width * cam.focal_px() < 0.5 {
        return Err(CameraError::DegenerateTarget { width_px: width * cam.focal_px() });
    }
    Ok(1.0 / width)
}

/// `Φ = X₂ / X₃`: normalized image height of a fixated horizontal line.
pub fn phi_line_height(x2: f64, x3: f64, cam: &CameraSpec, q: QuantizerState) -> Result<f64> {
    phi_line_height_noisy(x2, x3, cam, q, 0.0)
}

pub fn phi_line_height_noisy(x2: f64, x3: f64, cam: &CameraSpec, q: QuantizerState, noise_px: f64) -> Result<f64> {
    let [_, p] = project_point([0.0, x2, x3])?;
    if !cam.visible(p, ImageAxis::Vertical) {
        return Err(CameraError::OutOfView);
    }
    Ok(quantize_noisy(p, cam, q, ImageAxis::Vertical, noise_px).value)
}

/// Normalized horizontal coordinates of the two inner edges of an opening.
pub fn phi_opening_edges(xl: [f64; 3], xr: [f64; 3], cam: &CameraSpec, q: QuantizerState) -> Result<(f64, f64)> {
    let [pl, _] = project_point(xl)?;
    let [pr, _] = project_point(xr)?;
    if !cam.visible(pl, ImageAxis::Horizontal) || !cam.visible(pr, ImageAxis::Horizontal) {
        return Err(CameraError::OutOfView);
    }
    let ql = quantize(pl, cam, q, ImageAxis::Horizontal);
    let qr = quantize(pr, cam, q, ImageAxis::Horizontal);
    Ok((ql.value, qr.value))
}
