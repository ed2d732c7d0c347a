//! Clearing an opening: measure the body's width with two side touches,
//! measure the opening the same way a touch target is measured, decide
//! whether the body fits, and drive through if it does.

use rand_chacha::ChaCha8Rng;

use super::config::{Axis, ScenarioConfig};
use super::sweep::CellParams;
use super::touch::{approach_until, oscillate, run_touch, TargetCamera, TouchSetup};
use super::Result;
use crate::control::{clearing_decision, BodyHull, ClearingDecision, Side};
use crate::estimators::ToEmbodied;

#[derive(Debug, Clone, PartialEq)]
pub struct ClearSetup {
    /// Side touches, one per body side.
    pub left_touch: TouchSetup,
    pub right_touch: TouchSetup,
    /// The opening, measured like a touch target of its width.
    pub opening: TouchSetup,
    pub half_width_l: f64,
    pub half_width_r: f64,
    pub front_offset: f64,
    pub body_length: f64,
    pub traverse: bool,
}

impl ClearSetup {
    pub fn from_config(cfg: &ScenarioConfig, cell: &CellParams) -> Result<Self> {
        let c = &cfg.clear;
        let b = cell.get(Axis::B).unwrap_or(c.b);
        let mut base = TouchSetup::from_config(cfg, &CellParams::default())?;
        base.b = b;
        base.lateral_offset = 0.0;
        let side = |offset: f64| TouchSetup {
            distance: c.touch_distance,
            width: c.touch_width,
            contact_offset: offset,
            ..base.clone()
        };
        let opening = TouchSetup {
            distance: cell.get(Axis::Distance).unwrap_or(c.distance),
            width: cell.get(Axis::Opening).unwrap_or(c.opening),
            lateral_offset: c.lateral_offset,
            contact_offset: cfg.body.front_offset,
            ..base.clone()
        };
        Ok(Self {
            left_touch: side(cfg.body.half_width_l),
            right_touch: side(cfg.body.half_width_r),
            opening,
            half_width_l: cfg.body.half_width_l,
            half_width_r: cfg.body.half_width_r,
            front_offset: cfg.body.front_offset,
            body_length: cfg.body.length,
            traverse: c.traverse,
        })
    }

    pub fn fits_truth(&self) -> bool {
        self.half_width_l + self.half_width_r < self.opening.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearOutcome {
    pub hull: BodyHull,
    pub opening_est: f64,
    pub decision: ClearingDecision,
    pub traversed: bool,
    pub collided: bool,
    /// Smallest metric gap between body and frame while passing.
    pub min_clearance: f64,
}

pub fn run_clear(setup: &ClearSetup, rng: &mut ChaCha8Rng) -> Result<ClearOutcome> {
    let mut hull = BodyHull::default();
    for (side, touch) in [(Side::Left, &setup.left_touch), (Side::Right, &setup.right_touch)] {
        let out = run_touch(touch, rng)?;
        hull.record_touch(side, out.approach.contact_estimate)?;
    }

    let o = &setup.opening;
    let osc = oscillate(o, rng)?;
    let estimate = osc.estimate()?;
    let units = estimate.to_embodied()?;
    let depth = osc.final_distance(&estimate);
    let (pl, pr) = TargetCamera::new(o).edges(&osc.end_state, rng)?;
    let xl = [pl * depth, 0.0, depth];
    let xr = [pr * depth, 0.0, depth];
    let decision = clearing_decision(&hull, xl, xr)?;
    let opening_est = (pr - pl) * depth;

    let mut outcome =
        ClearOutcome { hull, opening_est, decision, traversed: false, collided: false, min_clearance: f64::NAN };
    if !(decision.fits && setup.traverse) {
        return Ok(outcome);
    }

    // Centre on the opening while driving at it, then coast through once the
    // frame leaves the view. The body passes the plane while the camera
    // depth goes from the front offset to the front offset minus its length.
    let v_fwd = osc.forward_velocity(&estimate);
    let half = o.width / 2.0;
    let through_at = o.distance - (setup.front_offset - setup.body_length);
    let plane_at = o.distance - setup.front_offset;
    let mut min_clearance = f64::INFINITY;
    let passed = approach_until(o, osc.end_state, osc.window.1, &units, v_fwd, rng, |s| {
        if s.x[2] >= plane_at {
            let left = s.x[0] - setup.half_width_l + half;
            let right = half - (s.x[0] + setup.half_width_r);
            min_clearance = min_clearance.min(left.min(right));
        }
        s.x[2] >= through_at
    })?;
    outcome.traversed = passed;
    outcome.min_clearance = min_clearance;
    outcome.collided = min_clearance <= 0.0;
    Ok(outcome)
}

pub const METRICS: &[&str] = &[
    "body_width_est",
    "body_width_true",
    "body_width_error_pct",
    "opening_est",
    "opening_true",
    "opening_error_pct",
    "fits_est",
    "fits_true",
    "correct",
    "margin_est",
    "traversed",
    "collided",
    "min_clearance",
];

pub fn metrics(setup: &ClearSetup, out: &ClearOutcome) -> Vec<f64> {
    let b = setup.opening.b;
    let body_true = (setup.half_width_l + setup.half_width_r) / b;
    let body_est = out.hull.width().unwrap_or(f64::NAN);
    let opening_true = setup.opening.width / b;
    let flag = |v: bool| if v { 1.0 } else { 0.0 };
    vec![
        body_est,
        body_true,
        100.0 * (body_est - body_true) / body_true,
        out.opening_est,
        opening_true,
        100.0 * (out.opening_est - opening_true) / opening_true,
        flag(out.decision.fits),
        flag(setup.fits_truth()),
        flag(out.decision.fits == setup.fits_truth()),
        out.decision.margin,
        flag(out.traversed),
        flag(out.collided),
        out.min_clearance,
    ]
}

pub fn run_trial(cfg: &ScenarioConfig, cell: &CellParams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let setup = ClearSetup::from_config(cfg, cell)?;
    let out = run_clear(&setup, rng)?;
    Ok(metrics(&setup, &out))
}
