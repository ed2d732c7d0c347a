//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are fixed here and nowhere else.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{jump_config, max_diff, noiseless_touch, one_hot_window, true_estimate, RandomQp};
use evr::control::{plan_jump_control, solve_launch, terminal_operators};
use evr::estimators::{
    estimate_biased, estimate_impulse_response, estimate_unbiased, EstimatorError, ToEmbodied, WindowData,
};
use evr::harness::jump::{launch, measure, JumpSetup};
use evr::harness::touch::{oscillate, run_touch};
use evr::harness::{
    delta_envelope, emit, sweep, trial_seed, Axis, CellParams, RunReport, ScenarioConfig, ScenarioKind,
};
use evr::linalg::solve_qp;
use evr::signals::{HeldDoubleIntegral, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOISELESS_REL: f64 = 1e-4;
const NOISELESS_RUNTIME: Duration = Duration::from_secs(1);
const SCALING_REL: f64 = 1e-6;
const MC_TRIALS: usize = 1000;
const MC_NOISE_PX: f64 = 0.2;
const MC_SE_BOUND: f64 = 3.0;
const MC_RUNTIME: Duration = Duration::from_secs(60);
const RES_SLOPE: (f64, f64) = (-1.3, -0.7);
const RES_RUNTIME: Duration = Duration::from_secs(300);
const LANDING_REL: f64 = 0.10;
const GRAVITY_NOISELESS_REL: f64 = 1e-3;
const GRAVITY_QUANTIZED_REL: f64 = 1e-2;
const ARRIVAL_RATIO_REL: f64 = 0.05;
const QP_AGREEMENT: f64 = 1e-6;
const ONE_HOT_STRAY: f64 = 1e-6;
const LAUNCH_SPEED: (f64, f64) = (6.767, 1e-3);
const FLIGHT_TIME: (f64, f64) = (0.4718, 5e-4);
const PLAN_CONSTRAINT: f64 = 1e-6;
const LAUNCH_TRACKING_REL: f64 = 0.02;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn noiseless_recovery() -> Check {
    let start = Instant::now();
    let est = oscillate(&noiseless_touch(1.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap().estimate().unwrap();
    let elapsed = start.elapsed();
    let err = rel(est.d_over_b, 0.15);
    ensure(
        err < NOISELESS_REL && elapsed < NOISELESS_RUNTIME,
        format!("d/b = {:.9}, rel error {err:.2e}, {elapsed:.2?}", est.d_over_b),
    )
}

fn gain_scaling() -> Check {
    let base = oscillate(&noiseless_touch(1.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let d1 = base.estimate().unwrap().d_over_b;
    let mut worst: f64 = 0.0;
    for (b, factor) in [(0.5, 2.0), (2.0, 0.5)] {
        let osc = oscillate(&noiseless_touch(b), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        if osc.u_fwd != base.u_fwd {
            return Err(format!("inputs differ at b = {b}"));
        }
        worst = worst.max(rel(osc.estimate().unwrap().d_over_b, factor * d1));
    }
    ensure(worst < SCALING_REL, format!("worst rel deviation from 2x / 0.5x: {worst:.2e}"))
}

fn pulse_window(u: &TimeSeries) -> WindowData {
    let s2 = HeldDoubleIntegral::new(u).unwrap();
    let phi = TimeSeries::from_fn(0.0, 1.0 / 30.0, 91, |t| (1.5 + s2.at(t).unwrap()) / 0.15).unwrap();
    WindowData::new(phi, u.clone(), (0.0, 3.0)).unwrap()
}

fn uniqueness_boundary() -> Check {
    let zero = pulse_window(&TimeSeries::from_fn(0.0, 1e-3, 3001, |_| 0.0).unwrap());
    if !matches!(estimate_unbiased(&zero), Err(EstimatorError::SingularGram)) {
        return Err("zero input did not raise SingularGram".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut starts: Vec<usize> = vec![0, 2990];
    starts.extend((0..18).map(|_| rng.gen_range(0..2990)));
    for &k in &starts {
        let amp = rng.gen_range(-2.0..2.0);
        let u = TimeSeries::from_fn(0.0, 1e-3, 3001, |t| {
            let i = (t * 1e3).round() as usize;
            if (k..k + 10).contains(&i) {
                amp
            } else {
                0.0
            }
        })
        .unwrap();
        let w = pulse_window(&u);
        if let Err(e) = estimate_unbiased(&w).and(estimate_biased(&w)) {
            return Err(format!("pulse at step {k}: {e}"));
        }
    }
    Ok(format!("zero input rejected, {} single 10 ms pulses identified", starts.len()))
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn unbiasedness() -> Check {
    let start = Instant::now();
    let mut setup = noiseless_touch(1.0);
    setup.noise_px = MC_NOISE_PX;
    let (mut unbiased, mut biased) = (Vec::new(), Vec::new());
    for trial in 0..MC_TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(4, 0, trial));
        let osc = oscillate(&setup, &mut rng).unwrap();
        let w = WindowData::new(osc.phi.clone(), osc.u_fwd.map(|v| -v), osc.window).unwrap();
        unbiased.push(estimate_unbiased(&w).unwrap().b_over_d);
        biased.push(estimate_biased(&w).unwrap().b_over_d);
    }
    let elapsed = start.elapsed();
    let truth = 1.0 / 0.15;
    let (mu, su) = mean_and_se(&unbiased);
    let (mb, sb) = mean_and_se(&biased);
    let (zu, zb) = ((mu - truth) / su, (mb - truth) / sb);
    ensure(
        zu.abs() < MC_SE_BOUND && zb.abs() > MC_SE_BOUND && elapsed < MC_RUNTIME,
        format!("unbiased offset {zu:+.2} SE, biased offset {zb:+.2} SE, {elapsed:.2?}"),
    )
}

/// Largest |metric| over the ok records accepted by `filter`.
fn worst(report: &RunReport, metric: &str, filter: impl Fn(&evr::harness::TrialRecord) -> bool) -> f64 {
    report.metric_values(metric, filter).iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn resolution_scaling() -> Check {
    let start = Instant::now();
    let mut cfg = jump_config();
    let res = [50.0, 100.0, 200.0, 400.0];
    cfg.sweep.set(Axis::Res, res.to_vec());
    cfg.sweep.set(Axis::Delta, delta_envelope(26));
    let report = sweep(&cfg).unwrap();
    if report.failures() > 0 {
        return Err(format!("{} failed trials", report.failures()));
    }
    let errs: Vec<f64> =
        res.iter().map(|&r| worst(&report, "distance_error_pct", |rec| rec.params.get(Axis::Res) == Some(r))).collect();
    let xs: Vec<f64> = res.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let elapsed = start.elapsed();
    ensure(
        slope >= RES_SLOPE.0 && slope <= RES_SLOPE.1 && elapsed < RES_RUNTIME,
        format!("worst-case error % {errs:.3?}, slope {slope:.3}, {elapsed:.2?}"),
    )
}

fn gap_envelope() -> RunReport {
    let mut cfg = jump_config();
    cfg.sweep.set(Axis::Gap, vec![1.0, 2.0, 3.0, 4.0]);
    cfg.sweep.set(Axis::Delta, delta_envelope(26));
    sweep(&cfg).unwrap()
}

fn jump_end_to_end(report: &RunReport) -> Check {
    if report.failures() > 0 {
        return Err(format!("{} failed trials", report.failures()));
    }
    let per_gap: Vec<f64> = [1.0, 2.0, 3.0, 4.0]
        .iter()
        .map(|&g| worst(report, "range_error_pct", |r| r.params.get(Axis::Gap) == Some(g)))
        .collect();
    let max = per_gap.iter().fold(0.0_f64, |a, &v| a.max(v));
    ensure(
        max < 100.0 * LANDING_REL && report.records.len() == 104,
        format!("worst landing error % per gap {per_gap:.2?} over 26 offsets"),
    )
}

fn gravity_estimate(report: &RunReport) -> Check {
    let mut cfg = jump_config();
    cfg.quantize = false;
    let setup = JumpSetup::from_config(&cfg, &CellParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let m = measure(&setup).unwrap();
    let est = evr::harness::jump::identify(&setup, &m).unwrap();
    let g = est.to_embodied().unwrap().gravity.unwrap();
    let noiseless = rel(g, setup.params.g_b / setup.params.b);
    let quantized = worst(report, "gravity_error_pct", |r| r.params.get(Axis::Gap) == Some(3.0)) / 100.0;
    ensure(
        noiseless < GRAVITY_NOISELESS_REL && quantized < GRAVITY_QUANTIZED_REL,
        format!("noiseless rel error {noiseless:.2e}, quantized worst {quantized:.2e} over 26 offsets"),
    )
}

fn approach_timing() -> Check {
    let cfg = ScenarioConfig::default();
    let arrival = |b: f64| {
        let cell = CellParams { values: vec![(Axis::B, b)] };
        let setup = evr::harness::touch::TouchSetup::from_config(&cfg, &cell).unwrap();
        let times: Vec<f64> = (0..5)
            .map(|t| {
                run_touch(&setup, &mut ChaCha8Rng::seed_from_u64(trial_seed(8, 0, t))).unwrap().approach.arrival_time
            })
            .collect();
        times.iter().sum::<f64>() / times.len() as f64
    };
    let (slow, unit, fast) = (arrival(0.5), arrival(1.0), arrival(2.0));
    let (r_slow, r_fast) = (slow / unit, fast / unit);
    ensure(
        rel(r_slow, 2.0) < ARRIVAL_RATIO_REL && rel(r_fast, 0.5) < ARRIVAL_RATIO_REL,
        format!("arrival {slow:.3} / {unit:.3} / {fast:.3} s, ratios {r_slow:.4} and {r_fast:.4}"),
    )
}

fn clearing_decisions() -> Check {
    let mut cfg = ScenarioConfig { scenario: ScenarioKind::Clear, quantize: false, trials: 1, ..Default::default() };
    cfg.touch.noise_px = 0.0;
    cfg.sweep.set(Axis::Opening, vec![0.125, 0.25, 0.375]);
    cfg.sweep.set(Axis::B, vec![0.5, 1.0, 2.0]);
    let report = sweep(&cfg).unwrap();
    let correct = report.metric_values("correct", |_| true);
    let collisions = report.metric_values("collided", |_| true).iter().sum::<f64>();
    let agree = correct.iter().filter(|&&c| c == 1.0).count();
    ensure(
        correct.len() == 9 && agree == 9 && collisions == 0.0,
        format!("{agree}/{} decisions agree with truth, {collisions} collisions", correct.len()),
    )
}

fn qp_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_diff: f64 = 0.0;
    for case in 0..200 {
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(0..=n.min(3));
        let qp = RandomQp::draw(&mut rng, n, m);
        let x = solve_qp(&qp.problem()).map_err(|e| format!("case {case}: {e}"))?.x;
        worst_diff = worst_diff.max(max_diff(&x, &qp.exhaustive())).max(max_diff(&x, &qp.projected_gradient(1e-10)));
    }
    let mut stray: f64 = 0.0;
    for (index, n_basis) in [(0, 12), (5, 12), (11, 12), (20, 50)] {
        let (w, basis) = one_hot_window(index, 2.5, n_basis);
        let c = estimate_impulse_response(&w, &basis, false, 4.0).map_err(|e| e.to_string())?.c.remove(0);
        stray = stray.max(c.iter().enumerate().filter(|(i, _)| *i != index).map(|(_, v)| v.abs()).sum());
    }
    ensure(
        worst_diff < QP_AGREEMENT && stray < ONE_HOT_STRAY,
        format!("200 QPs, worst oracle gap {worst_diff:.2e}; one-hot stray mass {stray:.2e}"),
    )
}

fn launch_math() -> Check {
    let (v, t_f) = solve_launch(3.0, 9.81, 20f64.to_radians()).unwrap();
    if (v - LAUNCH_SPEED.0).abs() > LAUNCH_SPEED.1 || (t_f - FLIGHT_TIME.0).abs() > FLIGHT_TIME.1 {
        return Err(format!("v_l = {v:.5}, t_f = {t_f:.5}"));
    }
    let mut cfg = jump_config();
    cfg.quantize = false;
    let mut worst_constraint: f64 = 0.0;
    let mut worst_speed: f64 = 0.0;
    for gap in [1.0, 2.0, 3.0, 4.0] {
        let cell = CellParams { values: vec![(Axis::Gap, gap)] };
        let setup = JumpSetup::from_config(&cfg, &cell, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let m = measure(&setup).unwrap();
        let estimate = true_estimate(&setup, gap);
        let out = launch(&setup, &m, &estimate).map_err(|e| e.to_string())?;
        let units = estimate.to_embodied().unwrap();
        let plan = plan_jump_control(out.plan.theta_l, out.plan.v_l, out.plan.t_f, out.plan.d_m, &units, setup.run_up)
            .map_err(|e| e.to_string())?;
        let u = plan.u_j.values();
        let n = u.len() - 1;
        let (vel, pos) = terminal_operators(units.kernel.as_ref().unwrap(), n);
        let dot = |row: &[f64]| row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        let violation = [
            (dot(&vel) - plan.v_l).abs(),
            (dot(&pos) - plan.d_m).abs(),
            u[0].abs(),
            u[n].abs(),
            u.iter().fold(0.0_f64, |a, &x| a.max(-x)),
        ];
        worst_constraint = violation.iter().fold(worst_constraint, |a, &v| a.max(v));
        worst_speed = worst_speed.max(rel(out.launch_speed, out.plan.v_l * setup.params.b));
    }
    ensure(
        worst_constraint < PLAN_CONSTRAINT && worst_speed < LAUNCH_TRACKING_REL,
        format!(
            "v_l = {v:.4}, t_f = {t_f:.4}; plan violation {worst_constraint:.2e}; launch speed error {:.3}%",
            100.0 * worst_speed
        ),
    )
}

fn determinism() -> Check {
    let mut cfg = ScenarioConfig::load(std::path::Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/touch_table.toml"
    )))
    .unwrap();
    cfg.seed = 12;
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for (i, parallel) in [1, 4, 0].into_iter().enumerate() {
        cfg.parallel = parallel;
        let out = dir.path().join(i.to_string());
        emit(&sweep(&cfg).unwrap(), &out).unwrap();
        tables.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    let ok = tables.windows(2).all(|w| w[0] == w[1]);
    ensure(ok, format!("serial, 4-thread and default-pool runs: {} bytes each, identical = {ok}", tables[0].len()))
}

fn main() -> ExitCode {
    let gaps = std::cell::OnceCell::new();
    let gaps = || gaps.get_or_init(gap_envelope);
    let criteria: Vec<Criterion> = vec![
        ("noiseless touch recovery", Box::new(noiseless_recovery)),
        ("b-scaling law", Box::new(gain_scaling)),
        ("uniqueness boundary", Box::new(uniqueness_boundary)),
        ("unbiasedness", Box::new(unbiasedness)),
        ("resolution scaling", Box::new(resolution_scaling)),
        ("jump end to end", Box::new(|| jump_end_to_end(gaps()))),
        ("gravity estimate", Box::new(|| gravity_estimate(gaps()))),
        ("approach timing", Box::new(approach_timing)),
        ("clearing decisions", Box::new(clearing_decisions)),
        ("QP solver oracle", Box::new(qp_oracle)),
        ("launch math", Box::new(launch_math)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let (verdict, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {name:<26} {verdict}  {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
