//! Cartesian sweeps with per-trial seeds. Each trial's randomness depends
//! only on (seed, cell, trial), so serial and parallel runs agree exactly
//! and any single trial can be replayed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Axis, ScenarioConfig, ScenarioKind};
use super::report::RunReport;
use super::{clear, jump, touch, HarnessError, Result};

/// Parameter overrides for one sweep cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellParams {
    pub values: Vec<(Axis, f64)>,
}

impl CellParams {
    pub fn get(&self, axis: Axis) -> Option<f64> {
        self.values.iter().find(|(a, _)| *a == axis).map(|(_, v)| *v)
    }
}

/// Swept axes, in the scenario's canonical order.
pub fn swept_axes(cfg: &ScenarioConfig) -> Vec<Axis> {
    cfg.scenario.axes().iter().copied().filter(|a| cfg.sweep.get(*a).is_some()).collect()
}

/// Cartesian product of the sweep axes; the last axis varies fastest.
pub fn cells(cfg: &ScenarioConfig) -> Vec<CellParams> {
    let axes = swept_axes(cfg);
    let mut out = vec![CellParams::default()];
    for axis in axes {
        let values = cfg.sweep.get(axis).expect("swept axis");
        out = out
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |&v| {
                    let mut next = cell.clone();
                    next.values.push((axis, v));
                    next
                })
            })
            .collect();
    }
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ cell as u64);
    splitmix64(h ^ (trial as u64).rotate_left(32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Skipped(String),
    Failed(String),
}

impl TrialStatus {
    pub fn label(&self) -> String {
        match self {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Skipped(why) => format!("skipped: {why}"),
            TrialStatus::Failed(why) => format!("failed: {why}"),
        }
    }
}

/// One trial: where it sits in the sweep, how to replay it, what it measured.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub params: CellParams,
    pub status: TrialStatus,
    /// Scenario metrics in the scenario's column order; NaN when not ok.
    pub metrics: Vec<f64>,
}

pub fn metric_names(kind: ScenarioKind) -> &'static [&'static str] {
    match kind {
        ScenarioKind::Touch => touch::METRICS,
        ScenarioKind::Clear => clear::METRICS,
        ScenarioKind::Jump => jump::METRICS,
    }
}

fn execute(cfg: &ScenarioConfig, cell_index: usize, params: &CellParams, trial: usize) -> TrialRecord {
    let seed = trial_seed(cfg.seed, cell_index, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = match cfg.scenario {
        ScenarioKind::Touch => touch::run_trial(cfg, params, &mut rng),
        ScenarioKind::Clear => clear::run_trial(cfg, params, &mut rng),
        ScenarioKind::Jump => jump::run_trial(cfg, params, &mut rng),
    };
    let width = metric_names(cfg.scenario).len();
    let (status, metrics) = match result {
        Ok(m) => (TrialStatus::Ok, m),
        Err(HarnessError::Skipped(why)) => (TrialStatus::Skipped(why), vec![f64::NAN; width]),
        Err(e) => (TrialStatus::Failed(e.to_string()), vec![f64::NAN; width]),
    };
    if let TrialStatus::Failed(why) = &status {
        log::warn!("cell {cell_index} trial {trial}: {why}");
    }
    TrialRecord { cell: cell_index, trial, seed, params: params.clone(), status, metrics }
}

/// Replays a single trial of the sweep.
pub fn run_trial(cfg: &ScenarioConfig, cell: usize, trial: usize) -> Result<TrialRecord> {
    cfg.validate()?;
    let all = cells(cfg);
    let params =
        all.get(cell).ok_or_else(|| HarnessError::Config(format!("cell {cell} out of range ({} cells)", all.len())))?;
    if trial >= cfg.trials {
        return Err(HarnessError::Config(format!("trial {trial} out of range ({} trials)", cfg.trials)));
    }
    Ok(execute(cfg, cell, params, trial))
}

/// Runs every cell and trial; results are ordered by (cell, trial) whatever
/// the degree of parallelism.
pub fn sweep(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let all = cells(cfg);
    let jobs: Vec<(usize, usize)> = (0..all.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    log::info!("{} scenario: {} cells x {} trials", cfg.scenario.name(), all.len(), cfg.trials);
    let records: Vec<TrialRecord> = if cfg.parallel == 1 {
        jobs.iter().map(|&(c, t)| execute(cfg, c, &all[c], t)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(|&(c, t)| execute(cfg, c, &all[c], t)).collect())
    };
    Ok(RunReport::new(cfg, swept_axes(cfg), records))
}
