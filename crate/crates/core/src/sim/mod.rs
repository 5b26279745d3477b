//! Deterministic fixed-tick simulation.
//!
//! Every tick runs the same phases in the same order: demand spawn, vehicle
//! movement (with arrivals and service completions at their exact
//! fractional times), strategy invocation on trigger events, metrics.

pub mod config;
pub mod demand;
pub mod metrics;
mod run_angio;
mod run_ems;
mod run_taxi;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Meters, Point2D, Seconds};
pub use config::{Arrivals, ConfigError, Scenario, ScenarioConfig, ScenarioKind, StrategyId, TeamRelease};
pub use metrics::{OutputFormat, RequestRecord, RequestStatus, RunMetrics, RunSummary, VehicleRecord, WindowRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Runtime(String),
}

/// Runs one scenario with the seed in its config.
pub fn run(config: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    config.validate()?;
    match &config.scenario {
        Scenario::Ems(s) => run_ems::run(config, s),
        Scenario::Angioplasty(s) => run_angio::run(config, s),
        Scenario::Taxi(s) => run_taxi::run(config, s),
    }
}

/// Per-seed runs of one config with componentwise mean, min and max of the
/// numeric summary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub runs: Vec<RunMetrics>,
    pub mean: Vec<(&'static str, f64)>,
    pub min: Vec<(&'static str, f64)>,
    pub max: Vec<(&'static str, f64)>,
}

impl Replication {
    pub fn from_runs(runs: Vec<RunMetrics>) -> Self {
        let fields: Vec<Vec<(&'static str, f64)>> = runs.iter().map(|r| r.summary.numeric_fields()).collect();
        let names: Vec<&'static str> = fields.first().map(|f| f.iter().map(|x| x.0).collect()).unwrap_or_default();
        let mut mean = Vec::new();
        let mut min = Vec::new();
        let mut max = Vec::new();
        for (i, name) in names.into_iter().enumerate() {
            let vals: Vec<f64> = fields.iter().map(|f| f[i].1).filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                continue;
            }
            mean.push((name, vals.iter().sum::<f64>() / vals.len() as f64));
            min.push((name, vals.iter().copied().fold(f64::INFINITY, f64::min)));
            max.push((name, vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        }
        Self { runs, mean, min, max }
    }

    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.mean.iter().find(|x| x.0 == name).map(|x| x.1)
    }
}

/// Runs every seed, in parallel, and aggregates. Results are in seed order
/// and identical to running the seeds one by one.
pub fn replicate(config: &ScenarioConfig, seeds: &[u64]) -> Result<Replication, SimError> {
    if seeds.is_empty() {
        return Err(SimError::Runtime("at least one seed is required".into()));
    }
    config.validate()?;
    let runs = seeds
        .par_iter()
        .map(|&s| run(&config.with_seed(s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Replication::from_runs(runs))
}

/// Drives `pos` toward `target` for at most `budget` seconds. Returns the
/// time used and whether the target was reached.
pub(crate) fn drive(pos: &mut Point2D, target: Point2D, speed: f64, budget: Seconds, moved: &mut Meters) -> (Seconds, bool) {
    let (next, d) = pos.step_toward(&target, speed * budget);
    *pos = next;
    *moved += d;
    if next == target {
        (d / speed, true)
    } else {
        (budget, false)
    }
}

/// Accumulates distance and the worst per-tick speed ratio.
#[derive(Debug, Clone)]
pub(crate) struct Odometer {
    pub total: Vec<Meters>,
    pub max_ratio: f64,
}

impl Odometer {
    pub fn new(n: usize) -> Self {
        Self {
            total: vec![0.0; n],
            max_ratio: 0.0,
        }
    }

    pub fn add(&mut self, vehicle: usize, moved: Meters, speed: f64, tick: Seconds) {
        self.total[vehicle] += moved;
        let r = moved / (speed * tick);
        if r > self.max_ratio {
            self.max_ratio = r;
        }
    }
}

pub(crate) mod tags {
    pub const VISIBLE: u8 = 1;
    pub const ASSIGN: u8 = 2;
    pub const RELEASE: u8 = 3;
    pub const REPOSITION: u8 = 4;
    pub const REACHED: u8 = 5;
    pub const COMPLETED: u8 = 6;
    pub const AT_HOSPITAL: u8 = 7;
    pub const TEAM_ARRIVED: u8 = 8;
    pub const PROCEDURE_START: u8 = 9;
    pub const PROCEDURE_END: u8 = 10;
    pub const COMPENSATION: u8 = 11;
    pub const HOLD: u8 = 12;
    pub const IN_SITU_DONE: u8 = 13;
    pub const PICKED_UP: u8 = 14;
    pub const REJECTED_PLAN: u8 = 15;
}
