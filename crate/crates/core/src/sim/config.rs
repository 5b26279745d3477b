//! Scenario configuration files (JSON) and their validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Meters, Region, Seconds};
use crate::redeployment::{DensityGrid, GaussianBump, GridError};
use crate::taxi::EconomicParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("density grid `{key}`: {source}")]
    Grid {
        key: String,
        #[source]
        source: GridError,
    },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyId {
    #[serde(rename = "STATIC")]
    Static,
    #[serde(rename = "DRARD")]
    Drard,
    #[serde(rename = "THREE_LEVEL")]
    ThreeLevel,
    #[serde(rename = "EMS_FCFS")]
    EmsFcfs,
    #[serde(rename = "FCFS")]
    Fcfs,
    #[serde(rename = "NVNR")]
    Nvnr,
    #[serde(rename = "DYNRA")]
    Dynra,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Static,
        StrategyId::Drard,
        StrategyId::EmsFcfs,
        StrategyId::ThreeLevel,
        StrategyId::Fcfs,
        StrategyId::Nvnr,
        StrategyId::Dynra,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyId::Static => "STATIC",
            StrategyId::Drard => "DRARD",
            StrategyId::ThreeLevel => "THREE_LEVEL",
            StrategyId::EmsFcfs => "EMS_FCFS",
            StrategyId::Fcfs => "FCFS",
            StrategyId::Nvnr => "NVNR",
            StrategyId::Dynra => "DYNRA",
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            StrategyId::Static | StrategyId::Drard => ScenarioKind::Ems,
            StrategyId::ThreeLevel | StrategyId::EmsFcfs => ScenarioKind::Angioplasty,
            StrategyId::Fcfs | StrategyId::Nvnr | StrategyId::Dynra => ScenarioKind::Taxi,
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Ems,
    Angioplasty,
    Taxi,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Ems => "ems",
            ScenarioKind::Angioplasty => "angioplasty",
            ScenarioKind::Taxi => "taxi",
        }
    }

    pub fn strategies(&self) -> Vec<StrategyId> {
        StrategyId::ALL.into_iter().filter(|s| s.kind() == *self).collect()
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub width_m: Meters,
    pub height_m: Meters,
}

impl RegionSpec {
    pub fn region(&self) -> Region {
        Region::from_size(self.width_m, self.height_m)
    }
}

/// One demand density: Gaussian bumps rasterized onto the grid, or a CSV
/// file of cell weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSource {
    Bumps { bumps: Vec<GaussianBump> },
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default = "defaults::cell_size")]
    pub cell_size_m: Meters,
    #[serde(default = "defaults::truncate_sigmas")]
    pub truncate_sigmas: f64,
    /// Hour `h` of the run uses grid `h % grids.len()`.
    pub grids: Vec<GridSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmsScenario {
    pub ambulances: usize,
    /// Hospitals double as ambulance stations.
    pub hospitals: usize,
    pub patients: usize,
    #[serde(default = "defaults::ems_speed")]
    pub speed_kmh: f64,
    #[serde(default = "defaults::call")]
    pub call_duration_s: Seconds,
    #[serde(default = "defaults::in_situ")]
    pub in_situ_s: Seconds,
    #[serde(default = "defaults::move_threshold")]
    pub move_threshold_m: Meters,
    /// Seed for hospital placement, shared by all runs of a scenario.
    #[serde(default)]
    pub layout_seed: u64,
    pub density: DensitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngioplastyScenario {
    pub hospitals: usize,
    /// Defaults to one team per hospital.
    #[serde(default)]
    pub teams: Option<usize>,
    /// Defaults to two per hospital.
    #[serde(default)]
    pub ambulances: Option<usize>,
    pub patients: usize,
    #[serde(default = "defaults::period")]
    pub period_s: Seconds,
    /// One new patient every this many periods.
    pub periods_per_patient: u32,
    #[serde(default = "defaults::call")]
    pub call_s: Seconds,
    #[serde(default = "defaults::in_situ")]
    pub in_situ_s: Seconds,
    #[serde(default = "defaults::procedure")]
    pub procedure_s: Seconds,
    #[serde(default = "defaults::angio_speed")]
    pub ambulance_speed_kmh: f64,
    #[serde(default = "defaults::angio_speed")]
    pub team_speed_kmh: f64,
    #[serde(default)]
    pub team_release: TeamRelease,
    /// Maximum acceptable delay; unlimited when absent.
    #[serde(default)]
    pub max_delay_s: Option<Seconds>,
}

/// Where a cardiology team waits once its procedure ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeamRelease {
    /// Back to its alert position outside the hospital.
    #[default]
    ReturnToAlert,
    /// At the hospital where it operated.
    Stay,
}

impl AngioplastyScenario {
    pub fn team_count(&self) -> usize {
        self.teams.unwrap_or(self.hospitals)
    }

    pub fn ambulance_count(&self) -> usize {
        self.ambulances.unwrap_or(2 * self.hospitals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxiDemand {
    /// Standard deviation of every origin/destination cluster, as a fraction
    /// of the region width.
    #[serde(default = "defaults::sigma_fraction")]
    pub sigma_fraction: f64,
    #[serde(default)]
    pub arrivals: Arrivals,
}

impl Default for TaxiDemand {
    fn default() -> Self {
        Self {
            sigma_fraction: defaults::sigma_fraction(),
            arrivals: Arrivals::default(),
        }
    }
}

/// When a window's customers appear.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrivals {
    /// All at the start of the window.
    #[default]
    Batch,
    /// At uniform random times inside the window.
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxiScenario {
    pub taxis: usize,
    pub customers_per_hour: u32,
    #[serde(default = "defaults::taxi_speed")]
    pub speed_kmh: f64,
    /// Customers are generated in fixed-size batches per window.
    #[serde(default = "defaults::window")]
    pub window_s: Seconds,
    #[serde(default = "defaults::pickup")]
    pub pickup_s: Seconds,
    #[serde(default = "defaults::dropoff")]
    pub dropoff_s: Seconds,
    #[serde(default)]
    pub demand: TaxiDemand,
    #[serde(default)]
    pub economics: EconomicParams,
    #[serde(default)]
    pub initial_ledger_eur: f64,
    /// Share of each fixed cost kept by the mediator.
    #[serde(default)]
    pub mediator_fcost_share: f64,
}

impl TaxiScenario {
    pub fn customers_per_window(&self) -> usize {
        (self.customers_per_hour as f64 * self.window_s / 3600.0).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Ems(EmsScenario),
    Angioplasty(AngioplastyScenario),
    Taxi(TaxiScenario),
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Scenario::Ems(_) => ScenarioKind::Ems,
            Scenario::Angioplasty(_) => ScenarioKind::Angioplasty,
            Scenario::Taxi(_) => ScenarioKind::Taxi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub strategy: StrategyId,
    #[serde(default)]
    pub seed: u64,
    pub tick_s: Seconds,
    /// Simulated time; for angioplasty scenarios a cap, since runs stop once
    /// every patient is treated.
    pub horizon_s: Seconds,
    pub region: RegionSpec,
    pub scenario: Scenario,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod defaults {
    pub fn cell_size() -> f64 {
        1300.0
    }
    pub fn truncate_sigmas() -> f64 {
        3.0
    }
    pub fn ems_speed() -> f64 {
        60.0
    }
    pub fn call() -> f64 {
        120.0
    }
    pub fn in_situ() -> f64 {
        900.0
    }
    pub fn move_threshold() -> f64 {
        crate::redeployment::DEFAULT_MOVE_THRESHOLD
    }
    pub fn period() -> f64 {
        60.0
    }
    pub fn procedure() -> f64 {
        3600.0
    }
    pub fn angio_speed() -> f64 {
        60.0
    }
    pub fn sigma_fraction() -> f64 {
        0.125
    }
    pub fn taxi_speed() -> f64 {
        17.0
    }
    pub fn window() -> f64 {
        900.0
    }
    pub fn pickup() -> f64 {
        30.0
    }
    pub fn dropoff() -> f64 {
        90.0
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be non-negative, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(key, "must be at least 1"))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn kind(&self) -> ScenarioKind {
        self.scenario.kind()
    }

    pub fn with_strategy(&self, strategy: StrategyId) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.strategy = strategy;
        c.check_strategy()?;
        Ok(c)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    /// Number of whole ticks in the horizon.
    pub fn ticks(&self) -> u64 {
        (self.horizon_s / self.tick_s).round() as u64
    }

    fn check_strategy(&self) -> Result<(), ConfigError> {
        if self.strategy.kind() != self.kind() {
            return Err(invalid(
                "strategy",
                format!(
                    "{} is not a {} strategy (expected one of {})",
                    self.strategy,
                    self.kind(),
                    self.kind().strategies().iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                ),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        positive("tick_s", self.tick_s)?;
        positive("horizon_s", self.horizon_s)?;
        let ratio = self.horizon_s / self.tick_s;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid("horizon_s", format!("must be a multiple of tick_s ({})", self.tick_s)));
        }
        positive("region.width_m", self.region.width_m)?;
        positive("region.height_m", self.region.height_m)?;
        self.check_strategy()?;
        match &self.scenario {
            Scenario::Ems(s) => {
                at_least_one("scenario.ambulances", s.ambulances)?;
                at_least_one("scenario.hospitals", s.hospitals)?;
                positive("scenario.speed_kmh", s.speed_kmh)?;
                non_negative("scenario.call_duration_s", s.call_duration_s)?;
                non_negative("scenario.in_situ_s", s.in_situ_s)?;
                non_negative("scenario.move_threshold_m", s.move_threshold_m)?;
                positive("scenario.density.cell_size_m", s.density.cell_size_m)?;
                positive("scenario.density.truncate_sigmas", s.density.truncate_sigmas)?;
                if s.density.grids.is_empty() {
                    return Err(invalid("scenario.density.grids", "needs at least one grid"));
                }
                for (i, g) in s.density.grids.iter().enumerate() {
                    let key = format!("scenario.density.grids[{i}]");
                    match g {
                        GridSource::Csv { csv } => {
                            let path = self.base_dir.join(csv);
                            if !path.is_file() {
                                return Err(invalid(&format!("{key}.csv"), format!("file {} does not exist", path.display())));
                            }
                        }
                        GridSource::Bumps { bumps } => {
                            if bumps.is_empty() {
                                return Err(invalid(&format!("{key}.bumps"), "needs at least one bump"));
                            }
                            for (j, b) in bumps.iter().enumerate() {
                                positive(&format!("{key}.bumps[{j}].sigma"), b.sigma)?;
                                non_negative(&format!("{key}.bumps[{j}].weight"), b.weight)?;
                            }
                        }
                    }
                }
            }
            Scenario::Angioplasty(s) => {
                at_least_one("scenario.hospitals", s.hospitals)?;
                at_least_one("scenario.teams", s.team_count())?;
                at_least_one("scenario.ambulances", s.ambulance_count())?;
                positive("scenario.period_s", s.period_s)?;
                if s.periods_per_patient == 0 {
                    return Err(invalid("scenario.periods_per_patient", "must be at least 1"));
                }
                non_negative("scenario.call_s", s.call_s)?;
                non_negative("scenario.in_situ_s", s.in_situ_s)?;
                positive("scenario.procedure_s", s.procedure_s)?;
                positive("scenario.ambulance_speed_kmh", s.ambulance_speed_kmh)?;
                positive("scenario.team_speed_kmh", s.team_speed_kmh)?;
                if let Some(m) = s.max_delay_s {
                    positive("scenario.max_delay_s", m)?;
                }
            }
            Scenario::Taxi(s) => {
                at_least_one("scenario.taxis", s.taxis)?;
                positive("scenario.speed_kmh", s.speed_kmh)?;
                positive("scenario.window_s", s.window_s)?;
                non_negative("scenario.pickup_s", s.pickup_s)?;
                non_negative("scenario.dropoff_s", s.dropoff_s)?;
                positive("scenario.demand.sigma_fraction", s.demand.sigma_fraction)?;
                non_negative("scenario.initial_ledger_eur", s.initial_ledger_eur)?;
                if !(0.0..=1.0).contains(&s.mediator_fcost_share) {
                    return Err(invalid("scenario.mediator_fcost_share", "must lie in [0, 1]"));
                }
                s.economics
                    .validate()
                    .map_err(|e| invalid("scenario.economics", e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Builds the EMS density grids, one per hour of the cycle.
    pub fn density_grids(&self) -> Result<Vec<DensityGrid>, ConfigError> {
        let Scenario::Ems(s) = &self.scenario else {
            return Ok(Vec::new());
        };
        let region = self.region.region();
        s.density
            .grids
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let key = format!("scenario.density.grids[{i}]");
                match g {
                    GridSource::Bumps { bumps } => DensityGrid::gaussian_mixture(&region, s.density.cell_size_m, bumps, s.density.truncate_sigmas),
                    GridSource::Csv { csv } => DensityGrid::load_csv(self.base_dir.join(csv)),
                }
                .map_err(|source| ConfigError::Grid { key, source })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn taxi_json(tick: f64) -> String {
        format!(
            r#"{{
              "name": "t", "strategy": "NVNR", "tick_s": {tick}, "horizon_s": 600,
              "region": {{"width_m": 9000, "height_m": 9000}},
              "scenario": {{"kind": "taxi", "taxis": 10, "customers_per_hour": 40}}
            }}"#
        )
    }

    #[test]
    fn parses_with_defaults() {
        let c = ScenarioConfig::from_json(&taxi_json(5.0)).unwrap();
        let Scenario::Taxi(t) = &c.scenario else { panic!() };
        assert_eq!(t.speed_kmh, 17.0);
        assert_eq!(t.pickup_s, 30.0);
        assert_eq!(t.dropoff_s, 90.0);
        assert_eq!(t.customers_per_window(), 10);
        assert_eq!(t.economics, EconomicParams::default());
        assert_eq!(c.ticks(), 120);
    }

    #[test]
    fn zero_tick_names_the_key() {
        let err = ScenarioConfig::from_json(&taxi_json(0.0)).unwrap_err();
        assert!(err.to_string().contains("tick_s"), "{err}");
    }

    #[test]
    fn horizon_must_be_tick_multiple() {
        let err = ScenarioConfig::from_json(&taxi_json(7.0)).unwrap_err();
        assert!(err.to_string().contains("horizon_s"), "{err}");
    }

    #[test]
    fn strategy_must_match_kind() {
        let text = taxi_json(5.0).replace("NVNR", "DRARD");
        let err = ScenarioConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("strategy"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = taxi_json(5.0).replace("\"taxis\"", "\"taxies\"");
        assert!(ScenarioConfig::from_json(&text).is_err());
    }

    #[test]
    fn strategy_ids_round_trip() {
        for s in StrategyId::ALL {
            assert_eq!(s.as_str().parse::<StrategyId>().unwrap(), s);
        }
    }

    #[test]
    fn json_round_trip() {
        let c = ScenarioConfig::from_json(&taxi_json(5.0)).unwrap();
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
