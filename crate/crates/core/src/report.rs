//! Strategy comparison over paired seeds.
//!
//! A comparison writes every run's CSV files under
//! `<out>/<STRATEGY>/seed-<n>/` plus a `manifest.json`, then builds the
//! report by reading those files back. [`regenerate`] repeats the second
//! step alone and produces byte-identical output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angioplasty::performance_p;
use crate::sim::metrics::percentile;
use crate::sim::{self, OutputFormat, RequestRecord, RunSummary, ScenarioConfig, ScenarioKind, SimError, StrategyId};

/// Share of the baseline's pooled per-request times that defines the
/// service-level threshold.
pub const THRESHOLD_QUANTILE: f64 = 0.7;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid comparison: {0}")]
    Invalid(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub kind: ScenarioKind,
    pub strategies: Vec<StrategyId>,
    pub seeds: Vec<u64>,
}

/// One stored run as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRun {
    pub strategy: StrategyId,
    pub seed: u64,
    pub summary: RunSummary,
    pub requests: Vec<RequestRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub strategy: StrategyId,
    pub runs: usize,
    /// Mean over seeds of each run's mean headline time.
    pub mean_time_s: f64,
    pub min_time_s: f64,
    pub max_time_s: f64,
    pub mean_vehicle_distance_m: f64,
    pub mean_unserved: f64,
    /// Per seed, share of requests whose headline time is within the
    /// threshold. Unserved requests count as outside.
    pub within_threshold: Vec<f64>,
    pub mean_within_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub name: String,
    pub kind: ScenarioKind,
    /// `mean_delay_s` for angioplasty runs, `mean_response_s` otherwise.
    pub metric: String,
    pub seeds: Vec<u64>,
    pub threshold_s: f64,
    pub rows: Vec<StrategyRow>,
    /// `improvement[i][j]`: performance of strategy `j` against baseline
    /// `i`, in percent of the baseline's mean time.
    pub improvement: Vec<Vec<f64>>,
    /// Spawn-log hashes agree across strategies for every seed.
    pub paired: bool,
}

fn headline(kind: ScenarioKind, r: &RequestRecord) -> Option<f64> {
    match kind {
        ScenarioKind::Angioplasty => r.delay_s,
        _ => r.response_s,
    }
}

fn summary_time(kind: ScenarioKind, s: &RunSummary) -> Option<f64> {
    match kind {
        ScenarioKind::Angioplasty => s.mean_delay_s,
        _ => s.mean_response_s,
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl ComparisonReport {
    pub fn build(manifest: &Manifest, runs: &[StoredRun]) -> Result<Self, ReportError> {
        let kind = manifest.kind;
        let Some(&base) = manifest.strategies.first() else {
            return Err(ReportError::Invalid("no strategies".into()));
        };
        let of = |s: StrategyId| -> Vec<&StoredRun> {
            manifest
                .seeds
                .iter()
                .filter_map(|seed| runs.iter().find(|r| r.strategy == s && r.seed == *seed))
                .collect()
        };

        let mut pooled: Vec<f64> = of(base).iter().flat_map(|r| r.requests.iter().filter_map(|q| headline(kind, q))).collect();
        pooled.sort_by(f64::total_cmp);
        let threshold_s = percentile(&pooled, THRESHOLD_QUANTILE).unwrap_or(0.0);

        let mut rows = Vec::new();
        for &s in &manifest.strategies {
            let mine = of(s);
            if mine.len() != manifest.seeds.len() {
                return Err(ReportError::Invalid(format!("missing runs for {s}")));
            }
            let times: Vec<f64> = mine.iter().filter_map(|r| summary_time(kind, &r.summary)).collect();
            let within: Vec<f64> = mine
                .iter()
                .map(|r| {
                    let n = r.requests.len();
                    let ok = r.requests.iter().filter(|q| headline(kind, q).is_some_and(|t| t <= threshold_s)).count();
                    if n == 0 {
                        1.0
                    } else {
                        ok as f64 / n as f64
                    }
                })
                .collect();
            rows.push(StrategyRow {
                strategy: s,
                runs: mine.len(),
                mean_time_s: mean(&times),
                min_time_s: times.iter().copied().fold(f64::NAN, f64::min),
                max_time_s: times.iter().copied().fold(f64::NAN, f64::max),
                mean_vehicle_distance_m: mean(&mine.iter().map(|r| r.summary.mean_vehicle_distance_m).collect::<Vec<_>>()),
                mean_unserved: mean(&mine.iter().map(|r| r.summary.unserved as f64).collect::<Vec<_>>()),
                mean_within_threshold: mean(&within),
                within_threshold: within,
            });
        }

        let improvement = rows
            .iter()
            .map(|b| rows.iter().map(|o| performance_p(b.mean_time_s, o.mean_time_s).unwrap_or(f64::NAN)).collect())
            .collect();

        let paired = manifest.seeds.iter().all(|seed| {
            let hashes: Vec<&str> = runs.iter().filter(|r| r.seed == *seed).map(|r| r.summary.spawn_hash.as_str()).collect();
            hashes.windows(2).all(|w| w[0] == w[1])
        });

        Ok(Self {
            name: manifest.name.clone(),
            kind,
            metric: match kind {
                ScenarioKind::Angioplasty => "mean_delay_s",
                _ => "mean_response_s",
            }
            .into(),
            seeds: manifest.seeds.clone(),
            threshold_s,
            rows,
            improvement,
            paired,
        })
    }

    pub fn row(&self, s: StrategyId) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == s)
    }

    /// Improvement of `other` over `base`, in percent.
    pub fn improvement_of(&self, base: StrategyId, other: StrategyId) -> Option<f64> {
        let i = self.rows.iter().position(|r| r.strategy == base)?;
        let j = self.rows.iter().position(|r| r.strategy == other)?;
        Some(self.improvement[i][j])
    }

    /// One row per strategy. Improvement columns appear only when there is
    /// something to compare against.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,runs,mean_time_s,min_time_s,max_time_s,mean_vehicle_distance_m,mean_unserved,within_threshold");
        let pairwise = self.rows.len() > 1;
        if pairwise {
            for r in &self.rows {
                let _ = write!(out, ",improvement_vs_{}_pct", r.strategy);
            }
        }
        out.push('\n');
        for (j, r) in self.rows.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{:.3},{:.3},{:.3},{:.1},{:.2},{:.4}",
                r.strategy, r.runs, r.mean_time_s, r.min_time_s, r.max_time_s, r.mean_vehicle_distance_m, r.mean_unserved, r.mean_within_threshold
            );
            if pairwise {
                for base in &self.improvement {
                    let _ = write!(out, ",{:.2}", base[j]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// Plain-text table with the service-level breakdown per seed.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({}), {} seed(s), metric {}", self.name, self.kind, self.seeds.len(), self.metric);
        let _ = writeln!(out, "{:<12} {:>12} {:>14} {:>10}", "strategy", "mean (min)", "km/vehicle", "within");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>12.2} {:>14.2} {:>9.1}%",
                r.strategy.as_str(),
                r.mean_time_s / 60.0,
                r.mean_vehicle_distance_m / 1000.0,
                100.0 * r.mean_within_threshold
            );
        }
        if self.rows.len() > 1 {
            let base = &self.rows[0];
            for (j, r) in self.rows.iter().enumerate().skip(1) {
                let _ = writeln!(out, "Improvement % of {} over {}: {:.2}", r.strategy, base.strategy, self.improvement[0][j]);
            }
        }
        let _ = writeln!(out, "threshold {:.1} s; paired demand: {}", self.threshold_s, if self.paired { "yes" } else { "NO" });
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

pub fn run_dir(out: &Path, strategy: StrategyId, seed: u64) -> PathBuf {
    out.join(strategy.as_str()).join(format!("seed-{seed}"))
}

pub fn report_file(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "report.csv",
        OutputFormat::Json => "report.json",
    }
}

/// Reads every run named by `<out>/manifest.json` back from disk.
pub fn load_runs(out: &Path) -> Result<(Manifest, Vec<StoredRun>), ReportError> {
    let mpath = out.join("manifest.json");
    let text = std::fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&mpath, e))?;
    let mut runs = Vec::new();
    for &strategy in &manifest.strategies {
        for &seed in &manifest.seeds {
            let dir = run_dir(out, strategy, seed);
            let summary = sim::RunMetrics::read_summary_csv(&dir.join("summary.csv")).map_err(|e| io_err(&dir, e))?;
            let requests = sim::RunMetrics::read_requests_csv(&dir.join("requests.csv")).map_err(|e| io_err(&dir, e))?;
            runs.push(StoredRun {
                strategy,
                seed,
                summary,
                requests,
            });
        }
    }
    Ok((manifest, runs))
}

/// Rebuilds the report from stored runs and writes it next to them.
pub fn regenerate(out: &Path, format: OutputFormat) -> Result<ComparisonReport, ReportError> {
    let (manifest, runs) = load_runs(out)?;
    let report = ComparisonReport::build(&manifest, &runs)?;
    let path = out.join(report_file(format));
    std::fs::write(&path, report.render(format)).map_err(|e| io_err(&path, e))?;
    Ok(report)
}

/// Runs every strategy over the same seeds, stores each run, and writes
/// the report.
pub fn compare(config: &ScenarioConfig, strategies: &[StrategyId], seeds: &[u64], out: &Path, format: OutputFormat) -> Result<ComparisonReport, ReportError> {
    if strategies.is_empty() {
        return Err(ReportError::Invalid("no strategies".into()));
    }
    let configs = strategies
        .iter()
        .map(|s| config.with_strategy(*s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(SimError::from)?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    for cfg in &configs {
        let rep = sim::replicate(cfg, seeds)?;
        for (run, seed) in rep.runs.iter().zip(seeds) {
            let dir = run_dir(out, cfg.strategy, *seed);
            run.write_to(&dir, OutputFormat::Csv).map_err(|e| io_err(&dir, e))?;
        }
    }
    let manifest = Manifest {
        name: config.name.clone(),
        kind: config.kind(),
        strategies: strategies.to_vec(),
        seeds: seeds.to_vec(),
    };
    let mpath = out.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(|e| io_err(&mpath, e))?;
    regenerate(out, format)
}
