//! Per-run output: one record per request and vehicle, per-window
//! aggregates, and a summary row.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::Seconds;
use crate::taxi::CompensationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    /// Never reached by a vehicle before the horizon.
    Waiting,
    /// Reached, but service still running at the horizon.
    PickedUp,
    Completed,
}

/// One row of `requests.csv`. Optional columns are empty when they do not
/// apply to the scenario kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: usize,
    pub created_s: f64,
    pub status: RequestStatus,
    /// Vehicle that reached the request.
    pub vehicle: Option<usize>,
    pub reached_s: Option<f64>,
    /// Reached minus created; the taxi waiting time.
    pub response_s: Option<f64>,
    pub completed_s: Option<f64>,
    /// Times the request's vehicle was changed after the first assignment.
    pub reassignments: u32,
    pub hospital: Option<usize>,
    pub team: Option<usize>,
    pub delay_s: Option<f64>,
    pub t1_s: Option<f64>,
    pub t2_s: Option<f64>,
    pub t3_s: Option<f64>,
    pub t4_s: Option<f64>,
    pub t5_s: Option<f64>,
    pub t6_s: Option<f64>,
    pub fare_eur: Option<f64>,
}

impl RequestRecord {
    pub fn new(id: usize, created_s: f64) -> Self {
        Self {
            id,
            created_s,
            status: RequestStatus::Waiting,
            vehicle: None,
            reached_s: None,
            response_s: None,
            completed_s: None,
            reassignments: 0,
            hospital: None,
            team: None,
            delay_s: None,
            t1_s: None,
            t2_s: None,
            t3_s: None,
            t4_s: None,
            t5_s: None,
            t6_s: None,
            fare_eur: None,
        }
    }
}

/// One row of `vehicles.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: usize,
    pub distance_m: f64,
    pub missions: u32,
    /// Fares kept plus compensations received (taxis).
    pub gross_eur: f64,
    pub compensation_eur: f64,
    /// Gross minus distance-proportional costs (taxis).
    pub net_eur: f64,
}

/// Requests grouped by the window they were created in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub start_s: f64,
    pub created: usize,
    pub reached: usize,
    pub mean_response_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub kind: String,
    pub strategy: String,
    pub seed: u64,
    pub ticks: u64,
    pub sim_time_s: f64,
    pub requests: usize,
    /// Requests reached by a vehicle.
    pub served: usize,
    pub completed: usize,
    /// Requests still waiting for a vehicle at the end of the run.
    pub unserved: usize,
    pub completeness: f64,
    pub mean_response_s: Option<f64>,
    pub p50_response_s: Option<f64>,
    pub p90_response_s: Option<f64>,
    pub max_response_s: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub deadline_violations: usize,
    pub total_distance_m: f64,
    pub mean_vehicle_distance_m: f64,
    /// Largest per-tick displacement over `speed * tick`.
    pub max_step_ratio: f64,
    pub dispatch_calls: u64,
    pub reassignments: u64,
    pub payments_eur: f64,
    pub driver_gross_eur: f64,
    pub driver_net_eur: f64,
    pub mediator_earning_eur: f64,
    pub mediator_lowest_eur: f64,
    /// Payments minus driver receipts minus mediator earning.
    pub audit_residual_eur: f64,
    /// Smallest `effective income - current earnings` over committed moves.
    pub min_rationality_margin_eur: Option<f64>,
    pub rejected_plans: usize,
    pub events: u64,
    pub event_hash: String,
    pub spawn_hash: String,
}

impl RunSummary {
    /// Numeric columns, in CSV order, used for aggregation across seeds.
    pub fn numeric_fields(&self) -> Vec<(&'static str, f64)> {
        let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
        vec![
            ("requests", self.requests as f64),
            ("served", self.served as f64),
            ("completed", self.completed as f64),
            ("unserved", self.unserved as f64),
            ("completeness", self.completeness),
            ("mean_response_s", opt(self.mean_response_s)),
            ("p50_response_s", opt(self.p50_response_s)),
            ("p90_response_s", opt(self.p90_response_s)),
            ("max_response_s", opt(self.max_response_s)),
            ("mean_delay_s", opt(self.mean_delay_s)),
            ("deadline_violations", self.deadline_violations as f64),
            ("total_distance_m", self.total_distance_m),
            ("mean_vehicle_distance_m", self.mean_vehicle_distance_m),
            ("reassignments", self.reassignments as f64),
            ("payments_eur", self.payments_eur),
            ("driver_gross_eur", self.driver_gross_eur),
            ("driver_net_eur", self.driver_net_eur),
            ("mediator_earning_eur", self.mediator_earning_eur),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub summary: RunSummary,
    pub requests: Vec<RequestRecord>,
    pub vehicles: Vec<VehicleRecord>,
    pub windows: Vec<WindowRecord>,
    pub compensations: Vec<CompensationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub const REQUEST_COLUMNS: [&str; 18] = [
    "id", "created_s", "status", "vehicle", "reached_s", "response_s", "completed_s", "reassignments", "hospital", "team", "delay_s", "t1_s", "t2_s",
    "t3_s", "t4_s", "t5_s", "t6_s", "fare_eur",
];

impl RunMetrics {
    /// Mean response over reached requests; unserved ones are excluded.
    pub fn mean_response(&self) -> Option<f64> {
        self.summary.mean_response_s
    }

    pub fn responses(&self) -> Vec<f64> {
        self.requests.iter().filter_map(|r| r.response_s).collect()
    }

    /// Writes `summary.csv`, `requests.csv`, `vehicles.csv`, `windows.csv`
    /// and (taxi runs) `compensations.csv`, or `summary.json` with every
    /// table inlined.
    pub fn write_to(&self, dir: &Path, format: OutputFormat) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
                w.serialize(&self.summary)?;
                w.flush()?;
                write_rows(&dir.join("requests.csv"), &self.requests, &REQUEST_COLUMNS)?;
                write_rows(&dir.join("vehicles.csv"), &self.vehicles, &["id", "distance_m", "missions", "gross_eur", "compensation_eur", "net_eur"])?;
                write_rows(&dir.join("windows.csv"), &self.windows, &["window", "start_s", "created", "reached", "mean_response_s"])?;
                if self.summary.kind == "taxi" {
                    write_rows(
                        &dir.join("compensations.csv"),
                        &self.compensations,
                        &["time_s", "vehicle", "old_request", "new_request", "case", "c_eur", "ledger_after"],
                    )?;
                }
            }
            OutputFormat::Json => {
                let doc = serde_json::json!({
                    "summary": self.summary,
                    "requests": self.requests,
                    "vehicles": self.vehicles,
                    "windows": self.windows,
                    "compensations": self.compensations,
                });
                let text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
                std::fs::write(dir.join("summary.json"), text)?;
            }
        }
        Ok(())
    }

    pub fn read_summary_csv(path: &Path) -> Result<RunSummary, csv::Error> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().next().unwrap_or_else(|| Err(csv::Error::from(std::io::Error::other("empty summary"))))
    }

    pub fn read_requests_csv(path: &Path) -> Result<Vec<RequestRecord>, csv::Error> {
        csv::Reader::from_path(path)?.deserialize().collect()
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Response statistics `(mean, p50, p90, max)` over reached requests.
pub fn response_stats(requests: &[RequestRecord]) -> [Option<f64>; 4] {
    let mut r: Vec<f64> = requests.iter().filter_map(|x| x.response_s).collect();
    r.sort_by(f64::total_cmp);
    [mean(&r), percentile(&r, 0.5), percentile(&r, 0.9), r.last().copied()]
}

pub fn window_records(requests: &[RequestRecord], window: Seconds, horizon: Seconds) -> Vec<WindowRecord> {
    let n = ((horizon / window).ceil() as usize).max(1);
    let mut out: Vec<WindowRecord> = (0..n)
        .map(|w| WindowRecord {
            window: w,
            start_s: w as f64 * window,
            created: 0,
            reached: 0,
            mean_response_s: None,
        })
        .collect();
    let mut sums = vec![0.0; n];
    for r in requests {
        let w = ((r.created_s / window) as usize).min(n - 1);
        out[w].created += 1;
        if let Some(x) = r.response_s {
            out[w].reached += 1;
            sums[w] += x;
        }
    }
    for (o, s) in out.iter_mut().zip(sums) {
        if o.reached > 0 {
            o.mean_response_s = Some(s / o.reached as f64);
        }
    }
    out
}

/// Run-wide counters collected by a scenario runner.
#[derive(Debug, Clone, Default)]
pub(crate) struct RunTotals {
    pub ticks: u64,
    pub sim_time_s: f64,
    pub max_step_ratio: f64,
    pub dispatch_calls: u64,
    pub reassignments: u64,
    pub log: EventLog,
    pub spawn_hash: String,
}

/// Summary columns shared by every scenario kind; money columns start at
/// zero.
pub(crate) fn base_summary(cfg: &crate::sim::ScenarioConfig, totals: RunTotals, requests: &[RequestRecord], vehicles: &[VehicleRecord]) -> RunSummary {
    let [mean_r, p50, p90, max_r] = response_stats(requests);
    let served = requests.iter().filter(|r| r.reached_s.is_some()).count();
    let completed = requests.iter().filter(|r| r.status == RequestStatus::Completed).count();
    let delays: Vec<f64> = requests.iter().filter_map(|r| r.delay_s).collect();
    let total_distance: f64 = vehicles.iter().map(|v| v.distance_m).sum();
    let (events, event_hash) = totals.log.finish();
    RunSummary {
        name: cfg.name.clone(),
        kind: cfg.kind().as_str().to_string(),
        strategy: cfg.strategy.as_str().to_string(),
        seed: cfg.seed,
        ticks: totals.ticks,
        sim_time_s: totals.sim_time_s,
        requests: requests.len(),
        served,
        completed,
        unserved: requests.len() - served,
        completeness: if requests.is_empty() { 1.0 } else { served as f64 / requests.len() as f64 },
        mean_response_s: mean_r,
        p50_response_s: p50,
        p90_response_s: p90,
        max_response_s: max_r,
        mean_delay_s: mean(&delays),
        deadline_violations: 0,
        total_distance_m: total_distance,
        mean_vehicle_distance_m: if vehicles.is_empty() { 0.0 } else { total_distance / vehicles.len() as f64 },
        max_step_ratio: totals.max_step_ratio,
        dispatch_calls: totals.dispatch_calls,
        reassignments: totals.reassignments,
        payments_eur: 0.0,
        driver_gross_eur: 0.0,
        driver_net_eur: 0.0,
        mediator_earning_eur: 0.0,
        mediator_lowest_eur: 0.0,
        audit_residual_eur: 0.0,
        min_rationality_margin_eur: None,
        rejected_plans: 0,
        events,
        event_hash,
        spawn_hash: totals.spawn_hash,
    }
}

/// Running SHA-256 over every discrete event of a run.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    hasher: Sha256,
    events: u64,
}

impl EventLog {
    pub fn record(&mut self, time: Seconds, tag: u8, a: usize, b: usize) {
        self.hasher.update(time.to_bits().to_le_bytes());
        self.hasher.update([tag]);
        self.hasher.update((a as u64).to_le_bytes());
        self.hasher.update((b as u64).to_le_bytes());
        self.events += 1;
    }

    pub fn record_value(&mut self, v: f64) {
        self.hasher.update(v.to_bits().to_le_bytes());
    }

    pub fn len(&self) -> u64 {
        self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events == 0
    }

    pub fn finish(self) -> (u64, String) {
        (self.events, hex::encode(self.hasher.finalize()))
    }
}
