use std::collections::BTreeSet;

use crate::assignment::{nearest_rule_points, NearestMode};
use crate::model::{Point2D, RequestId, Seconds, ServiceRequest, Vehicle, VehicleId, VehicleKind, VehicleState};
use crate::taxi::{dynra_step, price, MediatorLedger};

use super::config::{Arrivals, ScenarioConfig, StrategyId, TaxiScenario};
use super::demand::{self, uniform_point, FLEET_STREAM};
use super::metrics::{base_summary, window_records, RequestRecord, RequestStatus, RunMetrics, RunTotals, VehicleRecord};
use super::{drive, tags, Odometer, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Task {
    Idle,
    ToPickup(RequestId),
    Boarding { request: RequestId, until: Seconds },
    Carrying(RequestId),
    Alighting { request: RequestId, until: Seconds },
}

#[derive(Debug, Clone, Copy, Default)]
struct Money {
    payments: f64,
    mediator_fees: f64,
}

pub(crate) fn run(cfg: &ScenarioConfig, s: &TaxiScenario) -> Result<RunMetrics, SimError> {
    let region = cfg.region.region();
    let tick = cfg.tick_s;
    let speed = s.speed_kmh / 3.6;
    let econ = s.economics;

    let mut fleet_rng = demand::stream_rng(cfg.seed, FLEET_STREAM);
    let mut fleet: Vec<Vehicle> = (0..s.taxis)
        .map(|i| Vehicle::new(VehicleId(i), uniform_point(&mut fleet_rng, &region), speed, VehicleKind::Taxi))
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::Runtime(e.to_string()))?;
    let mut tasks = vec![Task::Idle; fleet.len()];
    let mut missions = vec![0u32; fleet.len()];
    let mut gross = vec![0.0; fleet.len()];
    let mut comp_received = vec![0.0; fleet.len()];

    let sigma = s.demand.sigma_fraction * region.width();
    let spawns = demand::center_periphery(cfg.seed, s.customers_per_window(), s.window_s, cfg.horizon_s, sigma, s.demand.arrivals == Arrivals::Spread, &region);
    let mut totals = RunTotals {
        ticks: cfg.ticks(),
        sim_time_s: cfg.horizon_s,
        spawn_hash: demand::spawn_hash(&spawns),
        ..Default::default()
    };
    let mut requests: Vec<ServiceRequest> = Vec::with_capacity(spawns.len());
    let mut records: Vec<RequestRecord> = Vec::with_capacity(spawns.len());
    // Spawned and not yet picked up, assigned or not.
    let mut pending: BTreeSet<RequestId> = BTreeSet::new();
    let mut ledger = MediatorLedger::new(s.initial_ledger_eur);
    let mut money = Money::default();
    let mut min_margin: Option<f64> = None;
    let mut odo = Odometer::new(fleet.len());

    for k in 0..totals.ticks {
        let t0 = k as f64 * tick;
        let t1 = t0 + tick;
        let mut new_client = false;
        let mut freed = false;

        while requests.len() < spawns.len() && spawns[requests.len()].time < t1 {
            let sp = spawns[requests.len()];
            let mut r = ServiceRequest::new(sp.id, sp.origin, sp.time);
            r.destination = sp.destination;
            requests.push(r);
            records.push(RequestRecord::new(sp.id.0, sp.time));
            pending.insert(sp.id);
            new_client = true;
        }

        for i in 0..fleet.len() {
            let mut t = t0;
            let mut moved = 0.0;
            while t < t1 {
                let budget = t1 - t;
                match tasks[i] {
                    Task::Idle => break,
                    Task::ToPickup(r) => {
                        let (used, arrived) = drive(&mut fleet[i].position, requests[r.0].origin, speed, budget, &mut moved);
                        t += used;
                        if arrived {
                            records[r.0].reached_s = Some(t);
                            records[r.0].response_s = Some(t - requests[r.0].created_at);
                            records[r.0].vehicle = Some(i);
                            pending.remove(&r);
                            fleet[i].state = VehicleState::Occupied(r);
                            tasks[i] = Task::Boarding {
                                request: r,
                                until: t + s.pickup_s,
                            };
                            totals.log.record(t, tags::REACHED, i, r.0);
                        }
                    }
                    Task::Boarding { request, until } => {
                        if until > t1 {
                            break;
                        }
                        t = until;
                        tasks[i] = Task::Carrying(request);
                        totals.log.record(t, tags::PICKED_UP, i, request.0);
                    }
                    Task::Carrying(r) => {
                        let dest = requests[r.0].destination.expect("taxi requests have a destination");
                        let (used, arrived) = drive(&mut fleet[i].position, dest, speed, budget, &mut moved);
                        t += used;
                        if arrived {
                            tasks[i] = Task::Alighting {
                                request: r,
                                until: t + s.dropoff_s,
                            };
                        }
                    }
                    Task::Alighting { request, until } => {
                        if until > t1 {
                            break;
                        }
                        t = until;
                        let fare = price(&econ, requests[request.0].trip_length());
                        let fee = s.mediator_fcost_share * econ.fcost;
                        money.payments += fare;
                        money.mediator_fees += fee;
                        ledger.credit(fee);
                        gross[i] += fare - fee;
                        records[request.0].fare_eur = Some(fare);
                        records[request.0].completed_s = Some(t);
                        fleet[i].state = VehicleState::Idle;
                        tasks[i] = Task::Idle;
                        missions[i] += 1;
                        freed = true;
                        totals.log.record(t, tags::COMPLETED, i, request.0);
                    }
                }
            }
            odo.add(i, moved, speed, tick);
        }

        if !(new_client || freed) {
            continue;
        }
        totals.dispatch_calls += 1;
        match cfg.strategy {
            StrategyId::Dynra => {
                let waiting: Vec<ServiceRequest> = pending.iter().map(|r| requests[r.0].clone()).collect();
                let active: Vec<Vehicle> = fleet.iter().filter(|v| !v.state.is_occupied()).cloned().collect();
                let rejected_before = ledger.rejected_plans;
                let out = dynra_step(t1, &active, &waiting, &econ, &mut ledger);
                if ledger.rejected_plans > rejected_before {
                    totals.log.record(t1, tags::REJECTED_PLAN, 0, 0);
                    totals.log.record_value(out.c_o);
                }
                for r in &out.reassigned {
                    let margin = r.quote.effective_income_new - r.quote.earn_current;
                    min_margin = Some(min_margin.map_or(margin, |m: f64| m.min(margin)));
                    comp_received[r.vehicle.0] += r.quote.c;
                    gross[r.vehicle.0] += r.quote.c;
                    totals.log.record(t1, tags::COMPENSATION, r.vehicle.0, r.new.0);
                    totals.log.record_value(r.quote.c);
                }
                for (v, r) in out.assignment {
                    assign(t1, v, r, &mut fleet, &mut tasks, &mut records, &mut totals);
                }
            }
            _ => {
                let mode = if cfg.strategy == StrategyId::Fcfs { NearestMode::Fcfs } else { NearestMode::Nvnr };
                let taken: BTreeSet<RequestId> = fleet.iter().filter_map(|v| v.state.request()).collect();
                let open: Vec<RequestId> = pending.iter().copied().filter(|r| !taken.contains(r)).collect();
                let idle: Vec<usize> = (0..fleet.len()).filter(|&i| fleet[i].state.is_idle()).collect();
                let vpos: Vec<Point2D> = idle.iter().map(|&i| fleet[i].position).collect();
                let rpos: Vec<(Point2D, Seconds)> = open.iter().map(|r| (requests[r.0].origin, requests[r.0].created_at)).collect();
                for &(vi, ri) in nearest_rule_points(&vpos, &rpos, mode).pairs() {
                    assign(t1, VehicleId(idle[vi]), open[ri], &mut fleet, &mut tasks, &mut records, &mut totals);
                }
            }
        }
    }

    for rec in records.iter_mut() {
        rec.status = match (rec.reached_s, rec.completed_s) {
            (_, Some(_)) => RequestStatus::Completed,
            (Some(_), None) => RequestStatus::PickedUp,
            _ => RequestStatus::Waiting,
        };
        if rec.reached_s.is_none() {
            rec.vehicle = None;
        }
    }
    for (i, v) in fleet.iter().enumerate() {
        totals.log.record(cfg.horizon_s, tags::COMPLETED, i, missions[i] as usize);
        totals.log.record_value(v.position.x);
        totals.log.record_value(v.position.y);
    }
    let vehicles: Vec<VehicleRecord> = (0..fleet.len())
        .map(|i| VehicleRecord {
            id: i,
            distance_m: odo.total[i],
            missions: missions[i],
            gross_eur: gross[i],
            compensation_eur: comp_received[i],
            net_eur: gross[i] - econ.vcost_per_km * odo.total[i] / 1000.0,
        })
        .collect();
    totals.max_step_ratio = odo.max_ratio;
    let mut summary = base_summary(cfg, totals, &records, &vehicles);
    let driver_gross: f64 = vehicles.iter().map(|v| v.gross_eur).sum();
    let mediator = ledger.balance() - ledger.initial();
    summary.payments_eur = money.payments;
    summary.driver_gross_eur = driver_gross;
    summary.driver_net_eur = vehicles.iter().map(|v| v.net_eur).sum();
    summary.mediator_earning_eur = mediator;
    summary.mediator_lowest_eur = ledger.lowest();
    summary.audit_residual_eur = money.payments - driver_gross - mediator;
    summary.min_rationality_margin_eur = min_margin;
    summary.rejected_plans = ledger.rejected_plans;
    let windows = window_records(&records, s.window_s, cfg.horizon_s);
    Ok(RunMetrics {
        summary,
        requests: records,
        vehicles,
        windows,
        compensations: ledger.log().to_vec(),
    })
}

/// Points `v` at request `r` unless it already is.
fn assign(now: Seconds, v: VehicleId, r: RequestId, fleet: &mut [Vehicle], tasks: &mut [Task], records: &mut [RequestRecord], totals: &mut RunTotals) {
    let i = v.0;
    if fleet[i].state == VehicleState::Assigned(r) {
        return;
    }
    if records[r.0].vehicle.is_some() {
        records[r.0].reassignments += 1;
        totals.reassignments += 1;
    }
    records[r.0].vehicle = Some(i);
    fleet[i].state = VehicleState::Assigned(r);
    tasks[i] = Task::ToPickup(r);
    totals.log.record(now, tags::ASSIGN, i, r.0);
}
