use crate::ems::{drard_dispatch, response_time, static_dispatch, EmsEvent, EmsState, RedeployParams, VehicleOrder};
use crate::model::{Point2D, RequestId, Seconds, ServiceRequest, Vehicle, VehicleId, VehicleKind, VehicleState};
use crate::redeployment::DensityGrid;

use super::config::{EmsScenario, ScenarioConfig, StrategyId};
use super::demand::{self, GridSampler, LAYOUT_STREAM};
use super::metrics::{base_summary, window_records, RequestRecord, RequestStatus, RunMetrics, RunTotals, VehicleRecord};
use super::{drive, tags, Odometer, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Task {
    /// Available; optionally driving to a station or redeployment point.
    Idle(Option<Point2D>),
    ToPatient(RequestId),
    InSitu { patient: RequestId, until: Seconds },
    ToHospital { patient: RequestId, hospital: usize },
}

/// Grid with the mean of all hourly probabilities, when they share a shape.
fn average_grid(grids: &[DensityGrid]) -> Result<DensityGrid, SimError> {
    let g0 = &grids[0];
    let same = grids
        .iter()
        .all(|g| g.x_cells() == g0.x_cells() && g.y_cells() == g0.y_cells() && g.cell_size() == g0.cell_size() && g.bounds() == g0.bounds());
    if !same {
        return Ok(g0.clone());
    }
    let weights: Vec<f64> = (0..g0.len()).map(|c| grids.iter().map(|g| g.prob(c)).sum()).collect();
    let b = g0.bounds();
    DensityGrid::new(Point2D::new(b.min_x, b.min_y), g0.x_cells(), g0.y_cells(), g0.cell_size(), weights).map_err(|e| SimError::Runtime(e.to_string()))
}

/// Station positions drawn from the time-averaged demand density. They
/// depend only on the layout seed, so every run of a scenario shares them.
pub(crate) fn stations(cfg: &ScenarioConfig, s: &EmsScenario, grids: &[DensityGrid]) -> Result<Vec<Point2D>, SimError> {
    let avg = average_grid(grids)?;
    let sampler = GridSampler::new(&avg);
    let mut rng = demand::stream_rng(s.layout_seed, LAYOUT_STREAM);
    let region = cfg.region.region();
    Ok((0..s.hospitals).map(|_| sampler.sample(&mut rng, &region)).collect())
}

fn nearest(points: &[Point2D], at: Point2D) -> usize {
    (0..points.len())
        .min_by(|&a, &b| points[a].distance_sq(&at).total_cmp(&points[b].distance_sq(&at)))
        .expect("at least one hospital")
}

pub(crate) fn run(cfg: &ScenarioConfig, s: &EmsScenario) -> Result<RunMetrics, SimError> {
    let region = cfg.region.region();
    let grids = cfg.density_grids()?;
    let hospitals = stations(cfg, s, &grids)?;
    let speed = s.speed_kmh / 3.6;
    let tick = cfg.tick_s;

    let mut fleet: Vec<Vehicle> = (0..s.ambulances)
        .map(|i| {
            let home = hospitals[i % hospitals.len()];
            Vehicle::new(VehicleId(i), home, speed, VehicleKind::Ambulance).map(|v| v.with_home(home))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::Runtime(e.to_string()))?;
    let mut tasks = vec![Task::Idle(None); fleet.len()];
    let mut missions = vec![0u32; fleet.len()];

    let spawns = demand::grid_density(cfg.seed, s.patients, cfg.horizon_s, &grids, &region);
    let mut totals = RunTotals {
        ticks: cfg.ticks(),
        sim_time_s: cfg.horizon_s,
        spawn_hash: demand::spawn_hash(&spawns),
        ..Default::default()
    };
    let mut patients: Vec<ServiceRequest> = Vec::with_capacity(spawns.len());
    let mut records: Vec<RequestRecord> = Vec::with_capacity(spawns.len());
    let mut reached: Vec<Option<Seconds>> = Vec::with_capacity(spawns.len());
    // Patients whose call is over and no ambulance has reached yet.
    let mut waiting: Vec<RequestId> = Vec::new();
    let mut next_spawn = 0;
    let mut next_visible = 0;
    let mut odo = Odometer::new(fleet.len());

    let grid_at = |t: Seconds| -> usize { (t / 3600.0).floor() as usize % grids.len() };

    let dispatch = |now: Seconds,
                        events: &[EmsEvent],
                        fleet: &mut Vec<Vehicle>,
                        tasks: &mut Vec<Task>,
                        patients: &[ServiceRequest],
                        waiting: &[RequestId],
                        records: &mut Vec<RequestRecord>,
                        totals: &mut RunTotals| {
        if events.is_empty() {
            return;
        }
        totals.dispatch_calls += 1;
        let visible: Vec<ServiceRequest> = waiting.iter().map(|r| patients[r.0].clone()).collect();
        let state = EmsState {
            now,
            ambulances: fleet,
            waiting: &visible,
        };
        let decision = match cfg.strategy {
            StrategyId::Drard => drard_dispatch(
                &state,
                events,
                RedeployParams {
                    grid: &grids[grid_at(now)],
                    move_threshold: s.move_threshold_m,
                },
            ),
            _ => static_dispatch(&state, events),
        };
        for (v, order) in decision.orders {
            let i = v.0;
            match order {
                VehicleOrder::Dispatch(r) => {
                    if records[r.0].vehicle.is_some() {
                        records[r.0].reassignments += 1;
                        totals.reassignments += 1;
                    }
                    records[r.0].vehicle = Some(i);
                    fleet[i].state = VehicleState::Assigned(r);
                    tasks[i] = Task::ToPatient(r);
                    totals.log.record(now, tags::ASSIGN, i, r.0);
                }
                VehicleOrder::Release { reposition } => {
                    fleet[i].state = VehicleState::Idle;
                    tasks[i] = Task::Idle(reposition);
                    totals.log.record(now, tags::RELEASE, i, 0);
                }
                VehicleOrder::Reposition(p) => {
                    tasks[i] = Task::Idle(Some(p));
                    totals.log.record(now, tags::REPOSITION, i, 0);
                    totals.log.record_value(p.x);
                    totals.log.record_value(p.y);
                }
                VehicleOrder::Hold => {
                    tasks[i] = Task::Idle(None);
                    totals.log.record(now, tags::HOLD, i, 0);
                }
            }
        }
    };

    if cfg.strategy == StrategyId::Drard {
        dispatch(0.0, &[EmsEvent::DistributionChange(0)], &mut fleet, &mut tasks, &patients, &waiting, &mut records, &mut totals);
    }

    for k in 0..totals.ticks {
        let t0 = k as f64 * tick;
        let t1 = t0 + tick;
        let mut events: Vec<EmsEvent> = Vec::new();

        while next_spawn < spawns.len() && spawns[next_spawn].time < t1 {
            let sp = spawns[next_spawn];
            patients.push(ServiceRequest::new(sp.id, sp.origin, sp.time));
            records.push(RequestRecord::new(sp.id.0, sp.time));
            reached.push(None);
            next_spawn += 1;
        }
        while next_visible < patients.len() && patients[next_visible].created_at + s.call_duration_s < t1 {
            let id = patients[next_visible].id;
            waiting.push(id);
            events.push(EmsEvent::NewPatient(id));
            totals.log.record(patients[next_visible].created_at + s.call_duration_s, tags::VISIBLE, 0, id.0);
            next_visible += 1;
        }

        for i in 0..fleet.len() {
            let mut t = t0;
            let mut moved = 0.0;
            while t < t1 {
                let budget = t1 - t;
                match tasks[i] {
                    Task::Idle(None) => break,
                    Task::Idle(Some(target)) => {
                        let (used, arrived) = drive(&mut fleet[i].position, target, speed, budget, &mut moved);
                        t += used;
                        if arrived {
                            tasks[i] = Task::Idle(None);
                        }
                    }
                    Task::ToPatient(r) => {
                        let (used, arrived) = drive(&mut fleet[i].position, patients[r.0].origin, speed, budget, &mut moved);
                        t += used;
                        if arrived {
                            reached[r.0] = Some(t);
                            waiting.retain(|w| *w != r);
                            fleet[i].state = VehicleState::Occupied(r);
                            tasks[i] = Task::InSitu {
                                patient: r,
                                until: t + s.in_situ_s,
                            };
                            totals.log.record(t, tags::REACHED, i, r.0);
                        }
                    }
                    Task::InSitu { patient, until } => {
                        if until > t1 {
                            break;
                        }
                        t = until;
                        let h = nearest(&hospitals, fleet[i].position);
                        tasks[i] = Task::ToHospital { patient, hospital: h };
                        totals.log.record(t, tags::IN_SITU_DONE, i, h);
                    }
                    Task::ToHospital { patient, hospital } => {
                        let (used, arrived) = drive(&mut fleet[i].position, hospitals[hospital], speed, budget, &mut moved);
                        t += used;
                        if arrived {
                            records[patient.0].completed_s = Some(t);
                            records[patient.0].hospital = Some(hospital);
                            fleet[i].state = VehicleState::Idle;
                            tasks[i] = Task::Idle(None);
                            missions[i] += 1;
                            events.push(EmsEvent::AmbulanceFinished(VehicleId(i)));
                            totals.log.record(t, tags::AT_HOSPITAL, i, patient.0);
                        }
                    }
                }
            }
            odo.add(i, moved, speed, tick);
        }

        if grids.len() > 1 && k + 1 < totals.ticks && grid_at(t1) != grid_at(t0) {
            events.push(EmsEvent::DistributionChange(grid_at(t1)));
        }
        let relevant = match cfg.strategy {
            StrategyId::Drard => !events.is_empty(),
            _ => events.iter().any(EmsEvent::triggers_assignment),
        };
        if relevant {
            dispatch(t1, &events, &mut fleet, &mut tasks, &patients, &waiting, &mut records, &mut totals);
        }
    }

    for (i, p) in patients.iter().enumerate() {
        let rec = &mut records[i];
        rec.reached_s = reached[i];
        rec.response_s = response_time(p, reached[i]).ok();
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
            gross_eur: 0.0,
            compensation_eur: 0.0,
            net_eur: 0.0,
        })
        .collect();
    totals.max_step_ratio = odo.max_ratio;
    let summary = base_summary(cfg, totals, &records, &vehicles);
    let windows = window_records(&records, 3600.0, cfg.horizon_s);
    Ok(RunMetrics {
        summary,
        requests: records,
        vehicles,
        windows,
        compensations: Vec::new(),
    })
}
