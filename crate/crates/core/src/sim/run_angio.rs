use crate::angioplasty::{
    fcfs_benchmark_assign, three_level_assign, AngioPatient, AngioSnapshot, AngioTiming, CardiologyTeam, DelayBreakdown, Hospital, Plan, Stage, TeamState,
};
use crate::model::{Point2D, RequestId, Seconds, Vehicle, VehicleId, VehicleKind, VehicleState};

use super::config::{AngioplastyScenario, ScenarioConfig, StrategyId, TeamRelease};
use super::demand::{self, uniform_point, LAYOUT_STREAM};
use super::metrics::{base_summary, window_records, RequestRecord, RequestStatus, RunMetrics, RunTotals, VehicleRecord};
use super::{drive, tags, Odometer, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
enum AmbTask {
    /// Available, driving back to its base if not there.
    Idle,
    ToPatient(RequestId),
    InSitu(RequestId),
    Carrying(RequestId),
}

#[derive(Debug, Clone, Copy, Default)]
struct Timeline {
    reached: Option<Seconds>,
    at_hospital: Option<Seconds>,
    team_arrived: Option<Seconds>,
    started: Option<Seconds>,
    team: Option<usize>,
}

const AT_SITE: f64 = 1.0;

/// Which of its planned patients a team works toward next: one already at
/// the hospital (earliest arrival first), else the earliest call.
fn team_target(plan: &Plan, patients: &[AngioPatient], team: usize) -> Option<RequestId> {
    let mut mine: Vec<&AngioPatient> = plan
        .team
        .iter()
        .filter(|(_, c)| **c == team)
        .map(|(p, _)| &patients[p.0])
        .filter(|p| !matches!(p.stage, Stage::InTreatment { .. } | Stage::Treated))
        .collect();
    mine.sort_by(|a, b| {
        let key = |p: &AngioPatient| match p.stage {
            Stage::AtHospital { since } => (0, since),
            _ => (1, p.called_at),
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.id.cmp(&b.id))
    });
    mine.first().map(|p| p.id)
}

pub(crate) fn run(cfg: &ScenarioConfig, s: &AngioplastyScenario) -> Result<RunMetrics, SimError> {
    let region = cfg.region.region();
    let tick = cfg.tick_s;
    let timing = AngioTiming {
        call: s.call_s,
        in_situ: s.in_situ_s,
        procedure: s.procedure_s,
        ambulance_speed: s.ambulance_speed_kmh / 3.6,
    };
    let team_speed = s.team_speed_kmh / 3.6;

    let mut layout = demand::stream_rng(cfg.seed, LAYOUT_STREAM);
    let mut hospitals: Vec<Hospital> = (0..s.hospitals).map(|h| Hospital::new(h, uniform_point(&mut layout, &region))).collect();
    let mut teams: Vec<CardiologyTeam> = (0..s.team_count())
        .map(|c| CardiologyTeam {
            id: c,
            position: uniform_point(&mut layout, &region),
            speed: team_speed,
            state: TeamState::Available,
            home: c % s.hospitals,
        })
        .collect();
    let mut fleet: Vec<Vehicle> = (0..s.ambulance_count())
        .map(|i| {
            let base = hospitals[i % hospitals.len()].position;
            Vehicle::new(VehicleId(i), base, timing.ambulance_speed, VehicleKind::Ambulance).map(|v| v.with_home(base))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::Runtime(e.to_string()))?;
    let mut tasks = vec![AmbTask::Idle; fleet.len()];
    let mut missions = vec![0u32; fleet.len()];
    let alert: Vec<Point2D> = teams.iter().map(|c| c.position).collect();
    // When each team reached the spot it is standing on.
    let mut team_here_since: Vec<Seconds> = vec![0.0; teams.len()];

    let interval = s.period_s * s.periods_per_patient as f64;
    let spawns = demand::uniform_region(cfg.seed, s.patients, interval, &region);
    let mut totals = RunTotals {
        spawn_hash: demand::spawn_hash(&spawns),
        ..Default::default()
    };
    let mut patients: Vec<AngioPatient> = Vec::with_capacity(spawns.len());
    let mut timeline: Vec<Timeline> = Vec::with_capacity(spawns.len());
    let mut records: Vec<RequestRecord> = Vec::with_capacity(spawns.len());
    let mut plan = Plan::default();
    let mut odo = Odometer::new(fleet.len());
    let mut treated = 0usize;
    let ticks_per_period = ((s.period_s / tick).round() as u64).max(1);
    let max_ticks = cfg.ticks();

    let mut k = 0u64;
    while k < max_ticks && treated < spawns.len() {
        let t0 = k as f64 * tick;
        let t1 = t0 + tick;
        let mut event = false;

        while patients.len() < spawns.len() && spawns[patients.len()].time < t1 {
            let sp = spawns[patients.len()];
            let mut p = AngioPatient::new(sp.id, sp.origin, sp.time);
            p.max_delay = s.max_delay_s;
            patients.push(p);
            timeline.push(Timeline::default());
            records.push(RequestRecord::new(sp.id.0, sp.time));
        }
        for p in patients.iter_mut() {
            if p.stage == Stage::Calling && p.called_at + timing.call < t1 {
                p.stage = Stage::AwaitingAmbulance;
                totals.log.record(p.called_at + timing.call, tags::VISIBLE, 0, p.id.0);
                event = true;
            }
        }

        for i in 0..fleet.len() {
            let mut t = t0;
            let mut moved = 0.0;
            while t < t1 {
                let budget = t1 - t;
                match tasks[i] {
                    AmbTask::Idle => {
                        let base = fleet[i].home_station.expect("ambulances have a base");
                        if fleet[i].position == base {
                            break;
                        }
                        let (used, _) = drive(&mut fleet[i].position, base, timing.ambulance_speed, budget, &mut moved);
                        t += used;
                    }
                    AmbTask::ToPatient(r) => {
                        let (used, arrived) = drive(&mut fleet[i].position, patients[r.0].origin, timing.ambulance_speed, budget, &mut moved);
                        t += used;
                        if arrived {
                            timeline[r.0].reached = Some(t);
                            patients[r.0].stage = Stage::InSitu { until: t + timing.in_situ };
                            fleet[i].state = VehicleState::Occupied(r);
                            tasks[i] = AmbTask::InSitu(r);
                            records[r.0].vehicle = Some(i);
                            totals.log.record(t, tags::REACHED, i, r.0);
                            event = true;
                        }
                    }
                    AmbTask::InSitu(r) => {
                        let Stage::InSitu { until } = patients[r.0].stage else {
                            unreachable!("in-situ task without in-situ patient")
                        };
                        if until > t1 {
                            break;
                        }
                        t = until;
                        let p = &mut patients[r.0];
                        let h = plan.hospital.get(&r).copied().unwrap_or_else(|| nearest_hospital(&hospitals, p.position));
                        p.stage = Stage::Transport;
                        p.hospital = Some(h);
                        tasks[i] = AmbTask::Carrying(r);
                        totals.log.record(t, tags::IN_SITU_DONE, i, h);
                        event = true;
                    }
                    AmbTask::Carrying(r) => {
                        let h = patients[r.0].hospital.expect("carried patients have a hospital");
                        let (used, arrived) = drive(&mut fleet[i].position, hospitals[h].position, timing.ambulance_speed, budget, &mut moved);
                        t += used;
                        patients[r.0].position = fleet[i].position;
                        if arrived {
                            patients[r.0].stage = Stage::AtHospital { since: t };
                            timeline[r.0].at_hospital = Some(t);
                            hospitals[h].queue.push(r);
                            plan.ambulance.remove(&r);
                            fleet[i].state = VehicleState::Idle;
                            tasks[i] = AmbTask::Idle;
                            missions[i] += 1;
                            totals.log.record(t, tags::AT_HOSPITAL, i, r.0);
                            event = true;
                        }
                    }
                }
            }
            odo.add(i, moved, timing.ambulance_speed, tick);
        }

        for c in 0..teams.len() {
            let mut t = t0;
            let mut moved = 0.0;
            while t < t1 {
                if let TeamState::Operating { until, .. } = teams[c].state {
                    if until > t1 {
                        break;
                    }
                    t = until;
                    for p in patients.iter_mut() {
                        if p.stage == (Stage::InTreatment { until }) && timeline[p.id.0].team == Some(c) {
                            p.stage = Stage::Treated;
                            plan.team.remove(&p.id);
                            plan.hospital.remove(&p.id);
                            records[p.id.0].completed_s = Some(until);
                            treated += 1;
                            totals.log.record(until, tags::PROCEDURE_END, c, p.id.0);
                        }
                    }
                    teams[c].state = TeamState::Available;
                    team_here_since[c] = until;
                    event = true;
                    continue;
                }
                let Some(r) = team_target(&plan, &patients, c) else {
                    teams[c].state = TeamState::Available;
                    if s.team_release == TeamRelease::ReturnToAlert && teams[c].position != alert[c] {
                        let (used, _) = drive(&mut teams[c].position, alert[c], team_speed, t1 - t, &mut moved);
                        t += used;
                        team_here_since[c] = t;
                        continue;
                    }
                    break;
                };
                let h = plan.hospital.get(&r).copied().or(patients[r.0].hospital).expect("planned patients have a hospital");
                let here = hospitals[h].position;
                if teams[c].position.distance(&here) >= AT_SITE {
                    teams[c].state = TeamState::EnRoute { hospital: h };
                    let (used, arrived) = drive(&mut teams[c].position, here, team_speed, t1 - t, &mut moved);
                    t += used;
                    if arrived {
                        team_here_since[c] = t;
                        teams[c].state = TeamState::Available;
                        totals.log.record(t, tags::TEAM_ARRIVED, c, h);
                    }
                    continue;
                }
                teams[c].state = TeamState::Available;
                let Stage::AtHospital { since } = patients[r.0].stage else {
                    break;
                };
                if patients[r.0].hospital != Some(h) {
                    break;
                }
                let start = since.max(t);
                let until = start + timing.procedure;
                patients[r.0].stage = Stage::InTreatment { until };
                hospitals[h].queue.retain(|q| *q != r);
                hospitals[h].free_at = until;
                teams[c].state = TeamState::Operating { hospital: h, until };
                let tl = &mut timeline[r.0];
                tl.team = Some(c);
                tl.team_arrived = Some(team_here_since[c]);
                tl.started = Some(start);
                totals.log.record(start, tags::PROCEDURE_START, c, r.0);
                event = true;
                t = start;
            }
        }

        k += 1;
        if event || k % ticks_per_period == 0 {
            totals.dispatch_calls += 1;
            let snapshot = AngioSnapshot {
                now: t1,
                timing: &timing,
                ambulances: &fleet,
                patients: &patients,
                hospitals: &hospitals,
                teams: &teams,
                plan: &plan,
            };
            let next = match cfg.strategy {
                StrategyId::ThreeLevel => three_level_assign(&snapshot),
                _ => fcfs_benchmark_assign(&snapshot),
            };
            apply_plan(t1, next, &mut plan, &mut fleet, &mut tasks, &mut patients, &mut records, &mut totals);
        }
    }
    totals.ticks = k;
    totals.sim_time_s = k as f64 * tick;

    let mut violations = 0;
    for (i, p) in patients.iter().enumerate() {
        let tl = timeline[i];
        let rec = &mut records[i];
        rec.reached_s = tl.reached;
        rec.response_s = tl.reached.map(|r| r - p.called_at);
        rec.team = tl.team;
        rec.hospital = p.hospital;
        if let (Some(reached), Some(at_h), Some(team_at), Some(start)) = (tl.reached, tl.at_hospital, tl.team_arrived, tl.started) {
            let b = DelayBreakdown::from_timeline(p.called_at, &timing, reached, at_h, team_at, start);
            let delay = start - p.called_at;
            rec.delay_s = Some(delay);
            rec.t1_s = Some(b.t1);
            rec.t2_s = Some(b.t2);
            rec.t3_s = Some(b.t3);
            rec.t4_s = Some(b.t4);
            rec.t5_s = Some(b.t5);
            rec.t6_s = Some(b.t6);
            if p.max_delay.is_some_and(|m| delay > m) {
                violations += 1;
            }
        }
        rec.status = match p.stage {
            Stage::Treated => RequestStatus::Completed,
            _ if tl.reached.is_some() => RequestStatus::PickedUp,
            _ => RequestStatus::Waiting,
        };
    }
    for (c, team) in teams.iter().enumerate() {
        totals.log.record(totals.sim_time_s, tags::COMPLETED, c, 0);
        totals.log.record_value(team.position.x);
        totals.log.record_value(team.position.y);
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
    let sim_time = totals.sim_time_s;
    let mut summary = base_summary(cfg, totals, &records, &vehicles);
    summary.deadline_violations = violations;
    let windows = window_records(&records, 3600.0, sim_time.max(tick));
    Ok(RunMetrics {
        summary,
        requests: records,
        vehicles,
        windows,
        compensations: Vec::new(),
    })
}

fn nearest_hospital(hospitals: &[Hospital], at: Point2D) -> usize {
    (0..hospitals.len())
        .min_by(|&a, &b| hospitals[a].position.distance_sq(&at).total_cmp(&hospitals[b].position.distance_sq(&at)))
        .expect("at least one hospital")
}

#[allow(clippy::too_many_arguments)]
fn apply_plan(
    now: Seconds,
    next: Plan,
    plan: &mut Plan,
    fleet: &mut [Vehicle],
    tasks: &mut [AmbTask],
    patients: &mut [AngioPatient],
    records: &mut [RequestRecord],
    totals: &mut RunTotals,
) {
    for i in 0..fleet.len() {
        if fleet[i].state.is_occupied() {
            continue;
        }
        let want = next
            .ambulance
            .iter()
            .find(|(r, v)| v.0 == i && patients[r.0].stage == Stage::AwaitingAmbulance)
            .map(|(r, _)| *r);
        match (tasks[i], want) {
            (AmbTask::ToPatient(cur), Some(r)) if cur == r => {}
            (_, Some(r)) => {
                if records[r.0].vehicle.is_some() {
                    records[r.0].reassignments += 1;
                    totals.reassignments += 1;
                }
                records[r.0].vehicle = Some(i);
                fleet[i].state = VehicleState::Assigned(r);
                tasks[i] = AmbTask::ToPatient(r);
                totals.log.record(now, tags::ASSIGN, i, r.0);
            }
            (AmbTask::ToPatient(_), None) => {
                fleet[i].state = VehicleState::Idle;
                tasks[i] = AmbTask::Idle;
                totals.log.record(now, tags::RELEASE, i, 0);
            }
            _ => {}
        }
    }
    for p in patients.iter_mut() {
        if matches!(p.stage, Stage::InSitu { .. } | Stage::Transport) {
            if let Some(h) = next.hospital.get(&p.id) {
                p.hospital = Some(*h);
            }
        }
    }
    *plan = next;
}
