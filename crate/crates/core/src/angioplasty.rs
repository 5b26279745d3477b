//! Coordination of ambulances, angioplasty hospitals and cardiology teams.
//!
//! A patient's delay runs from the start of the call to the start of the
//! procedure:
//!
//! ```text
//! call | ambulance travel | in-situ care | transport | lab wait
//!                                          \___ team travel ___/
//! ```
//!
//! The coordinated strategy solves three assignment problems in sequence:
//! ambulances to patients, patients to hospital slots, then teams to
//! patients that already have a hospital. The benchmark commits each
//! patient, in call order, to the nearest idle ambulance, the nearest
//! hospital and that hospital's own team.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{exact_epsilon, solve_optimal, CostMatrix};
use crate::model::{Point2D, RequestId, Seconds, Vehicle, VehicleId, VehicleState};

/// Weight of a team's own travel time in the team assignment, breaking ties
/// between teams that would all arrive before the patient.
pub const TEAM_TRAVEL_WEIGHT: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AngioError {
    #[error("plan for patient {0} lacks an ambulance")]
    NoAmbulance(RequestId),
    #[error("plan for patient {0} lacks a hospital")]
    NoHospital(RequestId),
    #[error("plan for patient {0} lacks a cardiology team")]
    NoTeam(RequestId),
    #[error("benchmark delay must be positive, got {0}")]
    ZeroBenchmark(f64),
}

/// Scenario constants shared by both strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngioTiming {
    /// Call and decision time before an ambulance can be dispatched.
    pub call: Seconds,
    pub in_situ: Seconds,
    pub procedure: Seconds,
    pub ambulance_speed: f64,
}

impl Default for AngioTiming {
    fn default() -> Self {
        Self {
            call: 120.0,
            in_situ: 900.0,
            procedure: 3600.0,
            ambulance_speed: 60.0 / 3.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    Calling,
    AwaitingAmbulance,
    InSitu { until: Seconds },
    Transport,
    AtHospital { since: Seconds },
    InTreatment { until: Seconds },
    Treated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngioPatient {
    pub id: RequestId,
    pub origin: Point2D,
    /// Origin until picked up, then the carrying ambulance's position.
    pub position: Point2D,
    pub called_at: Seconds,
    pub stage: Stage,
    /// Hospital the patient is at or being carried to.
    pub hospital: Option<usize>,
    pub max_delay: Option<Seconds>,
}

impl AngioPatient {
    pub fn new(id: RequestId, origin: Point2D, called_at: Seconds) -> Self {
        Self {
            id,
            origin,
            position: origin,
            called_at,
            stage: Stage::Calling,
            hospital: None,
            max_delay: None,
        }
    }

    /// Patients still subject to hospital and team planning.
    fn awaiting_treatment(&self) -> bool {
        matches!(self.stage, Stage::InSitu { .. } | Stage::Transport | Stage::AtHospital { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hospital {
    pub id: usize,
    pub position: Point2D,
    /// Earliest time a team here can take a new patient.
    pub free_at: Seconds,
    /// Patients at the hospital waiting for their procedure, in arrival order.
    pub queue: Vec<RequestId>,
}

impl Hospital {
    pub fn new(id: usize, position: Point2D) -> Self {
        Self {
            id,
            position,
            free_at: 0.0,
            queue: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TeamState {
    Available,
    EnRoute { hospital: usize },
    Operating { hospital: usize, until: Seconds },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CardiologyTeam {
    pub id: usize,
    pub position: Point2D,
    pub speed: f64,
    pub state: TeamState,
    /// The hospital this team belongs to under the conventional procedure.
    pub home: usize,
}

impl CardiologyTeam {
    pub fn travel_time(&self, to: Point2D) -> Seconds {
        self.position.distance(&to) / self.speed
    }

    pub fn is_operating(&self) -> bool {
        matches!(self.state, TeamState::Operating { .. })
    }
}

/// Current commitments for every patient in the system.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Plan {
    pub ambulance: BTreeMap<RequestId, VehicleId>,
    pub hospital: BTreeMap<RequestId, usize>,
    pub team: BTreeMap<RequestId, usize>,
}

impl Plan {
    pub fn patient_for_team(&self, team: usize) -> Option<RequestId> {
        self.team.iter().find(|(_, c)| **c == team).map(|(p, _)| *p)
    }
}

/// Everything the planners look at.
#[derive(Debug, Clone, Copy)]
pub struct AngioSnapshot<'a> {
    pub now: Seconds,
    pub timing: &'a AngioTiming,
    pub ambulances: &'a [Vehicle],
    pub patients: &'a [AngioPatient],
    pub hospitals: &'a [Hospital],
    pub teams: &'a [CardiologyTeam],
    pub plan: &'a Plan,
}

/// Components of a patient's delay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub t1: Seconds,
    pub t2: Seconds,
    pub t3: Seconds,
    pub t4: Seconds,
    pub t5: Seconds,
    pub t6: Seconds,
}

impl DelayBreakdown {
    /// Team travel runs in parallel with transport and lab wait, so it only
    /// shows through the wait it causes.
    pub fn total(&self) -> Seconds {
        self.t1 + self.t2 + self.t3 + self.t4 + self.t6
    }

    /// Builds the breakdown from observed timestamps. `team_arrived` is when
    /// the treating team reached the hospital (or was already there).
    pub fn from_timeline(called: Seconds, timing: &AngioTiming, reached: Seconds, at_hospital: Seconds, team_arrived: Seconds, started: Seconds) -> Self {
        let in_situ_end = reached + timing.in_situ;
        Self {
            t1: timing.call,
            t2: (reached - called - timing.call).max(0.0),
            t3: timing.in_situ,
            t4: (at_hospital - in_situ_end).max(0.0),
            t5: (team_arrived - in_situ_end).max(0.0),
            t6: (started - at_hospital).max(0.0),
        }
    }
}

/// Expected durations behind one patient's plan. Transport and team travel
/// are measured from the end of in-situ care; `lab_wait` is how long the lab
/// stays busy after the patient arrives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanTimes {
    pub call: Seconds,
    pub ambulance_travel: Option<Seconds>,
    pub in_situ: Seconds,
    pub transport: Option<Seconds>,
    pub lab_wait: Seconds,
    pub team_travel: Option<Seconds>,
}

/// Expected delay of a fully planned patient.
pub fn patient_delay(p: RequestId, plan: &PlanTimes) -> Result<Seconds, AngioError> {
    let travel = plan.ambulance_travel.ok_or(AngioError::NoAmbulance(p))?;
    let transport = plan.transport.ok_or(AngioError::NoHospital(p))?;
    let team = plan.team_travel.ok_or(AngioError::NoTeam(p))?;
    let tail = (transport + plan.lab_wait).max(team);
    Ok(plan.call + travel + plan.in_situ + tail)
}

/// Relative improvement of `t_or` over the benchmark `t_fcfs`, in percent.
pub fn performance_p(t_fcfs: Seconds, t_or: Seconds) -> Result<f64, AngioError> {
    if !(t_fcfs > 0.0) {
        return Err(AngioError::ZeroBenchmark(t_fcfs));
    }
    Ok((t_fcfs - t_or) / t_fcfs * 100.0)
}

/// A cost matrix together with the ids behind its rows and columns.
#[derive(Debug, Clone)]
pub struct LevelProblem<R, C> {
    pub rows: Vec<R>,
    pub cols: Vec<C>,
    pub costs: Option<CostMatrix>,
}

impl<R: Copy, C: Copy> LevelProblem<R, C> {
    fn solve(&self) -> Vec<(R, C)> {
        let Some(costs) = &self.costs else {
            return Vec::new();
        };
        let a = solve_optimal(costs, exact_epsilon(costs.rows(), costs.cols())).expect("dense level costs are feasible");
        a.pairs().iter().map(|&(i, j)| (self.rows[i], self.cols[j])).collect()
    }
}

fn build<R, C>(rows: Vec<R>, cols: Vec<C>, f: impl FnMut(usize, usize) -> f64) -> LevelProblem<R, C> {
    let costs = if rows.is_empty() || cols.is_empty() {
        None
    } else {
        Some(CostMatrix::from_fn(rows.len(), cols.len(), f).expect("finite level costs"))
    };
    LevelProblem { rows, cols, costs }
}

/// Ambulances that are not carrying or treating anyone, against patients
/// waiting for an ambulance; cost is travel time.
pub fn level1_problem(s: &AngioSnapshot<'_>) -> LevelProblem<usize, usize> {
    let rows: Vec<usize> = (0..s.ambulances.len()).filter(|&i| !s.ambulances[i].state.is_occupied()).collect();
    let cols: Vec<usize> = (0..s.patients.len())
        .filter(|&j| s.patients[j].stage == Stage::AwaitingAmbulance)
        .collect();
    build(rows.clone(), cols.clone(), |i, j| s.ambulances[rows[i]].travel_time_to(s.patients[cols[j]].origin))
}

/// Time the patient would reach hospital `h` if sent there now.
fn patient_eta(s: &AngioSnapshot<'_>, p: &AngioPatient, h: usize) -> Seconds {
    let ride = p.position.distance(&s.hospitals[h].position) / s.timing.ambulance_speed;
    match p.stage {
        Stage::InSitu { until } => until.max(s.now) + ride,
        Stage::AtHospital { .. } => s.now,
        _ => s.now + ride,
    }
}

/// Start times of the next `slots` procedures that hospital `h` could take,
/// after the patients already queued there.
pub fn hospital_slots(s: &AngioSnapshot<'_>, h: usize, slots: usize) -> Vec<Seconds> {
    let here = s.hospitals[h].position;
    let mut free: BinaryHeap<Reverse<u64>> = s
        .teams
        .iter()
        .filter_map(|c| match c.state {
            TeamState::Operating { hospital, until } if hospital == h => Some(until.max(s.now)),
            TeamState::EnRoute { hospital } if hospital == h => Some(s.now),
            TeamState::Available if c.position.distance(&here) < 1.0 => Some(s.now),
            _ => None,
        })
        .map(|t| Reverse(t.to_bits()))
        .collect();
    if free.is_empty() {
        // A team can be brought in; the lab itself is free.
        free.push(Reverse(s.now.to_bits()));
    }
    let queued = s
        .patients
        .iter()
        .filter(|p| p.hospital == Some(h) && matches!(p.stage, Stage::AtHospital { .. }))
        .count();
    let mut out = Vec::with_capacity(slots);
    for k in 0..queued + slots {
        let Reverse(bits) = free.pop().expect("heap is never empty");
        let t = f64::from_bits(bits);
        if k >= queued {
            out.push(t);
        }
        free.push(Reverse((t + s.timing.procedure).to_bits()));
    }
    out
}

/// Patients after pickup (or in in-situ care) against hospital slots; cost
/// is the later of arrival and slot start, relative to now.
pub fn level2_problem(s: &AngioSnapshot<'_>) -> LevelProblem<usize, (usize, usize)> {
    let rows: Vec<usize> = (0..s.patients.len())
        .filter(|&j| matches!(s.patients[j].stage, Stage::InSitu { .. } | Stage::Transport))
        .collect();
    let k = rows.len();
    let slot_times: Vec<Vec<Seconds>> = (0..s.hospitals.len()).map(|h| hospital_slots(s, h, k)).collect();
    let cols: Vec<(usize, usize)> = (0..s.hospitals.len()).flat_map(|h| (0..k).map(move |slot| (h, slot))).collect();
    build(rows.clone(), cols.clone(), |i, j| {
        let (h, slot) = cols[j];
        patient_eta(s, &s.patients[rows[i]], h).max(slot_times[h][slot]) - s.now
    })
}

/// Teams that are not operating against planned patients; cost is the
/// later of team and patient arrival at the patient's hospital.
pub fn level3_problem(s: &AngioSnapshot<'_>, hospital_of: &BTreeMap<RequestId, usize>) -> LevelProblem<usize, usize> {
    let rows: Vec<usize> = (0..s.teams.len()).filter(|&c| !s.teams[c].is_operating()).collect();
    let cols: Vec<usize> = (0..s.patients.len())
        .filter(|&j| s.patients[j].awaiting_treatment() && hospital_of.contains_key(&s.patients[j].id))
        .collect();
    build(rows.clone(), cols.clone(), |i, j| {
        let p = &s.patients[cols[j]];
        let h = hospital_of[&p.id];
        let team_travel = s.teams[rows[i]].travel_time(s.hospitals[h].position);
        (s.now + team_travel).max(patient_eta(s, p, h)) - s.now + TEAM_TRAVEL_WEIGHT * team_travel
    })
}

/// Re-plans every level from scratch.
pub fn three_level_assign(s: &AngioSnapshot<'_>) -> Plan {
    let mut plan = Plan::default();
    for (a, p) in level1_problem(s).solve() {
        plan.ambulance.insert(s.patients[p].id, s.ambulances[a].id);
    }
    // Patients already being carried keep their ambulance.
    for a in s.ambulances {
        if let VehicleState::Occupied(r) = a.state {
            plan.ambulance.insert(r, a.id);
        }
    }

    for p in s.patients {
        if let (Stage::AtHospital { .. }, Some(h)) = (p.stage, p.hospital) {
            plan.hospital.insert(p.id, h);
        }
    }
    for (p, (h, _slot)) in level2_problem(s).solve() {
        plan.hospital.insert(s.patients[p].id, h);
    }

    for (c, p) in level3_problem(s, &plan.hospital).solve() {
        plan.team.insert(s.patients[p].id, s.teams[c].id);
    }
    plan
}

fn nearest_hospital(hospitals: &[Hospital], at: Point2D) -> Option<usize> {
    hospitals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.position.distance_sq(&at).total_cmp(&b.1.position.distance_sq(&at)))
        .map(|(h, _)| h)
}

/// The hospital's own team; the nearest team when it has none.
fn team_for(s: &AngioSnapshot<'_>, h: usize) -> Option<usize> {
    let here = s.hospitals[h].position;
    s.teams
        .iter()
        .filter(|c| c.home == h)
        .chain(s.teams.iter().filter(|_| !s.teams.iter().any(|c| c.home == h)))
        .min_by(|a, b| a.position.distance_sq(&here).total_cmp(&b.position.distance_sq(&here)).then(a.id.cmp(&b.id)))
        .map(|c| c.id)
}

/// Conventional procedure: keeps every existing commitment and extends the
/// plan for new patients in call order.
pub fn fcfs_benchmark_assign(s: &AngioSnapshot<'_>) -> Plan {
    let mut plan = s.plan.clone();
    let mut busy: Vec<bool> = s
        .ambulances
        .iter()
        .map(|a| !a.state.is_idle() || plan.ambulance.values().any(|v| *v == a.id))
        .collect();
    let mut order: Vec<&AngioPatient> = s.patients.iter().filter(|p| p.stage == Stage::AwaitingAmbulance).collect();
    order.sort_by(|a, b| a.called_at.total_cmp(&b.called_at).then(a.id.cmp(&b.id)));
    for p in order {
        if plan.ambulance.contains_key(&p.id) {
            continue;
        }
        let nearest = s
            .ambulances
            .iter()
            .enumerate()
            .filter(|(i, _)| !busy[*i])
            .min_by(|a, b| a.1.position.distance_sq(&p.origin).total_cmp(&b.1.position.distance_sq(&p.origin)));
        let Some((i, a)) = nearest else {
            break;
        };
        busy[i] = true;
        plan.ambulance.insert(p.id, a.id);
    }
    // Hospital and team follow the diagnosis on scene.
    let mut diagnosed: Vec<&AngioPatient> = s
        .patients
        .iter()
        .filter(|p| matches!(p.stage, Stage::InSitu { .. } | Stage::Transport) && !plan.hospital.contains_key(&p.id))
        .collect();
    diagnosed.sort_by(|a, b| a.called_at.total_cmp(&b.called_at).then(a.id.cmp(&b.id)));
    for p in diagnosed {
        if let Some(h) = nearest_hospital(s.hospitals, p.position) {
            plan.hospital.insert(p.id, h);
            if let Some(c) = team_for(s, h) {
                plan.team.insert(p.id, c);
            }
        }
    }
    plan
}
