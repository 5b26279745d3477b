//! Ambulance dispatch: the fixed-station FCFS baseline and dynamic
//! re-assignment with density-driven redeployment.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::assignment::{exact_epsilon, solve_optimal, CostMatrix, NearestMode};
use crate::model::{Meters, Point2D, RequestId, Seconds, ServiceRequest, Vehicle, VehicleId, VehicleState};
use crate::redeployment::{recommend_positions, DensityGrid};

/// Something that happened since the last dispatch decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EmsEvent {
    NewPatient(RequestId),
    AmbulanceFinished(VehicleId),
    Deassigned(VehicleId),
    IdleToAssigned(VehicleId),
    DistributionChange(usize),
}

impl EmsEvent {
    /// Events that make the current patient assignment stale.
    pub fn triggers_assignment(&self) -> bool {
        matches!(self, EmsEvent::NewPatient(_) | EmsEvent::AmbulanceFinished(_))
    }

    /// Events that make the idle ambulances' positions stale.
    pub fn triggers_redeployment(&self) -> bool {
        !matches!(self, EmsEvent::NewPatient(_))
    }
}

/// Instruction for one ambulance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VehicleOrder {
    /// Drive to this patient, replacing any previous assignment.
    Dispatch(RequestId),
    /// Drop the current assignment; optionally head for a new idle position.
    Release { reposition: Option<Point2D> },
    /// Idle vehicle: drive to this point.
    Reposition(Point2D),
    /// Idle vehicle: stop where it is.
    Hold,
}

/// Orders keyed by vehicle, so a vehicle can never receive two.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DispatchDecision {
    pub orders: BTreeMap<VehicleId, VehicleOrder>,
}

impl DispatchDecision {
    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// `(vehicle, new request)` for every vehicle whose assignment changed.
    pub fn assignment_changes(&self) -> Vec<(VehicleId, Option<RequestId>)> {
        self.orders
            .iter()
            .filter_map(|(v, o)| match o {
                VehicleOrder::Dispatch(r) => Some((*v, Some(*r))),
                VehicleOrder::Release { .. } => Some((*v, None)),
                _ => None,
            })
            .collect()
    }

    pub fn redeploy_targets(&self) -> BTreeMap<VehicleId, Point2D> {
        self.orders
            .iter()
            .filter_map(|(v, o)| match o {
                VehicleOrder::Reposition(p) | VehicleOrder::Release { reposition: Some(p) } => Some((*v, *p)),
                _ => None,
            })
            .collect()
    }
}

/// Read-only view of the fleet and the patients still waiting for an
/// ambulance to reach them.
#[derive(Debug, Clone, Copy)]
pub struct EmsState<'a> {
    pub now: Seconds,
    pub ambulances: &'a [Vehicle],
    pub waiting: &'a [ServiceRequest],
}

impl EmsState<'_> {
    fn assigned_requests(&self) -> BTreeSet<RequestId> {
        self.ambulances
            .iter()
            .filter_map(|a| match a.state {
                VehicleState::Assigned(r) => Some(r),
                _ => None,
            })
            .collect()
    }
}

/// Redeployment settings for the dynamic strategy.
#[derive(Debug, Clone, Copy)]
pub struct RedeployParams<'g> {
    pub grid: &'g DensityGrid,
    pub move_threshold: Meters,
}

/// Fixed-station baseline. Unassigned patients take the nearest idle
/// ambulance in call order; assignments are never revised; a freed ambulance
/// without a new patient returns to its station.
pub fn static_dispatch(state: &EmsState<'_>, events: &[EmsEvent]) -> DispatchDecision {
    let mut decision = DispatchDecision::default();
    if !events.iter().any(EmsEvent::triggers_assignment) {
        return decision;
    }
    let taken = state.assigned_requests();
    let queue: Vec<&ServiceRequest> = state.waiting.iter().filter(|r| !taken.contains(&r.id)).collect();
    let idle: Vec<&Vehicle> = state.ambulances.iter().filter(|a| a.state.is_idle()).collect();

    let idle_pos: Vec<Point2D> = idle.iter().map(|a| a.position).collect();
    let reqs: Vec<(Point2D, Seconds)> = queue.iter().map(|r| (r.origin, r.created_at)).collect();
    let greedy = crate::assignment::nearest_rule_points(&idle_pos, &reqs, NearestMode::Fcfs);
    for &(vi, ri) in greedy.pairs() {
        decision.orders.insert(idle[vi].id, VehicleOrder::Dispatch(queue[ri].id));
    }

    for e in events {
        if let EmsEvent::AmbulanceFinished(v) = e {
            if decision.orders.contains_key(v) {
                continue;
            }
            if let Some(home) = state.ambulances.iter().find(|a| a.id == *v).and_then(|a| a.home_station) {
                decision.orders.insert(*v, VehicleOrder::Reposition(home));
            }
        }
    }
    decision
}

/// Optimal assignment of every non-occupied ambulance to the waiting
/// patients, minimizing total expected travel time. Returns the patient for
/// each ambulance index (`None` when left free).
pub fn optimal_ambulance_assignment(ambulances: &[&Vehicle], waiting: &[ServiceRequest]) -> Vec<Option<usize>> {
    let mut out = vec![None; ambulances.len()];
    if ambulances.is_empty() || waiting.is_empty() {
        return out;
    }
    let costs = CostMatrix::from_fn(ambulances.len(), waiting.len(), |i, j| ambulances[i].travel_time_to(waiting[j].origin))
        .expect("travel times are finite");
    let a = solve_optimal(&costs, exact_epsilon(costs.rows(), costs.cols())).expect("complete bipartite graph is feasible");
    for &(i, j) in a.pairs() {
        out[i] = Some(j);
    }
    out
}

/// Dynamic re-assignment and redeployment.
///
/// Patient-related events re-solve the assignment over all non-occupied
/// ambulances, so a dispatched ambulance can be re-targeted or released.
/// Releases, new dispatches of idle ambulances, finished missions and
/// density changes recompute the idle positions with Lloyd's algorithm.
pub fn drard_dispatch(state: &EmsState<'_>, events: &[EmsEvent], redeploy: RedeployParams<'_>) -> DispatchDecision {
    let mut decision = DispatchDecision::default();
    let mut redeploy_needed = events.iter().any(EmsEvent::triggers_redeployment);
    // Post-decision state of each ambulance.
    let mut next: BTreeMap<VehicleId, VehicleState> = state.ambulances.iter().map(|a| (a.id, a.state)).collect();

    if events.iter().any(EmsEvent::triggers_assignment) {
        let free: Vec<&Vehicle> = state.ambulances.iter().filter(|a| !a.state.is_occupied()).collect();
        let plan = optimal_ambulance_assignment(&free, state.waiting);
        for (a, target) in free.iter().zip(plan) {
            let new_req = target.map(|j| state.waiting[j].id);
            match (a.state, new_req) {
                (VehicleState::Assigned(old), Some(r)) if old == r => {}
                (VehicleState::Idle, None) => {}
                (prev, Some(r)) => {
                    decision.orders.insert(a.id, VehicleOrder::Dispatch(r));
                    next.insert(a.id, VehicleState::Assigned(r));
                    if prev.is_idle() {
                        redeploy_needed = true;
                    }
                }
                (_, None) => {
                    decision.orders.insert(a.id, VehicleOrder::Release { reposition: None });
                    next.insert(a.id, VehicleState::Idle);
                    redeploy_needed = true;
                }
            }
        }
    }

    if redeploy_needed {
        let idle: Vec<(VehicleId, Point2D)> = state
            .ambulances
            .iter()
            .filter(|a| next[&a.id].is_idle())
            .map(|a| (a.id, a.position))
            .collect();
        let targets = recommend_positions(&idle, redeploy.grid, redeploy.move_threshold);
        for (id, _) in &idle {
            let target = targets.get(id).copied();
            let order = match decision.orders.get(id) {
                Some(VehicleOrder::Release { .. }) => VehicleOrder::Release { reposition: target },
                _ => target.map_or(VehicleOrder::Hold, VehicleOrder::Reposition),
            };
            decision.orders.insert(*id, order);
        }
    }
    decision
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("request {0} was never reached")]
    Unserved(RequestId),
    #[error("request {0} reached before it was created")]
    BeforeCreation(RequestId),
}

/// Time from the start of the call until an ambulance reaches the patient.
/// The call itself is part of the response; re-assignments do not reset it.
pub fn response_time(request: &ServiceRequest, reached_at: Option<Seconds>) -> Result<Seconds, ResponseError> {
    let t = reached_at.ok_or(ResponseError::Unserved(request.id))?;
    if t < request.created_at {
        return Err(ResponseError::BeforeCreation(request.id));
    }
    Ok(t - request.created_at)
}
