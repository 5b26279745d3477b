//! Taxi payments, re-assignment compensations and the mediator that
//! proposes compensated re-assignments to self-interested drivers.
//!
//! Distances are meters internally; money is computed per kilometer.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{exact_epsilon, nearest_rule_points, solve_optimal, CostMatrix, NearestMode};
use crate::model::{Euros, Meters, Point2D, RequestId, Seconds, ServiceRequest, Vehicle, VehicleId, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconomicsError {
    #[error("fare ({fare}) must exceed vehicle cost ({vcost}), which must be positive")]
    Fare { fare: f64, vcost: f64 },
    #[error("fixed cost must be non-negative, got {0}")]
    FixedCost(f64),
    #[error("gamma must be positive, got {0}")]
    Gamma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicParams {
    pub fcost: Euros,
    pub fare_per_km: Euros,
    pub vcost_per_km: Euros,
    /// Meters of pickup distance one euro of compensation is worth.
    pub gamma_m_per_eur: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            fcost: 2.4,
            fare_per_km: 1.05,
            vcost_per_km: 0.2,
            gamma_m_per_eur: 1.0 / 0.00085,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), EconomicsError> {
        if !(self.vcost_per_km > 0.0 && self.fare_per_km > self.vcost_per_km && self.fare_per_km.is_finite()) {
            return Err(EconomicsError::Fare {
                fare: self.fare_per_km,
                vcost: self.vcost_per_km,
            });
        }
        if !(self.fcost >= 0.0 && self.fcost.is_finite()) {
            return Err(EconomicsError::FixedCost(self.fcost));
        }
        if !(self.gamma_m_per_eur > 0.0 && self.gamma_m_per_eur.is_finite()) {
            return Err(EconomicsError::Gamma(self.gamma_m_per_eur));
        }
        Ok(())
    }

    /// Net earning per kilometer driven with a client.
    pub fn margin_per_km(&self) -> Euros {
        self.fare_per_km - self.vcost_per_km
    }
}

/// Distances a driver covers for one service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Legs {
    /// From the driver's position to the pickup point.
    pub pickup_m: Meters,
    /// From pickup to drop-off.
    pub trip_m: Meters,
}

impl Legs {
    pub fn new(pickup_m: Meters, trip_m: Meters) -> Self {
        Self { pickup_m, trip_m }
    }

    pub fn between(vehicle: Point2D, request: &ServiceRequest) -> Self {
        Self {
            pickup_m: vehicle.distance(&request.origin),
            trip_m: request.trip_length(),
        }
    }

    pub fn total_m(&self) -> Meters {
        self.pickup_m + self.trip_m
    }
}

pub fn price(params: &EconomicParams, trip_m: Meters) -> Euros {
    params.fcost + params.fare_per_km * trip_m / 1000.0
}

/// Client payment minus the cost of driving to the client and to the
/// destination. Negative for long deadhead legs.
pub fn earnings(params: &EconomicParams, legs: Legs) -> Euros {
    price(params, legs.trip_m) - params.vcost_per_km * legs.total_m() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompensationCase {
    /// The new service is longer in total: the driver keeps the old income
    /// plus the usual margin on the extra distance.
    One,
    /// The new service is not longer: the driver keeps the old income.
    Two,
}

impl CompensationCase {
    pub fn number(&self) -> u8 {
        match self {
            CompensationCase::One => 1,
            CompensationCase::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationQuote {
    pub case: CompensationCase,
    /// Paid to the driver; negative amounts are paid by the driver.
    pub c: Euros,
    pub earn_current: Euros,
    pub earn_new: Euros,
    pub effective_income_new: Euros,
}

/// Compensation that makes a rational driver accept switching from the
/// current service to a new one.
pub fn compensation(params: &EconomicParams, current: Legs, new: Legs) -> CompensationQuote {
    let earn_current = earnings(params, current);
    let earn_new = earnings(params, new);
    let (td_k, td_j) = (current.total_m(), new.total_m());
    let (case, target) = if td_k < td_j {
        (CompensationCase::One, earn_current + (td_j - td_k) / 1000.0 * params.margin_per_km())
    } else {
        (CompensationCase::Two, earn_current)
    };
    let c = target - earn_new;
    CompensationQuote {
        case,
        c,
        earn_current,
        earn_new,
        effective_income_new: earn_new + c,
    }
}

/// One committed re-assignment, as exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationRecord {
    pub time_s: Seconds,
    pub vehicle: usize,
    pub old_request: usize,
    pub new_request: usize,
    pub case: u8,
    pub c_eur: Euros,
    pub ledger_after: Euros,
}

/// The mediator's account.
#[derive(Debug, Clone, PartialEq)]
pub struct MediatorLedger {
    balance: Euros,
    initial: Euros,
    lowest: Euros,
    log: Vec<CompensationRecord>,
    /// Plans that changed some assignment but failed the balance check.
    pub rejected_plans: usize,
    /// Of those, plans that would have cost nothing.
    pub rejected_free_plans: usize,
}

impl Default for MediatorLedger {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl MediatorLedger {
    pub fn new(initial: Euros) -> Self {
        Self {
            balance: initial,
            initial,
            lowest: initial,
            log: Vec::new(),
            rejected_plans: 0,
            rejected_free_plans: 0,
        }
    }

    pub fn balance(&self) -> Euros {
        self.balance
    }

    pub fn initial(&self) -> Euros {
        self.initial
    }

    /// Lowest balance ever held.
    pub fn lowest(&self) -> Euros {
        self.lowest
    }

    pub fn log(&self) -> &[CompensationRecord] {
        &self.log
    }

    /// Income other than compensations, such as a retained fixed cost.
    pub fn credit(&mut self, amount: Euros) {
        self.balance += amount;
        self.lowest = self.lowest.min(self.balance);
    }

    fn debit(&mut self, amount: Euros) {
        self.balance -= amount;
        self.lowest = self.lowest.min(self.balance);
    }

    pub fn write_log_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.log.is_empty() {
            wtr.write_record(["time_s", "vehicle", "old_request", "new_request", "case", "c_eur", "ledger_after"])?;
        }
        for r in &self.log {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A vehicle's move from one service to another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reassignment {
    pub vehicle: VehicleId,
    pub old: RequestId,
    pub new: RequestId,
    pub quote: CompensationQuote,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DynraOutcome {
    /// Final assignment of every vehicle heading to a pickup.
    pub assignment: BTreeMap<VehicleId, RequestId>,
    /// Idle vehicles that received a service this step.
    pub newly_assigned: Vec<(VehicleId, RequestId)>,
    /// Committed moves of previously assigned vehicles.
    pub reassigned: Vec<Reassignment>,
    /// Total compensation of the optimal plan, committed or not.
    pub c_o: Euros,
    pub committed: bool,
}

/// One mediator round.
///
/// 1. Pending requests go to idle vehicles by the nearest-vehicle rule.
/// 2. All assigned vehicles and their requests are re-matched, minimizing
///    pickup distance plus `gamma` times the compensation each move costs.
///    Vehicles assigned in step 1 move for free.
/// 3. The plan is committed only if the ledger stays strictly positive
///    after paying its total compensation.
///
/// `waiting` holds every request not yet picked up; vehicles in
/// [`VehicleState::Assigned`] must reference requests in it.
pub fn dynra_step(now: Seconds, vehicles: &[Vehicle], waiting: &[ServiceRequest], params: &EconomicParams, ledger: &mut MediatorLedger) -> DynraOutcome {
    let by_id: BTreeMap<RequestId, &ServiceRequest> = waiting.iter().map(|r| (r.id, r)).collect();
    let mut a_c: BTreeMap<VehicleId, RequestId> = BTreeMap::new();
    let mut prior: BTreeMap<VehicleId, RequestId> = BTreeMap::new();
    let mut position: BTreeMap<VehicleId, Point2D> = BTreeMap::new();
    for v in vehicles {
        position.insert(v.id, v.position);
        if let VehicleState::Assigned(r) = v.state {
            a_c.insert(v.id, r);
            prior.insert(v.id, r);
        }
    }

    let taken: BTreeSet<RequestId> = a_c.values().copied().collect();
    let pending: Vec<&ServiceRequest> = waiting.iter().filter(|r| !taken.contains(&r.id)).collect();
    let idle: Vec<&Vehicle> = vehicles.iter().filter(|v| v.state.is_idle()).collect();
    let mut outcome = DynraOutcome::default();
    let greedy = nearest_rule_points(
        &idle.iter().map(|v| v.position).collect::<Vec<_>>(),
        &pending.iter().map(|r| (r.origin, r.created_at)).collect::<Vec<_>>(),
        NearestMode::Nvnr,
    );
    for &(vi, ri) in greedy.pairs() {
        a_c.insert(idle[vi].id, pending[ri].id);
    }

    let rows: Vec<VehicleId> = a_c.keys().copied().collect();
    let cols: Vec<RequestId> = a_c.values().copied().collect();
    let mut a_n = a_c.clone();
    let mut quotes: BTreeMap<VehicleId, CompensationQuote> = BTreeMap::new();
    if !rows.is_empty() {
        let quote = |v: VehicleId, s: RequestId| -> Option<CompensationQuote> {
            let old = *prior.get(&v)?;
            (old != s).then(|| {
                compensation(
                    params,
                    Legs::between(position[&v], by_id[&old]),
                    Legs::between(position[&v], by_id[&s]),
                )
            })
        };
        let row_pos: Vec<Point2D> = rows.iter().map(|v| position[v]).collect();
        let row_old: Vec<Option<&ServiceRequest>> = rows.iter().map(|v| prior.get(v).map(|r| by_id[r])).collect();
        let col_req: Vec<&ServiceRequest> = cols.iter().map(|r| by_id[r]).collect();
        let costs = CostMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            let s = col_req[j];
            let comp = match row_old[i] {
                Some(old) if old.id != s.id => compensation(params, Legs::between(row_pos[i], old), Legs::between(row_pos[i], s)).c,
                _ => 0.0,
            };
            row_pos[i].distance(&s.origin) + params.gamma_m_per_eur * comp
        })
        .expect("finite costs");
        let solved = solve_optimal(&costs, exact_epsilon(costs.rows(), costs.cols())).expect("square instance is feasible");
        for &(i, j) in solved.pairs() {
            a_n.insert(rows[i], cols[j]);
            if let Some(q) = quote(rows[i], cols[j]) {
                quotes.insert(rows[i], q);
            }
        }
    }

    let c_o: Euros = quotes.values().map(|q| q.c).sum();
    outcome.c_o = c_o;
    let changed = a_n != a_c;
    let final_assignment = if !changed {
        outcome.committed = true;
        a_c
    } else if ledger.balance() - c_o > 0.0 {
        ledger.debit(c_o);
        outcome.committed = true;
        for (v, q) in &quotes {
            outcome.reassigned.push(Reassignment {
                vehicle: *v,
                old: prior[v],
                new: a_n[v],
                quote: *q,
            });
        }
        // Log entries carry the balance after the whole plan is paid.
        for r in &outcome.reassigned {
            ledger.log.push(CompensationRecord {
                time_s: now,
                vehicle: r.vehicle.0,
                old_request: r.old.0,
                new_request: r.new.0,
                case: r.quote.case.number(),
                c_eur: r.quote.c,
                ledger_after: ledger.balance(),
            });
        }
        a_n
    } else {
        ledger.rejected_plans += 1;
        if c_o == 0.0 {
            ledger.rejected_free_plans += 1;
        }
        a_c
    };

    outcome.newly_assigned = final_assignment
        .iter()
        .filter(|(v, _)| !prior.contains_key(v))
        .map(|(v, r)| (*v, *r))
        .collect();
    outcome.assignment = final_assignment;
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::brute_force_optimal;
    use crate::model::VehicleKind;
    use proptest::prelude::*;

    fn p() -> EconomicParams {
        EconomicParams::default()
    }

    fn km(pickup: f64, trip: f64) -> Legs {
        Legs::new(pickup * 1000.0, trip * 1000.0)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn price_examples() {
        assert!(close(price(&p(), 0.0), 2.40));
        assert!(close(price(&p(), 3000.0), 5.55));
        assert!(close(price(&p(), 10_000.0), 12.90));
    }

    #[test]
    fn earnings_examples() {
        assert!(close(earnings(&p(), km(1.0, 5.0)), 6.45));
        assert!(close(earnings(&p(), km(0.0, 0.0)), 2.40));
        assert!(close(earnings(&p(), km(50.0, 1.0)), -6.75));
    }

    #[test]
    fn compensation_examples() {
        let q = compensation(&p(), km(1.0, 5.0), km(2.0, 7.0));
        assert_eq!(q.case, CompensationCase::One);
        assert!(close(q.c, 1.05), "{}", q.c);
        assert!(close(q.effective_income_new, 9.00));

        let q = compensation(&p(), km(1.0, 5.0), km(0.5, 5.0));
        assert_eq!(q.case, CompensationCase::Two);
        assert!(close(q.c, -0.10));
        assert!(close(q.c, 0.2 * (0.5 - 1.0)));

        let q = compensation(&p(), km(1.0, 5.0), km(1.0, 5.0));
        assert_eq!(q.case, CompensationCase::Two);
        assert_eq!(q.c, 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(p().validate().is_ok());
        let bad = EconomicParams { fare_per_km: 0.1, ..p() };
        assert!(bad.validate().is_err());
        let bad = EconomicParams { gamma_m_per_eur: 0.0, ..p() };
        assert!(bad.validate().is_err());
        let bad = EconomicParams { fcost: -1.0, ..p() };
        assert!(bad.validate().is_err());
    }

    fn legs() -> impl Strategy<Value = Legs> {
        (0.0..20_000.0f64, 0.0..20_000.0f64).prop_map(|(a, b)| Legs::new(a, b))
    }

    proptest! {
        #[test]
        fn drivers_never_lose(cur in legs(), new in legs()) {
            let q = compensation(&p(), cur, new);
            prop_assert!((q.effective_income_new - (q.earn_new + q.c)).abs() < 1e-9);
            match q.case {
                CompensationCase::Two => prop_assert!((q.effective_income_new - q.earn_current).abs() < 1e-9),
                CompensationCase::One => {
                    let excess = (new.total_m() - cur.total_m()) / 1000.0 * p().margin_per_km();
                    prop_assert!((q.effective_income_new - q.earn_current - excess).abs() < 1e-9);
                    prop_assert!(excess > 0.0);
                }
            }
        }

        #[test]
        fn same_service_costs_nothing(l in legs()) {
            prop_assert_eq!(compensation(&p(), l, l).c, 0.0);
        }
    }

    fn taxi(id: usize, x: f64, y: f64) -> Vehicle {
        Vehicle::new(VehicleId(id), Point2D::new(x, y), 17.0 / 3.6, VehicleKind::Taxi).unwrap()
    }

    fn req(id: usize, x: f64, y: f64, dest: (f64, f64), t: f64) -> ServiceRequest {
        ServiceRequest::new(RequestId(id), Point2D::new(x, y), t).with_destination(Point2D::new(dest.0, dest.1))
    }

    #[test]
    fn without_assigned_vehicles_result_is_nvnr() {
        let vehicles = [taxi(0, 0.0, 0.0), taxi(1, 5000.0, 0.0)];
        let waiting = [req(0, 100.0, 0.0, (100.0, 3000.0), 0.0), req(1, 4000.0, 0.0, (4000.0, 3000.0), 1.0)];
        let mut ledger = MediatorLedger::default();
        let out = dynra_step(0.0, &vehicles, &waiting, &p(), &mut ledger);
        assert_eq!(out.c_o, 0.0);
        assert!(out.committed);
        assert!(out.reassigned.is_empty());
        assert_eq!(out.newly_assigned, vec![(VehicleId(0), RequestId(0)), (VehicleId(1), RequestId(1))]);
        assert_eq!(ledger.balance(), 0.0);
    }

    /// Taxi 0 heads to request 0 four kilometers away. A new request appears
    /// next to it, and an idle taxi sits next to request 0.
    fn crossing() -> ([Vehicle; 2], [ServiceRequest; 2]) {
        let mut t0 = taxi(0, 0.0, 0.0);
        t0.state = VehicleState::Assigned(RequestId(0));
        let t1 = taxi(1, 4200.0, 0.0);
        let waiting = [req(0, 4000.0, 0.0, (4000.0, 3000.0), 0.0), req(1, 200.0, 0.0, (200.0, 3000.0), 10.0)];
        ([t0, t1], waiting)
    }

    #[test]
    fn profitable_swap_is_committed_and_debited() {
        let (vehicles, waiting) = crossing();
        // Step 1 alone would send idle taxi 1 to the new request: 4 km pickup.
        let mut ledger = MediatorLedger::new(5.0);
        let out = dynra_step(20.0, &vehicles, &waiting, &p(), &mut ledger);
        assert!(out.committed);
        assert_eq!(out.assignment[&VehicleId(0)], RequestId(1));
        assert_eq!(out.assignment[&VehicleId(1)], RequestId(0));
        // Same trip length, 3.8 km shorter pickup: the driver pays vcost on it.
        let expected = 0.2 * (0.2 - 4.0);
        assert!(close(out.c_o, expected), "{}", out.c_o);
        assert!(close(ledger.balance(), 5.0 - expected));
        assert_eq!(ledger.log().len(), 1);
        assert!(close(ledger.log()[0].ledger_after, ledger.balance()));
        assert!(ledger.lowest() >= 0.0);
    }

    #[test]
    fn costly_swap_is_rejected_without_funds() {
        // Taxi 0 gets a slightly longer pickup so that idle taxi 1, parked
        // next to request 0, can take it; taxi 0 must be paid for the detour.
        let mut t0 = taxi(0, 0.0, 0.0);
        t0.state = VehicleState::Assigned(RequestId(0));
        let vehicles = [t0, taxi(1, 1000.0, 10.0)];
        let waiting = [req(0, 1000.0, 0.0, (1000.0, 1000.0), 0.0), req(1, -1100.0, 0.0, (-1100.0, 1000.0), 10.0)];
        let mut broke = MediatorLedger::new(0.0);
        let out = dynra_step(20.0, &vehicles, &waiting, &p(), &mut broke);
        assert!(close(out.c_o, 1.05 * 0.1), "{}", out.c_o);
        assert!(!out.committed);
        assert_eq!(out.assignment[&VehicleId(0)], RequestId(0));
        assert_eq!(out.assignment[&VehicleId(1)], RequestId(1));
        assert_eq!(broke.balance(), 0.0);
        assert_eq!(broke.rejected_plans, 1);

        let mut rich = MediatorLedger::new(100.0);
        let out = dynra_step(20.0, &vehicles, &waiting, &p(), &mut rich);
        assert!(out.committed);
        assert_eq!(out.assignment[&VehicleId(0)], RequestId(1));
        assert!(close(rich.balance(), 100.0 - out.c_o));
    }

    #[test]
    fn zero_gamma_reduces_to_distance_optimal() {
        let params = EconomicParams {
            gamma_m_per_eur: 1e-12,
            ..p()
        };
        let mut t0 = taxi(0, 0.0, 0.0);
        t0.state = VehicleState::Assigned(RequestId(0));
        let mut t2 = taxi(2, 9000.0, 9000.0);
        t2.state = VehicleState::Assigned(RequestId(2));
        let vehicles = [t0, taxi(1, 4200.0, 0.0), t2];
        let waiting = [
            req(0, 4000.0, 0.0, (0.0, 0.0), 0.0),
            req(1, 200.0, 0.0, (9000.0, 0.0), 10.0),
            req(2, 8000.0, 9000.0, (0.0, 9000.0), 0.0),
        ];
        let mut ledger = MediatorLedger::new(1e9);
        let out = dynra_step(20.0, &vehicles, &waiting, &params, &mut ledger);
        let total: f64 = out
            .assignment
            .iter()
            .map(|(v, r)| vehicles.iter().find(|x| x.id == *v).unwrap().position.distance(&waiting[r.0].origin))
            .sum();
        let costs = CostMatrix::from_fn(3, 3, |i, j| vehicles[i].position.distance(&waiting[j].origin)).unwrap();
        let best = brute_force_optimal(&costs).unwrap().total_cost;
        assert!((total - best).abs() < 0.01, "{total} vs {best}");
    }

    #[test]
    fn committed_moves_keep_drivers_whole() {
        let (vehicles, waiting) = crossing();
        let mut ledger = MediatorLedger::new(5.0);
        let out = dynra_step(20.0, &vehicles, &waiting, &p(), &mut ledger);
        for r in &out.reassigned {
            assert!(r.quote.effective_income_new >= r.quote.earn_current - 1e-9);
        }
    }

    #[test]
    fn log_csv_has_fixed_header() {
        let (vehicles, waiting) = crossing();
        let mut ledger = MediatorLedger::new(5.0);
        let mut empty = Vec::new();
        ledger.write_log_csv(&mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "time_s,vehicle,old_request,new_request,case,c_eur,ledger_after\n");
        dynra_step(20.0, &vehicles, &waiting, &p(), &mut ledger);
        let mut buf = Vec::new();
        ledger.write_log_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time_s,vehicle,old_request,new_request,case,c_eur,ledger_after"));
        assert!(lines.next().unwrap().starts_with("20.0,0,0,1,2,"));
    }
}
