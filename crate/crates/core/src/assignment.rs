//! One-to-one assignment between vehicles (rows) and requests (columns).
//!
//! [`solve_optimal`] is a forward auction with epsilon scaling, run on costs
//! rounded to integers at 1/1000 resolution. With integer costs and a final
//! bidding increment below `1/N` the auction terminates at an exact optimum.
//! [`brute_force_optimal`] enumerates every maximum matching and serves as
//! the test oracle. [`nearest_rule`] implements the greedy FCFS and NVNR
//! dispatch rules.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::model::{euclidean_distance, Point2D, Seconds, ServiceRequest, Vehicle};

/// Resolution used when rounding real costs to integers (1/1000 of a unit).
pub const COST_SCALE: f64 = 1000.0;

const BRUTE_FORCE_MAX_SMALL: usize = 8;
const BRUTE_FORCE_MAX_LARGE: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("cost matrix needs at least one row and one column")]
    Empty,
    #[error("cost matrix {rows}x{cols} does not match {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("cost entry ({row}, {col}) is NaN or negative infinity")]
    InvalidEntry { row: usize, col: usize },
    #[error("no matching of size {needed} among finite entries (largest has {found})")]
    Infeasible { needed: usize, found: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("brute force supports min side <= {BRUTE_FORCE_MAX_SMALL} and max side <= {BRUTE_FORCE_MAX_LARGE}, got {rows}x{cols}")]
    TooLarge { rows: usize, cols: usize },
}

/// Dense row-major cost matrix. `f64::INFINITY` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssignmentError> {
        if rows == 0 || cols == 0 {
            return Err(AssignmentError::Empty);
        }
        if data.len() != rows * cols {
            return Err(AssignmentError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
            return Err(AssignmentError::InvalidEntry {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(AssignmentError::Shape {
                rows: n,
                cols: m,
                len: rows.iter().map(Vec::len).sum(),
            });
        }
        Self::new(n, m, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, AssignmentError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|c| c.is_finite())
    }
}

/// A set of `(row, col)` pairs in which every index appears at most once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    /// Builds an assignment, sorting pairs by row and summing their costs.
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>, costs: &CostMatrix) -> Self {
        pairs.sort_unstable();
        let total_cost = pairs.iter().map(|&(i, j)| costs.get(i, j)).sum();
        Self { pairs, total_cost }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }

    pub fn row_for_col(&self, col: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == col).map(|p| p.0)
    }

    /// True when no row and no column appears twice.
    pub fn is_one_to_one(&self) -> bool {
        let rows: BTreeSet<_> = self.pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<_> = self.pairs.iter().map(|p| p.1).collect();
        rows.len() == self.pairs.len() && cols.len() == self.pairs.len()
    }
}

/// Minimum-cost maximum-cardinality assignment via the auction algorithm.
///
/// `epsilon` bounds the final bidding increment in units of the integerized
/// costs. The solver always finishes with an increment no larger than
/// `1/(N+1)`, where `N` is the padded problem size, so integerized costs are
/// solved exactly regardless of how loose `epsilon` is.
pub fn solve_optimal(costs: &CostMatrix, epsilon: f64) -> Result<Assignment, AssignmentError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(AssignmentError::InvalidEpsilon(epsilon));
    }
    let k = costs.rows.min(costs.cols);
    if !costs.all_finite() {
        let found = max_cardinality(costs);
        if found < k {
            return Err(AssignmentError::Infeasible { needed: k, found });
        }
    }

    // Orient so that the small side bids.
    let transposed = costs.rows > costs.cols;
    let oriented;
    let view = if transposed {
        oriented = costs.transpose();
        &oriented
    } else {
        costs
    };

    // Each small-side row only ever needs one of its k cheapest columns in
    // some optimal solution, so the large side shrinks to their union.
    let kept_cols: Vec<usize> = if view.cols > k {
        let mut keep = BTreeSet::new();
        let mut order: Vec<usize> = Vec::with_capacity(view.cols);
        for i in 0..view.rows {
            order.clear();
            order.extend((0..view.cols).filter(|&j| view.get(i, j).is_finite()));
            order.sort_by(|&a, &b| view.get(i, a).total_cmp(&view.get(i, b)).then(a.cmp(&b)));
            keep.extend(order.iter().take(k).copied());
        }
        keep.into_iter().collect()
    } else {
        (0..view.cols).collect()
    };

    let n_real = view.rows;
    let size = kept_cols.len();
    let int_costs = integerize(view, &kept_cols);
    let matched = auction_square(&int_costs, n_real, size, epsilon);

    let mut pairs = Vec::with_capacity(k);
    for (person, &object) in matched.iter().enumerate().take(n_real) {
        let col = kept_cols[object];
        if transposed {
            pairs.push((col, person));
        } else {
            pairs.push((person, col));
        }
    }
    Ok(Assignment::from_pairs(pairs, costs))
}

/// Rounds the kept sub-matrix to non-negative integers; forbidden entries get
/// a cost larger than any all-finite solution.
fn integerize(view: &CostMatrix, kept_cols: &[usize]) -> Vec<i64> {
    let n = view.rows;
    let m = kept_cols.len();
    let mut min = i64::MAX;
    let mut raw = vec![None; n * m];
    for i in 0..n {
        for (jj, &j) in kept_cols.iter().enumerate() {
            let c = view.get(i, j);
            if c.is_finite() {
                let v = (c * COST_SCALE).round() as i64;
                min = min.min(v);
                raw[i * m + jj] = Some(v);
            }
        }
    }
    if min == i64::MAX {
        min = 0;
    }
    let max_shifted = raw.iter().flatten().map(|v| v - min).max().unwrap_or(0);
    let forbidden = max_shifted.saturating_mul(n as i64 + 1).saturating_add(1);
    raw.into_iter()
        .map(|v| v.map_or(forbidden, |v| v - min))
        .collect()
}

/// Forward auction with epsilon scaling on an `n_real x size` integer cost
/// matrix, padded to `size x size` with zero-cost dummy rows. Returns the
/// object index held by each person.
fn auction_square(costs: &[i64], n_real: usize, size: usize, epsilon: f64) -> Vec<usize> {
    if size == 1 {
        return vec![0];
    }
    // Scaling benefits by `scale` turns an increment of 1 into 1/scale of a
    // cost unit.
    let min_scale = size as i64 + 1;
    let wanted = (1.0 / epsilon).ceil();
    let scale = if wanted.is_finite() && wanted < 1e6 {
        min_scale.max(wanted as i64)
    } else {
        min_scale.max(1_000_000)
    };
    let max_cost = costs.iter().copied().max().unwrap_or(0);
    let benefit = |i: usize, j: usize| -> i64 {
        if i < n_real {
            -costs[i * size + j] * scale
        } else {
            0
        }
    };

    let mut prices = vec![0i64; size];
    let mut owner: Vec<Option<usize>> = vec![None; size];
    let mut holds: Vec<Option<usize>> = vec![None; size];
    let mut eps = ((max_cost * scale) / 2).max(1);
    let mut queue = VecDeque::with_capacity(size);

    loop {
        owner.iter_mut().for_each(|o| *o = None);
        holds.iter_mut().for_each(|h| *h = None);
        queue.clear();
        queue.extend(0..size);

        while let Some(i) = queue.pop_front() {
            let mut best_j = 0;
            let mut best = i64::MIN;
            let mut second = i64::MIN;
            for j in 0..size {
                let v = benefit(i, j) - prices[j];
                if v > best {
                    second = best;
                    best = v;
                    best_j = j;
                } else if v > second {
                    second = v;
                }
            }
            prices[best_j] += best - second + eps;
            if let Some(prev) = owner[best_j].replace(i) {
                holds[prev] = None;
                queue.push_back(prev);
            }
            holds[i] = Some(best_j);
        }

        if eps == 1 {
            break;
        }
        eps = (eps / 4).max(1);
    }

    holds.into_iter().map(|h| h.expect("auction leaves no person unassigned")).collect()
}

/// Size of a maximum matching restricted to finite entries (augmenting paths).
pub fn max_cardinality(costs: &CostMatrix) -> usize {
    let mut col_owner: Vec<Option<usize>> = vec![None; costs.cols];
    let mut matched = 0;
    for row in 0..costs.rows {
        let mut seen = vec![false; costs.cols];
        if augment(costs, row, &mut seen, &mut col_owner) {
            matched += 1;
        }
    }
    matched
}

fn augment(costs: &CostMatrix, row: usize, seen: &mut [bool], col_owner: &mut [Option<usize>]) -> bool {
    for col in 0..costs.cols {
        if seen[col] || !costs.get(row, col).is_finite() {
            continue;
        }
        seen[col] = true;
        let free = match col_owner[col] {
            None => true,
            Some(other) => augment(costs, other, seen, col_owner),
        };
        if free {
            col_owner[col] = Some(row);
            return true;
        }
    }
    false
}

/// Exhaustive search over all maximum matchings.
///
/// Ties resolve to the lexicographically first injection of the smaller side.
pub fn brute_force_optimal(costs: &CostMatrix) -> Result<Assignment, AssignmentError> {
    let small = costs.rows.min(costs.cols);
    let large = costs.rows.max(costs.cols);
    if small > BRUTE_FORCE_MAX_SMALL || large > BRUTE_FORCE_MAX_LARGE {
        return Err(AssignmentError::TooLarge {
            rows: costs.rows,
            cols: costs.cols,
        });
    }
    let transposed = costs.rows > costs.cols;
    let view = if transposed { costs.transpose() } else { costs.clone() };

    struct Search<'a> {
        view: &'a CostMatrix,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, row: usize, acc: f64) {
            if row == self.view.rows {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.current.clone()));
                }
                return;
            }
            for col in 0..self.view.cols {
                let c = self.view.get(row, col);
                if self.used[col] || !c.is_finite() {
                    continue;
                }
                self.used[col] = true;
                self.current.push(col);
                self.go(row + 1, acc + c);
                self.current.pop();
                self.used[col] = false;
            }
        }
    }

    let mut search = Search {
        view: &view,
        used: vec![false; view.cols],
        current: Vec::with_capacity(view.rows),
        best: None,
    };
    search.go(0, 0.0);

    match search.best {
        Some((_, cols)) => {
            let pairs = cols
                .into_iter()
                .enumerate()
                .map(|(r, c)| if transposed { (c, r) } else { (r, c) })
                .collect();
            Ok(Assignment::from_pairs(pairs, costs))
        }
        None => Err(AssignmentError::Infeasible {
            needed: small,
            found: max_cardinality(costs),
        }),
    }
}

/// Greedy dispatch rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearestMode {
    /// Requests in creation order each take the nearest remaining vehicle.
    Fcfs,
    /// Like FCFS, except that when requests outnumber vehicles each vehicle
    /// (in index order) takes the nearest remaining request.
    Nvnr,
}

/// Greedy nearest assignment over plain positions.
///
/// `requests` carries each request's location and creation time. Pairs in
/// the result are `(vehicle index, request index)`; `total_cost` is the sum
/// of straight-line distances.
pub fn nearest_rule_points(vehicles: &[Point2D], requests: &[(Point2D, Seconds)], mode: NearestMode) -> Assignment {
    if vehicles.is_empty() || requests.is_empty() {
        return Assignment::empty();
    }
    let mut pairs = Vec::with_capacity(vehicles.len().min(requests.len()));
    let mut total = 0.0;

    if mode == NearestMode::Nvnr && requests.len() > vehicles.len() {
        let mut taken = vec![false; requests.len()];
        for (vi, vp) in vehicles.iter().enumerate() {
            let mut best: Option<(f64, usize)> = None;
            for (ri, (rp, _)) in requests.iter().enumerate() {
                if taken[ri] {
                    continue;
                }
                let d = vp.distance_sq(rp);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, ri));
                }
            }
            if let Some((_, ri)) = best {
                taken[ri] = true;
                total += euclidean_distance(*vp, requests[ri].0);
                pairs.push((vi, ri));
            }
        }
    } else {
        let mut order: Vec<usize> = (0..requests.len()).collect();
        order.sort_by(|&a, &b| requests[a].1.total_cmp(&requests[b].1).then(a.cmp(&b)));
        let mut taken = vec![false; vehicles.len()];
        let mut left = vehicles.len();
        for ri in order {
            if left == 0 {
                break;
            }
            let rp = requests[ri].0;
            let mut best: Option<(f64, usize)> = None;
            for (vi, vp) in vehicles.iter().enumerate() {
                if taken[vi] {
                    continue;
                }
                let d = vp.distance_sq(&rp);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, vi));
                }
            }
            if let Some((_, vi)) = best {
                taken[vi] = true;
                left -= 1;
                total += euclidean_distance(vehicles[vi], rp);
                pairs.push((vi, ri));
            }
        }
    }
    pairs.sort_unstable();
    Assignment {
        pairs,
        total_cost: total,
    }
}

/// [`nearest_rule_points`] over domain types. Indices refer to the slices.
pub fn nearest_rule(requests: &[ServiceRequest], idle_vehicles: &[Vehicle], mode: NearestMode) -> Assignment {
    let vehicles: Vec<Point2D> = idle_vehicles.iter().map(|v| v.position).collect();
    let reqs: Vec<(Point2D, Seconds)> = requests.iter().map(|r| (r.origin, r.created_at)).collect();
    nearest_rule_points(&vehicles, &reqs, mode)
}

/// Final epsilon that guarantees exactness for an `n x m` integer instance.
pub fn exact_epsilon(rows: usize, cols: usize) -> f64 {
    1.0 / (rows.max(cols) as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RequestId, VehicleId, VehicleKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_pair() {
        let c = m(&[&[5.0]]);
        let a = solve_optimal(&c, 0.5).unwrap();
        assert_eq!(a.pairs(), &[(0, 0)]);
        assert_eq!(a.total_cost, 5.0);
        assert_eq!(brute_force_optimal(&c).unwrap().total_cost, 5.0);
    }

    #[test]
    fn two_by_two_diagonal() {
        let c = m(&[&[1.0, 100.0], &[100.0, 1.0]]);
        let a = solve_optimal(&c, 1.0 / 3.0).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
        assert_eq!(brute_force_optimal(&c).unwrap().total_cost, 2.0);
    }

    #[test]
    fn three_vehicles_two_requests() {
        let c = m(&[&[1.0, 2.0], &[3.0, 1.0], &[2.0, 2.0]]);
        let a = solve_optimal(&c, 1.0 / 3.0).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
        let b = brute_force_optimal(&c).unwrap();
        assert_eq!(b.pairs(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn more_requests_than_vehicles() {
        let c = m(&[&[9.0, 1.0, 5.0, 7.0]]);
        let a = solve_optimal(&c, 0.1).unwrap();
        assert_eq!(a.pairs(), &[(0, 1)]);
        assert_eq!(a.total_cost, 1.0);
    }

    #[test]
    fn forbidden_entries_are_avoided() {
        let inf = f64::INFINITY;
        let c = m(&[&[1.0, inf], &[2.0, 50.0]]);
        let a = solve_optimal(&c, 0.1).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 51.0);
    }

    #[test]
    fn infeasible_is_reported() {
        let inf = f64::INFINITY;
        let c = m(&[&[1.0, inf], &[2.0, inf]]);
        assert_eq!(
            solve_optimal(&c, 0.1),
            Err(AssignmentError::Infeasible { needed: 2, found: 1 })
        );
        assert!(matches!(brute_force_optimal(&c), Err(AssignmentError::Infeasible { .. })));
    }

    #[test]
    fn bad_inputs_rejected() {
        let c = m(&[&[1.0]]);
        assert!(matches!(solve_optimal(&c, 0.0), Err(AssignmentError::InvalidEpsilon(_))));
        assert!(matches!(solve_optimal(&c, -1.0), Err(AssignmentError::InvalidEpsilon(_))));
        assert_eq!(CostMatrix::new(0, 3, vec![]), Err(AssignmentError::Empty));
        assert!(matches!(
            CostMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(AssignmentError::InvalidEntry { row: 0, col: 1 })
        ));
        let big = CostMatrix::from_fn(9, 9, |_, _| 1.0).unwrap();
        assert!(matches!(brute_force_optimal(&big), Err(AssignmentError::TooLarge { .. })));
    }

    #[test]
    fn negative_and_fractional_costs() {
        let c = m(&[&[-1.5, 0.25], &[0.75, -2.0]]);
        let a = solve_optimal(&c, 0.1).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);
        assert!((a.total_cost + 3.5).abs() < 1e-12);
    }

    #[test]
    fn five_by_five_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..50 {
            let c = CostMatrix::from_fn(5, 5, |_, _| rng.random_range(0..=100) as f64).unwrap();
            let a = solve_optimal(&c, 1.0 / 6.0).unwrap();
            let b = brute_force_optimal(&c).unwrap();
            assert_eq!(a.total_cost, b.total_cost);
        }
    }

    #[test]
    fn larger_instances_match_dense_hungarian() {
        // Independent O(n^3) Hungarian reference for sizes beyond brute force.
        fn hungarian(c: &[Vec<i64>]) -> i64 {
            let n = c.len();
            let inf = i64::MAX / 4;
            let (mut u, mut v) = (vec![0i64; n + 1], vec![0i64; n + 1]);
            let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
            for i in 1..=n {
                p[0] = i;
                let mut j0 = 0;
                let mut minv = vec![inf; n + 1];
                let mut used = vec![false; n + 1];
                loop {
                    used[j0] = true;
                    let i0 = p[j0];
                    let (mut delta, mut j1) = (inf, 0);
                    for j in 1..=n {
                        if !used[j] {
                            let cur = c[i0 - 1][j - 1] - u[i0] - v[j];
                            if cur < minv[j] {
                                minv[j] = cur;
                                way[j] = j0;
                            }
                            if minv[j] < delta {
                                delta = minv[j];
                                j1 = j;
                            }
                        }
                    }
                    for j in 0..=n {
                        if used[j] {
                            u[p[j]] += delta;
                            v[j] -= delta;
                        } else {
                            minv[j] -= delta;
                        }
                    }
                    j0 = j1;
                    if p[j0] == 0 {
                        break;
                    }
                }
                loop {
                    let j1 = way[j0];
                    p[j0] = p[j1];
                    j0 = j1;
                    if j0 == 0 {
                        break;
                    }
                }
            }
            (1..=n).map(|j| c[p[j] - 1][j - 1]).sum()
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [20, 40, 80] {
            let raw: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0..10_000)).collect()).collect();
            let c = CostMatrix::from_fn(n, n, |i, j| raw[i][j] as f64).unwrap();
            let a = solve_optimal(&c, 1e-3).unwrap();
            assert!(a.is_one_to_one());
            assert_eq!(a.total_cost as i64, hungarian(&raw), "n = {n}");
        }
    }

    fn amb(id: usize, x: f64, y: f64) -> Vehicle {
        Vehicle::new(VehicleId(id), Point2D::new(x, y), 10.0, VehicleKind::Ambulance).unwrap()
    }

    #[test]
    fn nearest_picks_nearer_vehicle() {
        let reqs = vec![ServiceRequest::new(RequestId(0), Point2D::new(0.0, 0.0), 0.0)];
        let vs = vec![amb(0, 200.0, 0.0), amb(1, 100.0, 0.0)];
        let a = nearest_rule(&reqs, &vs, NearestMode::Fcfs);
        assert_eq!(a.pairs(), &[(1, 0)]);
        assert_eq!(a.total_cost, 100.0);
    }

    #[test]
    fn fcfs_older_request_wins_contention() {
        // Both requests are closest to vehicle 0; the older one (index 1) gets it.
        let reqs = vec![
            ServiceRequest::new(RequestId(0), Point2D::new(10.0, 0.0), 5.0),
            ServiceRequest::new(RequestId(1), Point2D::new(-10.0, 0.0), 1.0),
        ];
        let vs = vec![amb(0, 0.0, 0.0), amb(1, 300.0, 0.0)];
        let a = nearest_rule(&reqs, &vs, NearestMode::Fcfs);
        assert_eq!(a.pairs(), &[(0, 1), (1, 0)]);
        assert_eq!(a.total_cost, 10.0 + 290.0);
    }

    #[test]
    fn nvnr_iterates_vehicles_when_requests_outnumber() {
        let reqs = vec![
            ServiceRequest::new(RequestId(0), Point2D::new(1000.0, 0.0), 0.0),
            ServiceRequest::new(RequestId(1), Point2D::new(10.0, 0.0), 9.0),
        ];
        let vs = vec![amb(0, 0.0, 0.0)];
        let fcfs = nearest_rule(&reqs, &vs, NearestMode::Fcfs);
        let nvnr = nearest_rule(&reqs, &vs, NearestMode::Nvnr);
        assert_eq!(fcfs.pairs(), &[(0, 0)]);
        assert_eq!(nvnr.pairs(), &[(0, 1)]);
    }

    #[test]
    fn nearest_with_no_vehicles_is_empty() {
        let reqs = vec![ServiceRequest::new(RequestId(0), Point2D::new(0.0, 0.0), 0.0)];
        assert!(nearest_rule(&reqs, &[], NearestMode::Fcfs).is_empty());
        assert!(nearest_rule(&[], &[amb(0, 0.0, 0.0)], NearestMode::Nvnr).is_empty());
    }

    fn int_matrix() -> impl Strategy<Value = CostMatrix> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(n, mm)| {
            proptest::collection::vec(0u32..=100, n * mm)
                .prop_map(move |v| CostMatrix::new(n, mm, v.into_iter().map(f64::from).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn auction_matches_brute_force(c in int_matrix()) {
            let eps = 1.0 / (c.rows().min(c.cols()) as f64 + 1.0);
            let a = solve_optimal(&c, eps).unwrap();
            let b = brute_force_optimal(&c).unwrap();
            prop_assert_eq!(a.total_cost, b.total_cost);
            prop_assert_eq!(a.len(), c.rows().min(c.cols()));
            prop_assert!(a.is_one_to_one());
        }

        #[test]
        fn fcfs_never_beats_optimal(
            vs in proptest::collection::vec((0.0..1000.0f64, 0.0..1000.0f64), 1..6),
            rs in proptest::collection::vec((0.0..1000.0f64, 0.0..1000.0f64, 0.0..100.0f64), 1..6),
        ) {
            let vp: Vec<Point2D> = vs.iter().map(|&(x, y)| Point2D::new(x, y)).collect();
            let rp: Vec<(Point2D, f64)> = rs.iter().map(|&(x, y, t)| (Point2D::new(x, y), t)).collect();
            let greedy = nearest_rule_points(&vp, &rp, NearestMode::Fcfs);
            let c = CostMatrix::from_fn(vp.len(), rp.len(), |i, j| euclidean_distance(vp[i], rp[j].0)).unwrap();
            let opt = solve_optimal(&c, 1e-3).unwrap();
            prop_assert_eq!(greedy.len(), opt.len());
            // Integerization may perturb the optimum by at most 1/2000 per pair.
            prop_assert!(greedy.total_cost + 1e-3 * opt.len() as f64 >= opt.total_cost);
        }

        #[test]
        fn permutation_equivariant(n in 2usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Continuous costs make the optimum unique with probability one.
            let c = CostMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..100.0)).unwrap();
            let mut rp: Vec<usize> = (0..n).collect();
            let mut cp: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            rp.shuffle(&mut rng);
            cp.shuffle(&mut rng);
            let permuted = CostMatrix::from_fn(n, n, |i, j| c.get(rp[i], cp[j])).unwrap();
            let a = solve_optimal(&c, 1e-3).unwrap();
            let b = solve_optimal(&permuted, 1e-3).unwrap();
            let brute = brute_force_optimal(&c).unwrap();
            prop_assume!(a.pairs() == brute.pairs());
            let mapped: BTreeSet<(usize, usize)> = b.pairs().iter().map(|&(i, j)| (rp[i], cp[j])).collect();
            let orig: BTreeSet<(usize, usize)> = a.pairs().iter().copied().collect();
            prop_assert_eq!(mapped, orig);
        }
    }
}
