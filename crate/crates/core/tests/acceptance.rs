//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fleetcoord::angioplasty::performance_p;
use fleetcoord::assignment::{brute_force_optimal, exact_epsilon, solve_optimal, CostMatrix};
use fleetcoord::model::Point2D;
use fleetcoord::redeployment::{cvt_cost, lloyd_step, run_lloyd, DensityGrid};
use fleetcoord::sim::metrics::percentile;
use fleetcoord::sim::{self, RunMetrics, ScenarioConfig, StrategyId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(rel: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(rel);
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn runs(cfg: &ScenarioConfig, strategy: StrategyId, seeds: &[u64]) -> Vec<RunMetrics> {
    sim::replicate(&cfg.with_strategy(strategy).unwrap(), seeds).expect("scenario runs").runs
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_response(runs: &[RunMetrics]) -> f64 {
    mean(runs.iter().map(|r| r.summary.mean_response_s.expect("someone was served")))
}

fn within_budget(start: Instant, budget: Duration) -> (bool, String) {
    let took = start.elapsed();
    (took < budget, format!("{:.1}s of {}s", took.as_secs_f64(), budget.as_secs()))
}

fn assignment_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=6);
        let costs = CostMatrix::from_fn(n, m, |_, _| rng.random_range(0..=100) as f64).unwrap();
        let fast = solve_optimal(&costs, exact_epsilon(n, m)).unwrap();
        let slow = brute_force_optimal(&costs).unwrap();
        if fast.total_cost != slow.total_cost || fast.len() != slow.len() {
            mismatches += 1;
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(5));
    outcome(mismatches == 0 && fast, format!("{mismatches}/500 cost mismatches, {time}"))
}

fn lloyd_monotone() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..100 {
        let (nx, ny) = (rng.random_range(4..=20), rng.random_range(4..=20));
        let weights: Vec<f64> = (0..nx * ny).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect();
        let Ok(grid) = DensityGrid::new(Point2D::new(0.0, 0.0), nx, ny, 100.0, weights) else {
            continue;
        };
        let k = rng.random_range(1..=8);
        let mut g: Vec<Point2D> = (0..k)
            .map(|_| Point2D::new(rng.random::<f64>() * nx as f64 * 100.0, rng.random::<f64>() * ny as f64 * 100.0))
            .collect();
        let mut cost = cvt_cost(&g, &grid);
        for _ in 0..50 {
            g = lloyd_step(&g, &grid);
            let next = cvt_cost(&g, &grid);
            if next > cost * (1.0 + 1e-9) {
                violations += 1;
            }
            cost = next;
        }
    }
    // Two generators at the centroids of the halves of a uniform square.
    let grid = DensityGrid::uniform(Point2D::new(0.0, 0.0), 8, 8, 1.0).unwrap();
    let cvt = [Point2D::new(2.0, 4.0), Point2D::new(6.0, 4.0)];
    let drift = lloyd_step(&cvt, &grid).iter().zip(&cvt).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
    let (fast, time) = within_budget(start, Duration::from_secs(30));
    outcome(
        violations == 0 && drift < 1e-9 && fast,
        format!("{violations} cost increases over 5000 steps, fixed-point drift {drift:.1e}, {time}"),
    )
}

fn strip_cvt() -> Outcome {
    let (length, cell) = (1000.0, 1.0);
    let grid = DensityGrid::uniform(Point2D::new(0.0, 0.0), (length / cell) as usize, 1, cell).unwrap();
    let g = run_lloyd(&[Point2D::new(10.0, 0.5), Point2D::new(40.0, 0.5)], &grid, 10_000);
    let mut xs = [g[0].x, g[1].x];
    xs.sort_by(f64::total_cmp);
    let err = (xs[0] - 0.25 * length).abs().max((xs[1] - 0.75 * length).abs());
    outcome(err <= cell, format!("generators at {:.3} and {:.3} of L=1000 m, error {err:.3} m", xs[0], xs[1]))
}

/// Fraction of a run's requests answered within `threshold` seconds.
fn within(run: &RunMetrics, threshold: f64) -> f64 {
    let reached = run.requests.iter().filter(|r| r.response_s.is_some_and(|t| t <= threshold)).count();
    reached as f64 / run.requests.len() as f64
}

fn ems() -> (Outcome, Outcome, String) {
    let start = Instant::now();
    let cfg = config("ems_madridlike.json");
    let seeds: Vec<u64> = (1..=10).collect();
    let fixed = runs(&cfg, StrategyId::Static, &seeds);
    let dynamic = runs(&cfg, StrategyId::Drard, &seeds);
    let (fast, time) = within_budget(start, Duration::from_secs(300));

    let (ts, td) = (mean_response(&fixed), mean_response(&dynamic));
    let gain = performance_p(ts, td).unwrap();
    let km = |rs: &[RunMetrics]| mean(rs.iter().map(|r| r.summary.mean_vehicle_distance_m));
    let ratio = km(&dynamic) / km(&fixed);
    let c4 = outcome(
        td < ts && gain >= 5.0 && ratio >= 1.5 && fast,
        format!("mean response {:.1} vs {:.1} min, improvement {gain:.2}%, distance ratio {ratio:.2}, {time}", td / 60.0, ts / 60.0),
    );

    let mut pooled: Vec<f64> = fixed.iter().flat_map(|r| r.requests.iter().filter_map(|q| q.response_s)).collect();
    pooled.sort_by(f64::total_cmp);
    let threshold = percentile(&pooled, 0.7).unwrap();
    let wins = fixed.iter().zip(&dynamic).filter(|(f, d)| within(d, threshold) > within(f, threshold)).count();
    let c5 = outcome(wins >= 9, format!("DRARD higher within {threshold:.1} s in {wins}/10 paired seeds"));
    (c4, c5, dynamic[0].summary.event_hash.clone())
}

fn angioplasty() -> (Outcome, String) {
    let start = Instant::now();
    let seeds = [1, 2, 3];
    let mut ok = true;
    let mut detail = Vec::new();
    let mut hash = String::new();
    for freq in ["low", "high"] {
        let mut ps = Vec::new();
        for h in [2, 10, 20, 50] {
            let cfg = config(&format!("angioplasty_sweep/h{h}_{freq}.json"));
            let delay = |rs: &[RunMetrics]| mean(rs.iter().map(|r| r.summary.mean_delay_s.expect("patients treated")));
            let fcfs = runs(&cfg, StrategyId::EmsFcfs, &seeds);
            let coord = runs(&cfg, StrategyId::ThreeLevel, &seeds);
            if h == 10 && freq == "high" {
                hash = coord[0].summary.event_hash.clone();
            }
            ps.push((h, performance_p(delay(&fcfs), delay(&coord)).unwrap()));
        }
        ok &= ps.windows(2).all(|w| w[1].1 >= w[0].1);
        if freq == "high" {
            ok &= ps.iter().filter(|(h, _)| *h >= 10).all(|(_, p)| *p > 0.0);
        }
        let row: Vec<String> = ps.iter().map(|(h, p)| format!("H={h} {p:.2}%")).collect();
        detail.push(format!("{freq}: {}", row.join(", ")));
    }
    let (fast, time) = within_budget(start, Duration::from_secs(600));
    (outcome(ok && fast, format!("{}; {time}", detail.join("; "))), hash)
}

const TAXI_LEVELS: [u32; 7] = [1000, 1500, 2000, 2500, 3000, 3500, 4000];

fn taxi() -> (Outcome, Outcome, String) {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=10).collect();
    let mut table = Vec::new();
    let mut all = Vec::new();
    for level in TAXI_LEVELS {
        let cfg = config(&format!("taxi_table2/c{level}.json"));
        let mut row = [0.0; 3];
        for (k, s) in [StrategyId::Fcfs, StrategyId::Nvnr, StrategyId::Dynra].into_iter().enumerate() {
            let rs = runs(&cfg, s, &seeds);
            row[k] = mean_response(&rs) / 60.0;
            all.extend(rs.into_iter().map(|r| r.summary));
        }
        table.push((level, row));
    }
    let (fast, time) = within_budget(start, Duration::from_secs(1200));

    let ordered = table.iter().all(|(_, [f, n, d])| n <= f && *d <= n * 1.05);
    let nvnr_base = table[0].1[1];
    let fcfs_saturates = table.iter().any(|(l, [f, n, _])| (2000..=3000).contains(l) && *f > 10.0 * n);
    let nvnr_holds = table.iter().filter(|(l, _)| *l < 2500).all(|(_, [_, n, _])| *n <= 10.0 * nvnr_base);
    let [f, n, d] = table[0].1;
    let low_agree = f.max(n).max(d) <= 2.0 * f.min(n).min(d);
    let rows: Vec<String> = table.iter().map(|(l, [f, n, d])| format!("{l}/h {f:.2}/{n:.2}/{d:.2}")).collect();
    let c7 = outcome(
        ordered && fcfs_saturates && nvnr_holds && low_agree && fast,
        format!(
            "wait min FCFS/NVNR/DYNRA {}; ordering {ordered}, FCFS saturates in [2000,3000] {fcfs_saturates}, NVNR unsaturated below 2500 {nvnr_holds}, agree at 1000 {low_agree}; {time}",
            rows.join(", ")
        ),
    );

    let lowest = all.iter().map(|s| s.mediator_lowest_eur).fold(f64::INFINITY, f64::min);
    let margin = all.iter().filter_map(|s| s.min_rationality_margin_eur).fold(f64::INFINITY, f64::min);
    let residual = all.iter().map(|s| s.audit_residual_eur.abs()).fold(0.0, f64::max);
    let committed: u64 = all.iter().filter(|s| s.strategy == "DYNRA").map(|s| s.reassignments).sum();
    let c8 = outcome(
        lowest >= 0.0 && margin >= -1e-9 && residual <= 1e-6,
        format!(
            "{} runs, lowest mediator balance {lowest:.6} EUR, worst rationality margin {margin:.3e} EUR over {committed} reassignments, audit residual {residual:.2e} EUR",
            all.len()
        ),
    );
    let hash = all.iter().find(|s| s.strategy == "DYNRA" && s.name == "taxi_c2500" && s.seed == 1).unwrap().event_hash.clone();
    (c7, c8, hash)
}

fn replay(hashes: &[(&str, StrategyId, String)]) -> Outcome {
    let mut same = 0;
    for (rel, strategy, hash) in hashes {
        let again = sim::run(&config(rel).with_strategy(*strategy).unwrap().with_seed(1)).unwrap();
        same += (again.summary.event_hash == *hash) as usize;
    }
    outcome(same == hashes.len(), format!("{same}/{} replayed runs reproduce their event-log hash", hashes.len()))
}

fn report(n: u32, o: &Outcome, failed: &mut u32) {
    println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if !o.pass {
        *failed += 1;
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    report(1, &assignment_oracle(), &mut failed);
    report(2, &lloyd_monotone(), &mut failed);
    report(3, &strip_cvt(), &mut failed);
    let (c4, c5, ems_hash) = ems();
    report(4, &c4, &mut failed);
    report(5, &c5, &mut failed);
    let (c6, angio_hash) = angioplasty();
    report(6, &c6, &mut failed);
    let (c7, c8, taxi_hash) = taxi();
    report(7, &c7, &mut failed);
    report(8, &c8, &mut failed);
    let c9 = replay(&[
        ("ems_madridlike.json", StrategyId::Drard, ems_hash),
        ("angioplasty_sweep/h10_high.json", StrategyId::ThreeLevel, angio_hash),
        ("taxi_table2/c2500.json", StrategyId::Dynra, taxi_hash),
    ]);
    report(9, &c9, &mut failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
