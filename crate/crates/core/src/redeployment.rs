//! Density-weighted discrete Voronoi tessellations and Lloyd's algorithm.
//!
//! The region is discretized into equally sized square cells, each
//! represented by its center and carrying the probability that the next
//! request appears there. Idle vehicle positions are the generators; Lloyd
//! iterations move each generator to the probability-weighted centroid of
//! the cells it owns.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Meters, Point2D, Region, VehicleId};

/// Lloyd iterations used for every redeployment recommendation.
pub const LLOYD_ITERATIONS: usize = 50;
/// Idle vehicles closer than this to their recommendation stay put.
pub const DEFAULT_MOVE_THRESHOLD: Meters = 500.0;
/// Lloyd stops early once no generator moves further than this.
pub const CONVERGENCE_TOLERANCE: Meters = 1e-6;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs positive cell counts and a positive cell size")]
    Dimensions,
    #[error("expected {expected} cell weights, found {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("cell weight {index} is negative or not finite: {value}")]
    BadWeight { index: usize, value: f64 },
    #[error("grid has zero total weight")]
    ZeroMass,
    #[error("density csv: {0}")]
    Csv(String),
    #[error("reading density file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RedeployError {
    #[error("at least one generator is required")]
    NoGenerators,
}

/// A circular Gaussian bump used to synthesize demand densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub x: Meters,
    pub y: Meters,
    pub sigma: Meters,
    pub weight: f64,
}

/// Probability of a request appearing in each cell of a rectangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    origin: Point2D,
    x_cells: usize,
    y_cells: usize,
    cell_size: Meters,
    prob: Vec<f64>,
    /// Indices of cells with positive probability, ascending.
    support: Vec<usize>,
}

impl DensityGrid {
    /// Builds a grid from raw non-negative weights in row-major order
    /// (`index = row * x_cells + col`, rows running along y). Weights are
    /// normalized to sum to one.
    pub fn new(origin: Point2D, x_cells: usize, y_cells: usize, cell_size: Meters, weights: Vec<f64>) -> Result<Self, GridError> {
        if x_cells == 0 || y_cells == 0 || !(cell_size > 0.0 && cell_size.is_finite()) || !origin.is_finite() {
            return Err(GridError::Dimensions);
        }
        let expected = x_cells * y_cells;
        if weights.len() != expected {
            return Err(GridError::WeightCount {
                expected,
                found: weights.len(),
            });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(GridError::BadWeight { index, value });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(GridError::ZeroMass);
        }
        let prob: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let support = prob.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| i).collect();
        Ok(Self {
            origin,
            x_cells,
            y_cells,
            cell_size,
            prob,
            support,
        })
    }

    pub fn uniform(origin: Point2D, x_cells: usize, y_cells: usize, cell_size: Meters) -> Result<Self, GridError> {
        Self::new(origin, x_cells, y_cells, cell_size, vec![1.0; x_cells * y_cells])
    }

    /// Smallest grid of `cell_size` cells covering `region`, weighted by `f`
    /// evaluated at each cell center.
    pub fn from_fn(region: &Region, cell_size: Meters, f: impl Fn(Point2D) -> f64) -> Result<Self, GridError> {
        if !(cell_size > 0.0) {
            return Err(GridError::Dimensions);
        }
        let x_cells = (region.width() / cell_size).ceil().max(1.0) as usize;
        let y_cells = (region.height() / cell_size).ceil().max(1.0) as usize;
        let origin = Point2D::new(region.min_x, region.min_y);
        let mut weights = Vec::with_capacity(x_cells * y_cells);
        for row in 0..y_cells {
            for col in 0..x_cells {
                let c = Point2D::new(
                    origin.x + (col as f64 + 0.5) * cell_size,
                    origin.y + (row as f64 + 0.5) * cell_size,
                );
                weights.push(f(c));
            }
        }
        Self::new(origin, x_cells, y_cells, cell_size, weights)
    }

    /// Mixture of Gaussian bumps, each truncated at `truncate_sigmas`.
    pub fn gaussian_mixture(region: &Region, cell_size: Meters, bumps: &[GaussianBump], truncate_sigmas: f64) -> Result<Self, GridError> {
        Self::from_fn(region, cell_size, |p| {
            bumps
                .iter()
                .map(|b| {
                    let d2 = (p.x - b.x).powi(2) + (p.y - b.y).powi(2);
                    let s2 = b.sigma * b.sigma;
                    if d2 > truncate_sigmas * truncate_sigmas * s2 {
                        0.0
                    } else {
                        b.weight * (-d2 / (2.0 * s2)).exp() / s2
                    }
                })
                .sum()
        })
    }

    /// Parses the CSV layout: a header line
    /// `x_cells,y_cells,cell_size_m,origin_x,origin_y`, one line with those
    /// values, then one weight per cell in row-major order (weights may be
    /// split across lines and fields freely).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, GridError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| GridError::Csv(e.to_string()))?.clone();
        let expected = ["x_cells", "y_cells", "cell_size_m", "origin_x", "origin_y"];
        if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(GridError::Csv(format!(
                "header must be `{}`",
                expected.join(",")
            )));
        }
        let mut records = rdr.records();
        let dims = records
            .next()
            .ok_or_else(|| GridError::Csv("missing dimension line".into()))?
            .map_err(|e| GridError::Csv(e.to_string()))?;
        let field = |i: usize| -> Result<f64, GridError> {
            dims.get(i)
                .ok_or_else(|| GridError::Csv(format!("dimension line lacks field {}", expected[i])))?
                .parse::<f64>()
                .map_err(|e| GridError::Csv(format!("{}: {e}", expected[i])))
        };
        let x_cells = field(0)?;
        let y_cells = field(1)?;
        if x_cells.fract() != 0.0 || y_cells.fract() != 0.0 || x_cells < 1.0 || y_cells < 1.0 {
            return Err(GridError::Dimensions);
        }
        let (cell_size, ox, oy) = (field(2)?, field(3)?, field(4)?);
        let mut weights = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
            for f in rec.iter().filter(|f| !f.is_empty()) {
                weights.push(
                    f.parse::<f64>()
                        .map_err(|e| GridError::Csv(format!("weight `{f}`: {e}")))?,
                );
            }
        }
        Self::new(Point2D::new(ox, oy), x_cells as usize, y_cells as usize, cell_size, weights)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    /// Serializes in the layout accepted by [`DensityGrid::from_csv_reader`],
    /// one row of cells per line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x_cells,y_cells,cell_size_m,origin_x,origin_y\n");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            self.x_cells, self.y_cells, self.cell_size, self.origin.x, self.origin.y
        ));
        for row in self.prob.chunks(self.x_cells) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn x_cells(&self) -> usize {
        self.x_cells
    }

    pub fn y_cells(&self) -> usize {
        self.y_cells
    }

    pub fn cell_size(&self) -> Meters {
        self.cell_size
    }

    pub fn prob(&self, cell: usize) -> f64 {
        self.prob[cell]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn bounds(&self) -> Region {
        Region {
            min_x: self.origin.x,
            min_y: self.origin.y,
            max_x: self.origin.x + self.x_cells as f64 * self.cell_size,
            max_y: self.origin.y + self.y_cells as f64 * self.cell_size,
        }
    }

    pub fn cell_center(&self, cell: usize) -> Point2D {
        let row = cell / self.x_cells;
        let col = cell % self.x_cells;
        Point2D::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Lower-left corner of a cell.
    pub fn cell_corner(&self, cell: usize) -> Point2D {
        let row = cell / self.x_cells;
        let col = cell % self.x_cells;
        Point2D::new(
            self.origin.x + col as f64 * self.cell_size,
            self.origin.y + row as f64 * self.cell_size,
        )
    }

    /// Probability-weighted centroid of the whole grid.
    pub fn centroid(&self) -> Point2D {
        let (mut x, mut y) = (0.0, 0.0);
        for &c in &self.support {
            let p = self.cell_center(c);
            x += self.prob[c] * p.x;
            y += self.prob[c] * p.y;
        }
        Point2D::new(x, y)
    }
}

/// Ownership of every grid cell by its nearest generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    pub generators: Vec<Point2D>,
    /// Generator index owning each cell.
    pub owner: Vec<usize>,
}

impl Tessellation {
    /// Number of cells in each generator's region.
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.generators.len()];
        for &o in &self.owner {
            sizes[o] += 1;
        }
        sizes
    }
}

/// Index of the nearest generator; equidistant generators resolve to the
/// lowest index.
#[inline]
fn nearest(generators: &[Point2D], p: &Point2D) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, g) in generators.iter().enumerate() {
        let d = g.distance_sq(p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub fn voronoi_partition(generators: &[Point2D], grid: &DensityGrid) -> Result<Tessellation, RedeployError> {
    if generators.is_empty() {
        return Err(RedeployError::NoGenerators);
    }
    let owner = (0..grid.len())
        .map(|c| nearest(generators, &grid.cell_center(c)))
        .collect();
    Ok(Tessellation {
        generators: generators.to_vec(),
        owner,
    })
}

/// `sum_i sum_{y in V_i} rho(y) |y - s_i|^2` over cell centers.
///
/// Infinite when there are no generators.
pub fn cvt_cost(generators: &[Point2D], grid: &DensityGrid) -> f64 {
    if generators.is_empty() {
        return f64::INFINITY;
    }
    grid.support
        .iter()
        .map(|&c| {
            let y = grid.cell_center(c);
            let s = generators[nearest(generators, &y)];
            grid.prob[c] * s.distance_sq(&y)
        })
        .sum()
}

/// One Lloyd iteration. Generators whose region carries no probability mass
/// keep their position; output order matches input order.
pub fn lloyd_step(generators: &[Point2D], grid: &DensityGrid) -> Vec<Point2D> {
    if generators.is_empty() {
        return Vec::new();
    }
    let k = generators.len();
    let mut mass = vec![0.0; k];
    let mut sx = vec![0.0; k];
    let mut sy = vec![0.0; k];
    for &c in &grid.support {
        let y = grid.cell_center(c);
        let i = nearest(generators, &y);
        let p = grid.prob[c];
        mass[i] += p;
        sx[i] += p * y.x;
        sy[i] += p * y.y;
    }
    generators
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if mass[i] > 0.0 {
                Point2D::new(sx[i] / mass[i], sy[i] / mass[i])
            } else {
                *g
            }
        })
        .collect()
}

/// Up to `iterations` Lloyd steps, stopping early once every generator moves
/// less than [`CONVERGENCE_TOLERANCE`].
pub fn run_lloyd(generators: &[Point2D], grid: &DensityGrid, iterations: usize) -> Vec<Point2D> {
    let mut current = generators.to_vec();
    for _ in 0..iterations {
        let next = lloyd_step(&current, grid);
        let moved = current
            .iter()
            .zip(&next)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max);
        current = next;
        if moved <= CONVERGENCE_TOLERANCE {
            break;
        }
    }
    current
}

/// Recommended waiting positions for idle vehicles.
///
/// Runs [`LLOYD_ITERATIONS`] Lloyd steps seeded with the current positions;
/// the i-th output generator belongs to the i-th vehicle. Only vehicles whose
/// recommendation lies more than `move_threshold` away are included; a
/// threshold of zero or less includes every vehicle.
pub fn recommend_positions(idle: &[(VehicleId, Point2D)], grid: &DensityGrid, move_threshold: Meters) -> BTreeMap<VehicleId, Point2D> {
    if idle.is_empty() {
        return BTreeMap::new();
    }
    let start: Vec<Point2D> = idle.iter().map(|(_, p)| *p).collect();
    let target = run_lloyd(&start, grid, LLOYD_ITERATIONS);
    idle.iter()
        .zip(target)
        .filter(|((_, pos), t)| move_threshold <= 0.0 || pos.distance(t) > move_threshold)
        .map(|((id, _), t)| (*id, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(cells: usize, size: f64) -> DensityGrid {
        DensityGrid::uniform(Point2D::new(0.0, 0.0), cells, cells, size).unwrap()
    }

    #[test]
    fn weights_are_normalized() {
        let g = DensityGrid::new(Point2D::new(0.0, 0.0), 2, 1, 10.0, vec![1.0, 3.0]).unwrap();
        assert_eq!(g.prob(0), 0.25);
        assert_eq!(g.prob(1), 0.75);
        assert!(matches!(
            DensityGrid::new(Point2D::new(0.0, 0.0), 2, 1, 10.0, vec![0.0, 0.0]),
            Err(GridError::ZeroMass)
        ));
        assert!(matches!(
            DensityGrid::new(Point2D::new(0.0, 0.0), 2, 1, 10.0, vec![1.0, -1.0]),
            Err(GridError::BadWeight { index: 1, .. })
        ));
        assert!(matches!(
            DensityGrid::new(Point2D::new(0.0, 0.0), 2, 2, 10.0, vec![1.0]),
            Err(GridError::WeightCount { expected: 4, found: 1 })
        ));
    }

    #[test]
    fn csv_round_trip_and_layout() {
        let text = "x_cells,y_cells,cell_size_m,origin_x,origin_y\n3,2,100,50,-20\n1,2,3\n4,5,5\n";
        let g = DensityGrid::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!((g.x_cells(), g.y_cells()), (3, 2));
        assert_eq!(g.prob(5), 0.25);
        assert_eq!(g.cell_center(0), Point2D::new(100.0, 30.0));
        assert_eq!(g.cell_center(4), Point2D::new(200.0, 130.0));
        let back = DensityGrid::from_csv_reader(g.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, g);

        // One weight per line is accepted too.
        let text = "x_cells,y_cells,cell_size_m,origin_x,origin_y\n2,1,1,0,0\n1\n1\n";
        assert_eq!(DensityGrid::from_csv_reader(text.as_bytes()).unwrap().prob(1), 0.5);

        let bad = "x,y\n1,1\n1\n";
        assert!(matches!(DensityGrid::from_csv_reader(bad.as_bytes()), Err(GridError::Csv(_))));
        let short = "x_cells,y_cells,cell_size_m,origin_x,origin_y\n2,2,1,0,0\n1,1,1\n";
        assert!(matches!(
            DensityGrid::from_csv_reader(short.as_bytes()),
            Err(GridError::WeightCount { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn single_generator_owns_everything() {
        let g = square(10, 100.0);
        let t = voronoi_partition(&[Point2D::new(123.0, 877.0)], &g).unwrap();
        assert!(t.owner.iter().all(|&o| o == 0));
        assert_eq!(t.region_sizes(), vec![100]);
        assert_eq!(voronoi_partition(&[], &g), Err(RedeployError::NoGenerators));
    }

    #[test]
    fn two_generators_split_at_midline() {
        // 1000 x 1000 with 20 cells per side puts centers on x = 25, 75, ...,
        // so no center lies on x = 500.
        let g = square(20, 50.0);
        let gens = [Point2D::new(250.0, 500.0), Point2D::new(750.0, 500.0)];
        let t = voronoi_partition(&gens, &g).unwrap();
        for c in 0..g.len() {
            let x = g.cell_center(c).x;
            assert_eq!(t.owner[c], usize::from(x > 500.0));
        }
        assert_eq!(t.region_sizes(), vec![200, 200]);

        // An odd column count puts a column of centers exactly on x = 500,
        // which belongs to the lower index.
        let g = square(5, 200.0);
        let t = voronoi_partition(&gens, &g).unwrap();
        for c in 0..g.len() {
            let x = g.cell_center(c).x;
            let expected = if x < 500.0 { 0 } else if x > 500.0 { 1 } else { 0 };
            assert_eq!(t.owner[c], expected, "cell {c} at x = {x}");
        }
    }

    #[test]
    fn duplicate_generators_favor_lower_index() {
        let g = square(4, 10.0);
        let p = Point2D::new(20.0, 20.0);
        let t = voronoi_partition(&[p, p], &g).unwrap();
        assert!(t.owner.iter().all(|&o| o == 0));
    }

    #[test]
    fn cost_examples() {
        // Only one cell carries mass and the generator sits on its center.
        let g = DensityGrid::new(Point2D::new(0.0, 0.0), 2, 2, 10.0, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cvt_cost(&[Point2D::new(5.0, 15.0)], &g), 0.0);

        // Uniform 2x2 grid with centers at (+-d, +-d) around the generator.
        let d = 7.0;
        let g = DensityGrid::uniform(Point2D::new(-2.0 * d, -2.0 * d), 2, 2, 2.0 * d).unwrap();
        let cost = cvt_cost(&[Point2D::new(0.0, 0.0)], &g);
        assert!((cost - 2.0 * d * d).abs() < 1e-9);
    }

    /// Deployment cost evaluated over a fixed partition instead of the generators'
    /// own Voronoi regions.
    fn fixed_partition_cost(generators: &[Point2D], owner: &[usize], grid: &DensityGrid) -> f64 {
        grid.support()
            .iter()
            .map(|&c| grid.prob(c) * generators[owner[c]].distance_sq(&grid.cell_center(c)))
            .sum()
    }

    #[test]
    fn moving_away_from_centroid_never_helps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
            let g = DensityGrid::new(Point2D::new(0.0, 0.0), 10, 10, 10.0, w).unwrap();
            let gens: Vec<Point2D> = (0..4)
                .map(|_| Point2D::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
                .collect();
            let tess = voronoi_partition(&gens, &g).unwrap();
            let centroids = lloyd_step(&gens, &g);
            let base = fixed_partition_cost(&centroids, &tess.owner, &g);
            // The Voronoi cost of the centroids can only be lower still.
            assert!(cvt_cost(&centroids, &g) <= base * (1.0 + 1e-12));
            for _ in 0..10 {
                let mut moved = centroids.clone();
                let i = rng.random_range(0..moved.len());
                moved[i].x += rng.random_range(-5.0..5.0);
                moved[i].y += rng.random_range(-5.0..5.0);
                assert!(fixed_partition_cost(&moved, &tess.owner, &g) >= base * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn lloyd_fixed_point_and_identity() {
        let g = square(10, 10.0);
        let center = Point2D::new(50.0, 50.0);
        assert!(lloyd_step(&[center], &g)[0].distance(&center) < 1e-9);
        assert_eq!(run_lloyd(&[Point2D::new(3.0, 4.0)], &g, 0), vec![Point2D::new(3.0, 4.0)]);
        // One step from anywhere reaches the center of a uniform square.
        let next = lloyd_step(&[Point2D::new(3.0, 97.0)], &g);
        assert!(next[0].distance(&center) < 1e-9);
    }

    #[test]
    fn empty_region_generator_stays() {
        let g = DensityGrid::new(Point2D::new(0.0, 0.0), 4, 1, 10.0, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let gens = [Point2D::new(5.0, 5.0), Point2D::new(38.0, 5.0)];
        let next = lloyd_step(&gens, &g);
        assert_eq!(next[1], gens[1]);
        assert!((next[0].x - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_generator_goes_to_weighted_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        let g = DensityGrid::new(Point2D::new(0.0, 0.0), 8, 8, 25.0, w).unwrap();
        let out = run_lloyd(&[Point2D::new(1.0, 1.0)], &g, 50);
        assert!(out[0].distance(&g.centroid()) < 1e-9);
    }

    #[test]
    fn uniform_strip_converges_to_quarter_points() {
        let cells = 400;
        let len = 1000.0;
        let g = DensityGrid::uniform(Point2D::new(0.0, 0.0), cells, 1, len / cells as f64).unwrap();
        let out = run_lloyd(&[Point2D::new(10.0, 1.25), Point2D::new(30.0, 1.25)], &g, 5000);
        let cell = len / cells as f64;
        assert!((out[0].x - 0.25 * len).abs() <= cell, "{:?}", out);
        assert!((out[1].x - 0.75 * len).abs() <= cell, "{:?}", out);
    }

    #[test]
    fn recommendations_respect_threshold() {
        let g = square(20, 100.0);
        let center = Point2D::new(1000.0, 1000.0);
        let near = [(VehicleId(0), Point2D::new(1100.0, 1000.0))];
        assert!(recommend_positions(&near, &g, 500.0).is_empty());

        let far = [(VehicleId(4), Point2D::new(100.0, 100.0))];
        let rec = recommend_positions(&far, &g, 500.0);
        assert!(rec[&VehicleId(4)].distance(&center) < 1e-9);

        let rec = recommend_positions(&near, &g, 0.0);
        assert_eq!(rec.len(), 1);
        assert!(recommend_positions(&[], &g, 0.0).is_empty());
    }

    #[test]
    fn lloyd_cost_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let w: Vec<f64> = (0..225).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
            let g = DensityGrid::new(Point2D::new(0.0, 0.0), 15, 15, 10.0, w).unwrap();
            let mut gens: Vec<Point2D> = (0..5)
                .map(|_| Point2D::new(rng.random_range(0.0..150.0), rng.random_range(0.0..150.0)))
                .collect();
            let mut cost = cvt_cost(&gens, &g);
            for _ in 0..50 {
                gens = lloyd_step(&gens, &g);
                let next = cvt_cost(&gens, &g);
                assert!(next <= cost * (1.0 + 1e-9));
                cost = next;
            }
        }
    }

    #[test]
    fn mixture_truncates_tails() {
        let region = Region::from_size(10_000.0, 10_000.0);
        let bumps = [GaussianBump { x: 5000.0, y: 5000.0, sigma: 500.0, weight: 1.0 }];
        let g = DensityGrid::gaussian_mixture(&region, 100.0, &bumps, 3.0).unwrap();
        assert!(g.support().len() < g.len());
        assert!(g.centroid().distance(&Point2D::new(5000.0, 5000.0)) < 1.0);
    }
}
