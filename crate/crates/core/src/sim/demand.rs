//! Synthetic request streams. Every generator draws from its own RNG stream,
//! so runs of different strategies with the same seed see identical demand.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use sha2::{Digest, Sha256};

use crate::model::{Point2D, Region, RequestId, Seconds};
use crate::redeployment::DensityGrid;

pub const DEMAND_STREAM: u64 = 1;
pub const LAYOUT_STREAM: u64 = 2;
pub const FLEET_STREAM: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A request entering the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spawn {
    pub id: RequestId,
    pub time: Seconds,
    pub origin: Point2D,
    pub destination: Option<Point2D>,
}

pub fn uniform_point<R: Rng>(rng: &mut R, region: &Region) -> Point2D {
    Point2D::new(
        rng.random_range(region.min_x..=region.max_x),
        rng.random_range(region.min_y..=region.max_y),
    )
}

fn finish(mut spawns: Vec<(Seconds, Point2D, Option<Point2D>)>) -> Vec<Spawn> {
    spawns.sort_by(|a, b| a.0.total_cmp(&b.0));
    spawns
        .into_iter()
        .enumerate()
        .map(|(i, (time, origin, destination))| Spawn {
            id: RequestId(i),
            time,
            origin,
            destination,
        })
        .collect()
}

/// Picks a cell by probability, then a uniform point inside it. Points
/// falling outside the region are redrawn.
pub struct GridSampler<'g> {
    grid: &'g DensityGrid,
    index: WeightedIndex<f64>,
}

impl<'g> GridSampler<'g> {
    pub fn new(grid: &'g DensityGrid) -> Self {
        let index = WeightedIndex::new(grid.probabilities()).expect("density grids have positive mass");
        Self { grid, index }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, region: &Region) -> Point2D {
        let size = self.grid.cell_size();
        loop {
            let corner = self.grid.cell_corner(self.index.sample(rng));
            let p = Point2D::new(corner.x + rng.random::<f64>() * size, corner.y + rng.random::<f64>() * size);
            if region.contains(&p) {
                return p;
            }
        }
    }
}

/// `count` patients at uniform times over `[0, horizon)`. A patient
/// appearing in hour `h` is placed by `grids[h % grids.len()]`.
pub fn grid_density(seed: u64, count: usize, horizon: Seconds, grids: &[DensityGrid], region: &Region) -> Vec<Spawn> {
    let mut rng = stream_rng(seed, DEMAND_STREAM);
    let samplers: Vec<GridSampler> = grids.iter().map(GridSampler::new).collect();
    let mut times: Vec<Seconds> = (0..count).map(|_| rng.random::<f64>() * horizon).collect();
    times.sort_by(f64::total_cmp);
    let spawns = times
        .into_iter()
        .map(|t| {
            let hour = (t / 3600.0).floor() as usize;
            let p = samplers[hour % samplers.len()].sample(&mut rng, region);
            (t, p, None)
        })
        .collect();
    finish(spawns)
}

/// One patient every `interval` seconds starting at time zero, placed
/// uniformly in the region.
pub fn uniform_region(seed: u64, count: usize, interval: Seconds, region: &Region) -> Vec<Spawn> {
    let mut rng = stream_rng(seed, DEMAND_STREAM);
    let spawns = (0..count)
        .map(|i| (i as f64 * interval, uniform_point(&mut rng, region), None))
        .collect();
    finish(spawns)
}

/// Trips between a central cluster and four clusters at the edge
/// midpoints. Each window of `window` seconds gets exactly `per_window`
/// customers, all at its start or at uniform times when `spread`;
/// directions alternate inbound and outbound.
pub fn center_periphery(seed: u64, per_window: usize, window: Seconds, horizon: Seconds, sigma: f64, spread: bool, region: &Region) -> Vec<Spawn> {
    let mut rng = stream_rng(seed, DEMAND_STREAM);
    let c = region.center();
    let edges = [
        Point2D::new(region.min_x, c.y),
        Point2D::new(region.max_x, c.y),
        Point2D::new(c.x, region.min_y),
        Point2D::new(c.x, region.max_y),
    ];
    let noise = Normal::new(0.0, sigma).expect("sigma is positive");
    let around = |rng: &mut ChaCha8Rng, mean: Point2D| loop {
        let p = Point2D::new(mean.x + noise.sample(rng), mean.y + noise.sample(rng));
        if region.contains(&p) {
            return p;
        }
    };

    let windows = (horizon / window).ceil() as usize;
    let mut spawns = Vec::with_capacity(windows * per_window);
    let mut k = 0usize;
    for w in 0..windows {
        let start = w as f64 * window;
        let end = (start + window).min(horizon);
        let mut times: Vec<Seconds> = if spread {
            (0..per_window).map(|_| start + rng.random::<f64>() * (end - start)).collect()
        } else {
            vec![start; per_window]
        };
        times.sort_by(f64::total_cmp);
        for t in times {
            let centre = around(&mut rng, c);
            let side = edges[rng.random_range(0..edges.len())];
            let edge = around(&mut rng, side);
            let (o, d) = if k % 2 == 0 { (centre, edge) } else { (edge, centre) };
            spawns.push((t, o, Some(d)));
            k += 1;
        }
    }
    finish(spawns)
}

/// SHA-256 over the exact bits of every spawn, hex encoded.
pub fn spawn_hash(spawns: &[Spawn]) -> String {
    let mut h = Sha256::new();
    for s in spawns {
        h.update((s.id.0 as u64).to_le_bytes());
        h.update(s.time.to_bits().to_le_bytes());
        h.update(s.origin.x.to_bits().to_le_bytes());
        h.update(s.origin.y.to_bits().to_le_bytes());
        if let Some(d) = s.destination {
            h.update(d.x.to_bits().to_le_bytes());
            h.update(d.y.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
