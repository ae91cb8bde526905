//! Demand generation.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::DemandConfig;
use crate::error::{Error, Result};
use crate::grid::{Cell, Grid, Round};
use crate::model::{Request, RequestId};
use crate::rng::keyed_rng;

/// Per-round request counts: `pool_size` draws from Normal(mean, stddev),
/// rounded to the nearest integer and clamped at zero.
pub fn build_demand_pool(config: &DemandConfig) -> Result<Vec<u32>> {
    let normal = Normal::new(config.pool_mean, config.pool_stddev)
        .map_err(|e| Error::Config(format!("demand pool distribution: {e}")))?;
    let mut rng = keyed_rng(config.seed, b"pool", &[]);
    Ok((0..config.pool_size)
        .map(|_| {
            let x: f64 = normal.sample(&mut rng);
            x.round().clamp(0.0, f64::from(u32::MAX)) as u32
        })
        .collect())
}

/// Cells within Manhattan distance `radius` of `center`, row-major.
pub fn manhattan_ball(grid: &Grid, center: Cell, radius: u32) -> Vec<Cell> {
    let mut cells = Vec::new();
    for row in center.row.saturating_sub(radius)..=(center.row + radius).min(grid.rows() - 1) {
        for col in center.col.saturating_sub(radius)..=(center.col + radius).min(grid.cols() - 1) {
            let c = Cell::new(row, col);
            if c.manhattan(center) <= radius {
                cells.push(c);
            }
        }
    }
    cells
}

/// Seeded request source. Cheap to clone.
#[derive(Clone, Debug)]
pub struct DemandModel {
    config: DemandConfig,
    pool: Arc<Vec<u32>>,
    ball: Arc<Vec<Cell>>,
}

impl DemandModel {
    pub fn new(grid: &Grid, config: &DemandConfig) -> Result<Self> {
        let pool = build_demand_pool(config)?;
        let ball = manhattan_ball(grid, grid.center(), config.od_radius);
        if ball.len() < 2 {
            return Err(Error::Config("origin/destination ball needs at least two cells".into()));
        }
        Ok(DemandModel { config: config.clone(), pool: Arc::new(pool), ball: Arc::new(ball) })
    }

    pub fn pool(&self) -> &[u32] {
        &self.pool
    }

    /// Number of requests arriving in `round`: a uniform draw from the pool.
    pub fn count(&self, round: Round) -> u32 {
        let mut rng = keyed_rng(self.config.seed, b"count", &[u64::from(round)]);
        self.pool[rng.random_range(0..self.pool.len())]
    }

    /// The `count` requests arriving in `round`.
    pub fn generate_requests(&self, grid: &Grid, now: Round, count: u32) -> Vec<Request> {
        (0..count)
            .map(|j| {
                let mut rng = keyed_rng(self.config.seed, b"request", &[u64::from(now), u64::from(j)]);
                let wait = rng.random_range(self.config.waiting_min..=self.config.waiting_max);
                let origin = self.ball[rng.random_range(0..self.ball.len())];
                let destination = loop {
                    let d = self.ball[rng.random_range(0..self.ball.len())];
                    if d != origin {
                        break d;
                    }
                };
                Request::new(grid, RequestId::from_round(now, j), origin, destination, now, now + wait)
                    .expect("ball cells are in bounds and distinct")
            })
            .collect()
    }

    pub fn round(&self, grid: &Grid, now: Round) -> Vec<Request> {
        self.generate_requests(grid, now, self.count(now))
    }
}
