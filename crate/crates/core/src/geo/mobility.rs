//! Built-in Manhattan-grid mobility.
//!
//! Streets run along every multiple of the block size on both axes. Vehicles
//! drive on street centerlines at constant speed and pick a new direction
//! uniformly at random (U-turns excluded unless at a dead end) whenever they
//! reach an intersection. Blocks are filled with a building, foliage, or
//! nothing, drawn from the same seeded stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{BaseStation, Obstacle, ObstacleKind, Point, Rect, Scene, TraceSet, Vehicle};
use super::GeoError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub width_m: f64,
    pub height_m: f64,
    pub n_vehicles: usize,
    pub speed_mps: f64,
    pub duration_ms: u64,
    pub period_ms: u64,
    pub block_m: f64,
    /// Distance from a street centerline to the nearest block edge.
    pub street_half_width_m: f64,
    pub building_fraction: f64,
    pub foliage_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width_m: 500.0,
            height_m: 500.0,
            n_vehicles: 8,
            speed_mps: 10.0,
            duration_ms: 13_000,
            period_ms: 100,
            block_m: 50.0,
            street_half_width_m: 7.5,
            building_fraction: 0.5,
            foliage_fraction: 0.2,
        }
    }
}

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

struct Walker {
    // intersection the vehicle is driving towards
    target: (i64, i64),
    dir: usize,
    position: Point,
}

struct Grid {
    nx: i64,
    ny: i64,
    block: f64,
}

impl Grid {
    fn node(&self, n: (i64, i64)) -> Point {
        Point::new(n.0 as f64 * self.block, n.1 as f64 * self.block)
    }

    fn valid(&self, n: (i64, i64)) -> bool {
        (0..=self.nx).contains(&n.0) && (0..=self.ny).contains(&n.1)
    }

    fn exits(&self, n: (i64, i64)) -> Vec<usize> {
        (0..4)
            .filter(|&d| self.valid((n.0 + DIRS[d].0, n.1 + DIRS[d].1)))
            .collect()
    }
}

/// Generates a seeded Manhattan-grid trace.
///
/// The result holds `duration_ms / period_ms + 1` snapshots; a zero duration
/// yields the initial placement only.
pub fn generate_grid_traces(spec: &GridSpec, seed: u64) -> Result<TraceSet, GeoError> {
    let area_ok = spec.width_m.is_finite() && spec.height_m.is_finite();
    if !area_ok || spec.width_m <= 0.0 || spec.height_m <= 0.0 {
        return Err(GeoError::ZeroArea);
    }
    if spec.period_ms == 0 {
        return Err(GeoError::ZeroPeriod);
    }
    if !spec.duration_ms.is_multiple_of(spec.period_ms) {
        return Err(GeoError::InvalidGrid(format!(
            "period {} ms does not divide duration {} ms",
            spec.period_ms, spec.duration_ms
        )));
    }
    if spec.n_vehicles == 0 {
        return Err(GeoError::InvalidGrid("n_vehicles must be at least 1".into()));
    }
    if !(spec.speed_mps > 0.0) {
        return Err(GeoError::InvalidGrid("speed must be positive".into()));
    }
    if !(spec.block_m > 0.0) || spec.width_m < spec.block_m || spec.height_m < spec.block_m {
        return Err(GeoError::InvalidGrid(format!(
            "area {}x{} m cannot hold a {} m block",
            spec.width_m, spec.height_m, spec.block_m
        )));
    }
    let fractions_ok = (0.0..=1.0).contains(&spec.building_fraction)
        && (0.0..=1.0).contains(&spec.foliage_fraction)
        && spec.building_fraction + spec.foliage_fraction <= 1.0;
    if !fractions_ok {
        return Err(GeoError::InvalidGrid("block fill fractions must sum to at most 1".into()));
    }

    let grid = Grid {
        nx: (spec.width_m / spec.block_m).floor() as i64,
        ny: (spec.height_m / spec.block_m).floor() as i64,
        block: spec.block_m,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let obstacles = fill_blocks(spec, &grid, &mut rng);
    let base_station = BaseStation {
        position: Point::new(0.5 * spec.width_m, 0.5 * spec.height_m),
        elevated: true,
    };

    let mut walkers: Vec<Walker> = (0..spec.n_vehicles)
        .map(|_| {
            let start = (rng.random_range(0..=grid.nx), rng.random_range(0..=grid.ny));
            let exits = grid.exits(start);
            let dir = exits[rng.random_range(0..exits.len())];
            let offset = rng.random_range(0.0..grid.block);
            let origin = grid.node(start);
            Walker {
                target: (start.0 + DIRS[dir].0, start.1 + DIRS[dir].1),
                dir,
                position: Point::new(
                    origin.x + DIRS[dir].0 as f64 * offset,
                    origin.y + DIRS[dir].1 as f64 * offset,
                ),
            }
        })
        .collect();

    let steps = spec.duration_ms / spec.period_ms;
    let step_m = spec.speed_mps * spec.period_ms as f64 / 1000.0;
    let mut snapshots = Vec::with_capacity(steps as usize + 1);
    for s in 0..=steps {
        if s > 0 {
            for w in &mut walkers {
                advance(w, step_m, &grid, &mut rng);
            }
        }
        let vehicles = walkers
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let (dx, dy) = DIRS[w.dir];
                Vehicle::new(i as u32, w.position, (dy as f64).atan2(dx as f64))
            })
            .collect();
        snapshots.push(Scene {
            time_ms: s * spec.period_ms,
            vehicles,
            obstacles: obstacles.clone(),
            base_station,
        });
    }
    Ok(TraceSet {
        period_ms: spec.period_ms,
        snapshots,
    })
}

fn fill_blocks(spec: &GridSpec, grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<Obstacle> {
    let inset = spec.street_half_width_m;
    let mut obstacles = Vec::new();
    if 2.0 * inset >= grid.block {
        return obstacles;
    }
    for bx in 0..grid.nx {
        for by in 0..grid.ny {
            let draw: f64 = rng.random();
            let kind = if draw < spec.building_fraction {
                ObstacleKind::Building
            } else if draw < spec.building_fraction + spec.foliage_fraction {
                ObstacleKind::Foliage
            } else {
                continue;
            };
            let x0 = bx as f64 * grid.block;
            let y0 = by as f64 * grid.block;
            let rect = Rect::new(x0 + inset, y0 + inset, x0 + grid.block - inset, y0 + grid.block - inset)
                .expect("inset smaller than half a block");
            obstacles.push(Obstacle {
                id: obstacles.len() as u32,
                kind,
                rect,
            });
        }
    }
    obstacles
}

fn advance(w: &mut Walker, mut remaining: f64, grid: &Grid, rng: &mut ChaCha8Rng) {
    while remaining > 0.0 {
        let target = grid.node(w.target);
        let dist = w.position.distance(target);
        if remaining < dist {
            let (dx, dy) = DIRS[w.dir];
            w.position = Point::new(
                w.position.x + dx as f64 * remaining,
                w.position.y + dy as f64 * remaining,
            );
            return;
        }
        remaining -= dist;
        w.position = target;
        let back = (w.dir + 2) % 4;
        let exits = grid.exits(w.target);
        let forward: Vec<usize> = exits.iter().copied().filter(|&d| d != back).collect();
        let choices = if forward.is_empty() { exits } else { forward };
        w.dir = choices[rng.random_range(0..choices.len())];
        w.target = (w.target.0 + DIRS[w.dir].0, w.target.1 + DIRS[w.dir].1);
    }
}
