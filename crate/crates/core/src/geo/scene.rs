use serde::{Deserialize, Serialize};

use super::GeoError;

/// Planar position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle, `min` strictly below `max` on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeoError> {
        let all_finite = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite());
        if !all_finite || xmin >= xmax || ymin >= ymax {
            return Err(GeoError::InvalidRect { xmin, ymin, xmax, ymax });
        }
        Ok(Self {
            min: Point::new(xmin, ymin),
            max: Point::new(xmax, ymax),
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    /// Liang–Barsky clip of the closed segment `a→b` against the rectangle.
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let edges = [
            (-dx, a.x - self.min.x),
            (dx, self.max.x - a.x),
            (-dy, a.y - self.min.y),
            (dy, self.max.y - a.y),
        ];
        for (p, q) in edges {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
                continue;
            }
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return false;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return false;
                }
                t1 = t1.min(r);
            }
        }
        t0 <= t1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    Building,
    Foliage,
}

impl std::str::FromStr for ObstacleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "building" => Ok(Self::Building),
            "foliage" => Ok(Self::Foliage),
            other => Err(format!("unknown obstacle kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub kind: ObstacleKind,
    pub rect: Rect,
}

pub const DEFAULT_VEHICLE_LENGTH_M: f64 = 4.5;
pub const DEFAULT_VEHICLE_WIDTH_M: f64 = 1.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub position: Point,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Vehicle {
    pub fn new(id: u32, position: Point, heading: f64) -> Self {
        Self {
            id,
            position,
            heading,
            length: DEFAULT_VEHICLE_LENGTH_M,
            width: DEFAULT_VEHICLE_WIDTH_M,
        }
    }

    fn to_local(&self, p: Point) -> Point {
        let (s, c) = self.heading.sin_cos();
        let dx = p.x - self.position.x;
        let dy = p.y - self.position.y;
        Point::new(c * dx + s * dy, -s * dx + c * dy)
    }

    fn local_box(&self) -> Rect {
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        Rect {
            min: Point::new(-hl, -hw),
            max: Point::new(hl, hw),
        }
    }

    /// Whether `p` lies on the vehicle's oriented footprint.
    pub fn footprint_contains(&self, p: Point) -> bool {
        self.local_box().contains(self.to_local(p))
    }

    /// Whether the segment `a→b` crosses the vehicle's oriented footprint.
    pub fn footprint_intersects(&self, a: Point, b: Point) -> bool {
        self.local_box()
            .intersects_segment(self.to_local(a), self.to_local(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: Point,
    /// An elevated mast is never shadowed by vehicles.
    pub elevated: bool,
}

/// Geometry of the network at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub time_ms: u64,
    pub vehicles: Vec<Vehicle>,
    pub obstacles: Vec<Obstacle>,
    pub base_station: BaseStation,
}

impl Scene {
    pub fn validate(&self) -> Result<(), GeoError> {
        let mut ids: Vec<u32> = self.vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(GeoError::DuplicateVehicle(w[0]));
        }
        for v in &self.vehicles {
            if !v.position.is_finite() || !v.heading.is_finite() {
                return Err(GeoError::NonFinite(format!("vehicle {}", v.id)));
            }
        }
        for o in &self.obstacles {
            let r = o.rect;
            if !(r.min.x < r.max.x && r.min.y < r.max.y) {
                return Err(GeoError::InvalidRect {
                    xmin: r.min.x,
                    ymin: r.min.y,
                    xmax: r.max.x,
                    ymax: r.max.y,
                });
            }
        }
        if !self.base_station.position.is_finite() {
            return Err(GeoError::NonFinite("base station".into()));
        }
        Ok(())
    }

    pub fn vehicle(&self, id: u32) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }
}

/// Scenes sampled at a constant period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub period_ms: u64,
    pub snapshots: Vec<Scene>,
}

impl TraceSet {
    pub fn duration_ms(&self) -> u64 {
        match (self.snapshots.first(), self.snapshots.last()) {
            (Some(a), Some(b)) => b.time_ms - a.time_ms,
            _ => 0,
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Snapshot `index`, wrapping around the end of the trace.
    pub fn snapshot_wrapping(&self, index: usize) -> &Scene {
        &self.snapshots[index % self.snapshots.len()]
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.snapshots.is_empty() {
            return Err(GeoError::EmptyTrace);
        }
        let ids = |s: &Scene| {
            let mut v: Vec<u32> = s.vehicles.iter().map(|v| v.id).collect();
            v.sort_unstable();
            v
        };
        let first_ids = ids(&self.snapshots[0]);
        for (i, s) in self.snapshots.iter().enumerate() {
            s.validate()?;
            if i > 0 {
                let prev = self.snapshots[i - 1].time_ms;
                if s.time_ms <= prev || s.time_ms - prev != self.period_ms {
                    return Err(GeoError::NonUniformTrace(i));
                }
            }
            if ids(s) != first_ids {
                return Err(GeoError::VehicleSetChanged(i));
            }
        }
        Ok(())
    }
}
