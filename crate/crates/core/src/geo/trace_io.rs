//! Trace and obstacle CSV ingestion.
//!
//! Trace files carry the header `t_ms,vehicle_id,x_m,y_m,heading_rad` with
//! rows sorted by `(t_ms, vehicle_id)`. Obstacle files carry
//! `id,kind,xmin_m,ymin_m,xmax_m,ymax_m` with `kind` in `{building, foliage}`.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use super::scene::{BaseStation, Obstacle, Point, Rect, Scene, TraceSet, Vehicle};
use super::GeoError;

pub const TRACE_HEADER: [&str; 5] = ["t_ms", "vehicle_id", "x_m", "y_m", "heading_rad"];
pub const OBSTACLE_HEADER: [&str; 6] = ["id", "kind", "xmin_m", "ymin_m", "xmax_m", "ymax_m"];

fn parse_err(line: u64, message: impl std::fmt::Display) -> GeoError {
    GeoError::Parse {
        line,
        message: format!("{message} at line {line}"),
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T, GeoError> {
    let raw = rec.get(idx).ok_or_else(|| parse_err(line, "missing columns"))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse `{raw}` in column {idx}")))
}

fn reader<R: Read>(input: R, expected: &[&str]) -> Result<csv::Reader<R>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != expected {
        return Err(parse_err(
            1,
            format!("missing columns: expected header `{}`", expected.join(",")),
        ));
    }
    Ok(rdr)
}

/// Parses a trace CSV. The resulting scenes carry no obstacles and a base
/// station at the centroid of the bounding box of all positions.
pub fn read_traces<R: Read>(input: R) -> Result<TraceSet, GeoError> {
    let mut rdr = reader(input, &TRACE_HEADER)?;
    let mut groups: Vec<(u64, u64, Vec<Vehicle>)> = Vec::new();
    let mut period: Option<u64> = None;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != TRACE_HEADER.len() {
            return Err(parse_err(line, "missing columns"));
        }
        let t: u64 = field(&rec, 0, line)?;
        let id: u32 = field(&rec, 1, line)?;
        let x: f64 = field(&rec, 2, line)?;
        let y: f64 = field(&rec, 3, line)?;
        let heading: f64 = field(&rec, 4, line)?;
        if !(x.is_finite() && y.is_finite() && heading.is_finite()) {
            return Err(parse_err(line, "non-finite coordinate"));
        }

        match groups.last_mut() {
            Some((last_t, _, vehicles)) if *last_t == t => {
                if vehicles.iter().any(|v| v.id == id) {
                    return Err(parse_err(line, format!("duplicate vehicle id {id}")));
                }
                vehicles.push(Vehicle::new(id, Point::new(x, y), heading));
            }
            Some((last_t, _, _)) if t < *last_t => {
                return Err(parse_err(line, format!("non-monotone timestamps: {t} after {last_t}")));
            }
            last => {
                if let Some((last_t, _, _)) = last {
                    let step = t - *last_t;
                    match period {
                        None => period = Some(step),
                        Some(p) if p != step => {
                            return Err(parse_err(line, "non-uniform sampling period"));
                        }
                        _ => {}
                    }
                }
                groups.push((t, line, vec![Vehicle::new(id, Point::new(x, y), heading)]));
            }
        }
    }

    if groups.is_empty() {
        return Err(GeoError::EmptyTrace);
    }

    let id_set = |vs: &[Vehicle]| vs.iter().map(|v| v.id).collect::<BTreeSet<u32>>();
    let reference = id_set(&groups[0].2);
    for (_, line, vehicles) in &groups {
        let ids = id_set(vehicles);
        if let Some(missing) = reference.difference(&ids).next() {
            return Err(parse_err(*line, format!("vehicle id {missing} absent from snapshot starting")));
        }
        if let Some(extra) = ids.difference(&reference).next() {
            return Err(parse_err(*line, format!("vehicle id {extra} absent from earlier snapshots")));
        }
    }

    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for v in groups.iter().flat_map(|g| g.2.iter()) {
        lo = Point::new(lo.x.min(v.position.x), lo.y.min(v.position.y));
        hi = Point::new(hi.x.max(v.position.x), hi.y.max(v.position.y));
    }
    let base_station = BaseStation {
        position: Point::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)),
        elevated: true,
    };

    let snapshots = groups
        .into_iter()
        .map(|(t, _, mut vehicles)| {
            vehicles.sort_by_key(|v| v.id);
            Scene {
                time_ms: t,
                vehicles,
                obstacles: Vec::new(),
                base_station,
            }
        })
        .collect();
    Ok(TraceSet {
        period_ms: period.unwrap_or(0),
        snapshots,
    })
}

pub fn read_obstacles<R: Read>(input: R) -> Result<Vec<Obstacle>, GeoError> {
    let mut rdr = reader(input, &OBSTACLE_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != OBSTACLE_HEADER.len() {
            return Err(parse_err(line, "missing columns"));
        }
        let id: u32 = field(&rec, 0, line)?;
        let kind = rec[1].trim().parse().map_err(|e: String| parse_err(line, e))?;
        let rect = Rect::new(
            field(&rec, 2, line)?,
            field(&rec, 3, line)?,
            field(&rec, 4, line)?,
            field(&rec, 5, line)?,
        )
        .map_err(|e| parse_err(line, e.to_string()))?;
        out.push(Obstacle { id, kind, rect });
    }
    Ok(out)
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<TraceSet, GeoError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GeoError::Io(path.display().to_string(), e))?;
    read_traces(std::io::BufReader::new(file))
}

pub fn load_obstacles(path: impl AsRef<Path>) -> Result<Vec<Obstacle>, GeoError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GeoError::Io(path.display().to_string(), e))?;
    read_obstacles(std::io::BufReader::new(file))
}

/// Loads a trace and attaches an obstacle map. The base station sits at the
/// centroid of the bounding box of vehicle positions and obstacles.
pub fn load_scenario(trace: impl AsRef<Path>, obstacles: Option<&Path>) -> Result<TraceSet, GeoError> {
    let mut set = load_traces(trace)?;
    if let Some(path) = obstacles {
        let obstacles = load_obstacles(path)?;
        attach_obstacles(&mut set, obstacles);
    }
    Ok(set)
}

pub fn attach_obstacles(set: &mut TraceSet, obstacles: Vec<Obstacle>) {
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    let corners = set
        .snapshots
        .iter()
        .flat_map(|s| s.vehicles.iter().map(|v| v.position))
        .chain(obstacles.iter().flat_map(|o| [o.rect.min, o.rect.max]));
    for p in corners {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let bs = Point::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
    for s in &mut set.snapshots {
        s.obstacles = obstacles.clone();
        s.base_station.position = bs;
    }
}

pub fn write_traces<W: Write>(set: &TraceSet, out: W) -> Result<(), GeoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| GeoError::Io("trace writer".into(), e.into());
    w.write_record(TRACE_HEADER).map_err(io)?;
    for s in &set.snapshots {
        for v in &s.vehicles {
            w.write_record([
                s.time_ms.to_string(),
                v.id.to_string(),
                v.position.x.to_string(),
                v.position.y.to_string(),
                v.heading.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| GeoError::Io("trace writer".into(), e))
}

pub fn write_obstacles<W: Write>(obstacles: &[Obstacle], out: W) -> Result<(), GeoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| GeoError::Io("obstacle writer".into(), e.into());
    w.write_record(OBSTACLE_HEADER).map_err(io)?;
    for o in obstacles {
        let kind = match o.kind {
            super::ObstacleKind::Building => "building",
            super::ObstacleKind::Foliage => "foliage",
        };
        w.write_record([
            o.id.to_string(),
            kind.to_string(),
            o.rect.min.x.to_string(),
            o.rect.min.y.to_string(),
            o.rect.max.x.to_string(),
            o.rect.max.y.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| GeoError::Io("obstacle writer".into(), e))
}
