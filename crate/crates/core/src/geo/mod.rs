//! Mobility, link classification, and channel gain generation.

mod channel;
mod classify;
mod mobility;
mod propagation;
mod scene;
mod trace_io;

pub use channel::{channel_snapshot, pair_vehicles, GainRole, GainTensor, LargeScale, LinkLayout, PhysicalLink};
pub use classify::{classify_bs_link, classify_link, LinkClass};
pub use mobility::{generate_grid_traces, GridSpec};
pub use propagation::{
    db_to_linear, free_space_loss_1m_db, large_scale_gain_db, linear_to_db, sample_small_scale, ClassParams, LinkEnd,
    LinkShadowing, PropagationConfig, ShadowingState, SPEED_OF_LIGHT_MPS,
};
pub use scene::{
    BaseStation, Obstacle, ObstacleKind, Point, Rect, Scene, TraceSet, Vehicle, DEFAULT_VEHICLE_LENGTH_M,
    DEFAULT_VEHICLE_WIDTH_M,
};
pub use trace_io::{
    attach_obstacles, load_obstacles, load_scenario, load_traces, read_obstacles, read_traces, write_obstacles,
    write_traces, OBSTACLE_HEADER, TRACE_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("invalid rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]")]
    InvalidRect { xmin: f64, ymin: f64, xmax: f64, ymax: f64 },
    #[error("duplicate vehicle id {0}")]
    DuplicateVehicle(u32),
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),
    #[error("non-finite coordinate in {0}")]
    NonFinite(String),
    #[error("zero-area region")]
    ZeroArea,
    #[error("sampling period must be positive")]
    ZeroPeriod,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no snapshots")]
    EmptyTrace,
    #[error("snapshot {0} breaks the constant sampling period")]
    NonUniformTrace(usize),
    #[error("snapshot {0} has a different vehicle set")]
    VehicleSetChanged(usize),
    #[error("{message}")]
    Parse { line: u64, message: String },
    #[error("need {needed} vehicles for pairing, snapshot has {available}")]
    InsufficientVehicles { needed: usize, available: usize },
    #[error("V2V pair ({0}, {1}) has coincident endpoints")]
    CoincidentPair(u32, u32),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
