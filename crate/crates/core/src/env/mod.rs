//! The spectrum-sharing environment: K V2V agents reusing the sub-bands of
//! M fixed-power V2I uplinks.

mod config;
mod episode;
mod radio;

pub use config::{dbm_to_mw, Action, NetworkConfig, PAYLOAD_UNIT_BYTES};
pub use episode::{
    build_observation, global_reward, large_scale_for, normalize_db, reset, step, v2v_reward, EpisodeState,
    Fingerprint, Observation, StepOutcome,
};
pub use radio::{link_rate, v2i_sinr, v2v_interference, v2v_sinr, ChannelGains, Transmission};

use crate::geo::GeoError;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("agent {agent}: action index {index} out of range")]
    MalformedAction { agent: usize, index: usize },
    #[error("expected {expected} actions, got {found}")]
    ActionCount { expected: usize, found: usize },
    #[error("channel has shape (M, K) = {found:?}, config expects {expected:?}")]
    Shape { expected: (usize, usize), found: (usize, usize) },
    #[error("episode already finished")]
    EpisodeOver,
    #[error(transparent)]
    Geo(#[from] GeoError),
}
