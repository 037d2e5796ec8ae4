//! Joint V2I/V2V spectrum sharing simulator with multi-agent deep
//! Q-learning.
//!
//! * [`geo`]: mobility traces, obstruction classes, channel gains.
//! * [`env`]: SINR, rates, rewards, and episode dynamics.
//! * [`neuro`]: fully connected Q-network, backpropagation, RMSProp.
//! * [`marl`]: replay, exploration, DQN / Double DQN / transfer losses,
//!   training and evaluation loops.
//! * [`evalkit`]: delivery and capacity metrics.
//! * [`experiment`]: configuration files and the experiment runner.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod evalkit;
pub mod experiment;
pub mod geo;
pub mod marl;
pub mod neuro;

pub use env::{Action, NetworkConfig, Observation};
pub use evalkit::RunMetrics;
pub use experiment::ExperimentConfig;
pub use geo::{GainTensor, LinkClass, Scene, TraceSet};
pub use marl::{AgentBundle, TrainSchedule, Variant};
pub use neuro::QNetwork;

/// A configuration value failed validation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending field.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Prefixes the field path with the enclosing section.
    pub fn within(mut self, section: &str) -> Self {
        self.path = format!("{section}.{}", self.path);
        self
    }
}
