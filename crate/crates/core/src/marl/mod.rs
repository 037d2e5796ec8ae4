//! Independent deep Q-learning agents: replay, exploration, target networks,
//! the DQN / Double DQN / transfer losses, and the training and evaluation
//! loops over a mobility scenario.

mod agent;
mod eval;
mod replay;
mod schedule;
mod train;

pub use agent::{argmax, ddqn_target, dqn_target, loss_and_gradients, select_action, AgentBundle};
pub use eval::{evaluate, held_out_observations, mean_max_q, Audit, EvalOutcome, EvalSettings, Policy};
pub use replay::{ReplayMemory, Transition};
pub use schedule::{epsilon_at, TrainSchedule};
pub use train::{train, write_training_log, Scenario, TrainLogRow, TrainOutcome, TRAINING_LOG_HEADER};

use serde::{Deserialize, Serialize};

use crate::env::EnvError;
use crate::geo::GeoError;
use crate::neuro::NeuroError;
use crate::ConfigError;

/// Learning rule, or the uniform random baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Random,
    Dqn,
    Ddqn,
    DdqnTql,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Random, Variant::Dqn, Variant::Ddqn, Variant::DdqnTql];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Dqn => "dqn",
            Self::Ddqn => "ddqn",
            Self::DdqnTql => "ddqn_tql",
        }
    }

    pub fn is_trainable(self) -> bool {
        self != Self::Random
    }

    pub fn uses_double_target(self) -> bool {
        matches!(self, Self::Ddqn | Self::DdqnTql)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown variant {s:?} (expected random, dqn, ddqn or ddqn_tql)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MarlError {
    #[error("variant ddqn_tql needs an expert model")]
    MissingExpert,
    #[error("expert model does not fit: {0}")]
    ExpertShape(String),
    #[error("variant {0} has no learnable parameters")]
    NotTrainable(Variant),
    #[error("empty Q-value vector")]
    EmptyQ,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("training log: {0}")]
    Log(#[from] csv::Error),
}

/// Independent random stream `id` of a run seeded with `seed`.
pub(crate) fn stream(seed: u64, id: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
