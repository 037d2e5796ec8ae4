use serde::{Deserialize, Serialize};

use crate::env::NetworkConfig;
use crate::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub anneal_fraction: f64,
    /// Target network copy period, in gradient steps.
    pub target_sync_steps: usize,
    /// Episodes between large-scale fading refreshes.
    pub refresh_episodes: usize,
    pub gamma: f64,
    pub batch_size: usize,
    pub updates_per_episode: usize,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    /// Initial weight of the expert term for the transfer variant.
    pub transfer_weight: f64,
    /// Anneal the expert weight linearly to zero over training.
    pub transfer_anneal: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            episodes: 3000,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            anneal_fraction: 0.8,
            target_sync_steps: 500,
            refresh_episodes: 100,
            gamma: 0.95,
            batch_size: 512,
            updates_per_episode: 1,
            replay_capacity: 100_000,
            hidden: vec![256, 128, 64],
            learning_rate: 1e-3,
            rms_decay: 0.99,
            rms_epsilon: 1e-8,
            transfer_weight: 0.5,
            transfer_anneal: true,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &str, msg: &str| Err(ConfigError::invalid(field, msg));
        if !(0.0 <= self.epsilon_end && self.epsilon_end <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return err("epsilon_start", "need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if !(self.anneal_fraction > 0.0 && self.anneal_fraction <= 1.0) {
            return err("anneal_fraction", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err("gamma", "must lie in [0, 1]");
        }
        for (name, v) in [
            ("target_sync_steps", self.target_sync_steps),
            ("refresh_episodes", self.refresh_episodes),
            ("batch_size", self.batch_size),
            ("updates_per_episode", self.updates_per_episode),
            ("replay_capacity", self.replay_capacity),
        ] {
            if v == 0 {
                return err(name, "must be at least 1");
            }
        }
        if self.hidden.contains(&0) {
            return err("hidden", "layer widths must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate", "must be positive");
        }
        if !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return err("rms_decay", "must lie in (0, 1)");
        }
        if !(self.rms_epsilon > 0.0) {
            return err("rms_epsilon", "must be positive");
        }
        if !(self.transfer_weight >= 0.0 && self.transfer_weight.is_finite()) {
            return err("transfer_weight", "must be non-negative");
        }
        Ok(())
    }

    /// Input, hidden, and output widths for `cfg`.
    pub fn layer_sizes(&self, cfg: &NetworkConfig) -> Vec<usize> {
        let mut sizes = vec![cfg.observation_len()];
        sizes.extend(&self.hidden);
        sizes.push(cfg.n_actions());
        sizes
    }

    /// Expert weight in effect during `episode`.
    pub fn transfer_weight_at(&self, episode: usize) -> f64 {
        if !self.transfer_anneal || self.episodes == 0 {
            return self.transfer_weight;
        }
        self.transfer_weight * (1.0 - episode as f64 / self.episodes as f64).max(0.0)
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over the first
/// `anneal_fraction` of the episodes, constant afterwards.
pub fn epsilon_at(episode: usize, sched: &TrainSchedule) -> f64 {
    let horizon = sched.anneal_fraction * sched.episodes as f64;
    let e = episode as f64;
    if e >= horizon {
        return sched.epsilon_end;
    }
    sched.epsilon_start - (sched.epsilon_start - sched.epsilon_end) * (e / horizon)
}
