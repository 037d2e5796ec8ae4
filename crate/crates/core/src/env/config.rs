use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// Radio and reward parameters of the spectrum-sharing network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of V2I links, one per sub-band.
    pub m: usize,
    /// Number of V2V links (agents).
    pub k: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub v2i_power_dbm: f64,
    /// V2V power levels, strictly decreasing. The last level is the one a
    /// delivered agent is forced to.
    pub power_levels_dbm: Vec<f64>,
    pub noise_dbm: f64,
    pub payload_bytes: u64,
    pub budget_ms: u64,
    pub coherence_ms: u64,
    pub beta: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    /// Reward units per Mbps of V2I rate.
    pub v2i_reward_per_mbps: f64,
    /// Reward units per Mbps of V2V rate.
    pub v2v_reward_per_mbps: f64,
}

pub const PAYLOAD_UNIT_BYTES: u64 = 1060;

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            m: 4,
            k: 4,
            bandwidth_hz: 4e6,
            carrier_hz: 2e9,
            v2i_power_dbm: 23.0,
            power_levels_dbm: vec![23.0, 15.0, 5.0, -100.0],
            noise_dbm: -114.0,
            payload_bytes: 2 * PAYLOAD_UNIT_BYTES,
            budget_ms: 100,
            coherence_ms: 1,
            beta: 10.0,
            lambda_c: 0.1,
            lambda_d: 0.9,
            v2i_reward_per_mbps: 0.1,
            v2v_reward_per_mbps: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &str, msg: &str| Err(ConfigError::invalid(field, msg));
        if self.m == 0 {
            return err("m", "must be at least 1");
        }
        if self.k == 0 {
            return err("k", "must be at least 1");
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return err("bandwidth_hz", "must be positive");
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return err("carrier_hz", "must be positive");
        }
        if self.power_levels_dbm.is_empty() {
            return err("power_levels_dbm", "must list at least one level");
        }
        if self.power_levels_dbm.windows(2).any(|w| !(w[0] > w[1])) {
            return err("power_levels_dbm", "must be strictly decreasing");
        }
        let finite = [self.v2i_power_dbm, self.noise_dbm]
            .iter()
            .chain(&self.power_levels_dbm)
            .all(|v| v.is_finite());
        if !finite {
            return err("power_levels_dbm", "powers must be finite");
        }
        if self.payload_bytes == 0 {
            return err("payload_bytes", "must be positive");
        }
        if self.coherence_ms == 0 {
            return err("coherence_ms", "must be positive");
        }
        if self.budget_ms == 0 || !self.budget_ms.is_multiple_of(self.coherence_ms) {
            return err("budget_ms", "must be a positive multiple of coherence_ms");
        }
        if !(self.beta > 0.0) {
            return err("beta", "must be positive");
        }
        if !(self.lambda_c >= 0.0) {
            return err("lambda_c", "must be non-negative");
        }
        if !(self.lambda_d >= 0.0) {
            return err("lambda_d", "must be non-negative");
        }
        if !(self.v2i_reward_per_mbps >= 0.0 && self.v2v_reward_per_mbps >= 0.0) {
            return err("v2i_reward_per_mbps", "reward scales must be non-negative");
        }
        Ok(())
    }

    /// Steps per episode.
    pub fn horizon(&self) -> usize {
        (self.budget_ms / self.coherence_ms) as usize
    }

    pub fn payload_bits(&self) -> f64 {
        (self.payload_bytes * 8) as f64
    }

    pub fn n_power_levels(&self) -> usize {
        self.power_levels_dbm.len()
    }

    pub fn n_actions(&self) -> usize {
        self.m * self.n_power_levels()
    }

    /// Observation width: four gain groups and measured interference per
    /// sub-band, then payload, time, and the two fingerprint entries.
    pub fn observation_len(&self) -> usize {
        5 * self.m + 4
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }

    pub fn v2i_power_mw(&self) -> f64 {
        dbm_to_mw(self.v2i_power_dbm)
    }

    pub fn power_mw(&self, level: usize) -> f64 {
        dbm_to_mw(self.power_levels_dbm[level])
    }

    pub fn silent_level(&self) -> usize {
        self.power_levels_dbm.len() - 1
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// A sub-band and power level choice. The flat index is
/// `sub_band * n_levels + power_level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub sub_band: usize,
    pub power_level: usize,
}

impl Action {
    pub fn from_flat(index: usize, n_levels: usize) -> Self {
        Self {
            sub_band: index / n_levels,
            power_level: index % n_levels,
        }
    }

    pub fn flat(self, n_levels: usize) -> usize {
        self.sub_band * n_levels + self.power_level
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = NetworkConfig::default();
        c.validate().unwrap();
        assert_eq!(c.horizon(), 100);
        assert_eq!(c.payload_bits(), 16960.0);
        assert_eq!(c.observation_len(), 24);
        assert_eq!(c.n_actions(), 16);
    }

    #[test]
    fn flat_action_is_bijective() {
        let levels = 4;
        for a in 0..16 {
            let act = Action::from_flat(a, levels);
            assert!(act.sub_band < 4 && act.power_level < 4);
            assert_eq!(act.flat(levels), a);
        }
    }

    #[test]
    fn validation_names_the_field() {
        let c = NetworkConfig {
            power_levels_dbm: vec![23.0, 23.0],
            ..NetworkConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().path, "power_levels_dbm");
        let c = NetworkConfig {
            budget_ms: 100,
            coherence_ms: 3,
            ..NetworkConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().path, "budget_ms");
        let c = NetworkConfig {
            lambda_d: -1.0,
            ..NetworkConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
