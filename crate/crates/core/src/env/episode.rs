//! Episode dynamics: observations, rewards, payload bookkeeping.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Action, NetworkConfig};
use super::radio::{link_rate, v2i_sinr, v2v_interference, v2v_sinr, ChannelGains, Transmission};
use super::EnvError;
use crate::geo::{linear_to_db, pair_vehicles, GainTensor, LargeScale, PropagationConfig, Scene, ShadowingState};

/// Policy-change fingerprint appended to every observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub epsilon: f64,
    /// Training iteration normalized to `[0, 1]`.
    pub progress: f64,
}

impl Fingerprint {
    pub fn new(epsilon: f64, iteration: usize, total_iterations: usize) -> Self {
        let progress = if total_iterations == 0 {
            0.0
        } else {
            (iteration as f64 / total_iterations as f64).clamp(0.0, 1.0)
        };
        Self { epsilon, progress }
    }
}

/// Normalized local observation of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl std::ops::Deref for Observation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Maps a dB (or dBm) quantity into the network input range.
pub fn normalize_db(x_db: f64) -> f64 {
    if x_db.is_nan() {
        return 0.0;
    }
    ((x_db + 120.0) / 60.0).clamp(0.0, 2.0)
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub t: usize,
    pub horizon: usize,
    pub initial_bits: f64,
    /// Cumulative bits delivered per agent.
    pub delivered_bits: Vec<f64>,
    /// Step count (1-based) at which each agent completed its payload.
    pub delivered_at: Vec<Option<usize>>,
    pub gains: GainTensor,
    /// Allocation of the last joint action, `None` before the first step.
    pub allocation: Vec<Option<Action>>,
    /// Interference plus noise (mW) each receiver measured on each sub-band
    /// during the last interval, row-major `[k][m]`.
    pub measured_mw: Vec<f64>,
    pub fingerprint: Fingerprint,
}

impl EpisodeState {
    pub fn k(&self) -> usize {
        self.delivered_bits.len()
    }

    pub fn remaining_bits(&self, k: usize) -> f64 {
        self.initial_bits - self.delivered_bits[k]
    }

    pub fn is_delivered(&self, k: usize) -> bool {
        self.delivered_bits[k] >= self.initial_bits
    }

    pub fn all_delivered(&self) -> bool {
        (0..self.k()).all(|k| self.is_delivered(k))
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.horizon
    }

    /// Number of sub-bands agent `k` occupies under the last allocation.
    pub fn bands_used(&self, k: usize) -> usize {
        usize::from(self.allocation[k].is_some())
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub v2i_rates_bps: Vec<f64>,
    /// Rate of each V2V link on the sub-band it used.
    pub v2v_rates_bps: Vec<f64>,
    /// Per-agent V2V reward term before weighting.
    pub v2v_rewards: Vec<f64>,
    pub reward: f64,
    pub observations: Vec<Observation>,
    pub done: bool,
}

/// V2V reward of one agent: its rate in reward units while payload remains,
/// `beta` once delivered.
pub fn v2v_reward(rate_bps: f64, delivered_before_step: bool, cfg: &NetworkConfig) -> f64 {
    if delivered_before_step {
        cfg.beta
    } else {
        rate_bps / 1e6 * cfg.v2v_reward_per_mbps
    }
}

/// Global reward shared by all agents.
pub fn global_reward(v2i_rates_bps: &[f64], v2v_rewards: &[f64], cfg: &NetworkConfig) -> f64 {
    let v2i: f64 = v2i_rates_bps.iter().map(|r| r / 1e6 * cfg.v2i_reward_per_mbps).sum();
    let v2v: f64 = v2v_rewards.iter().sum();
    cfg.lambda_c * v2i + cfg.lambda_d * v2v
}

/// Observation of agent `k` in the current interval.
pub fn build_observation(k: usize, state: &EpisodeState, cfg: &NetworkConfig) -> Observation {
    let g = &state.gains;
    let m = cfg.m;
    let mut obs = Vec::with_capacity(cfg.observation_len());
    let db = |x: f64| normalize_db(linear_to_db(x));
    obs.extend((0..m).map(|b| db(g.v2v_direct(k, b))));
    obs.extend((0..m).map(|b| db(g.v2v_to_bs(k, b))));
    obs.extend((0..m).map(|b| db(g.v2i_to_v2v(b, k))));
    obs.extend((0..m).map(|b| {
        let cross: f64 = (0..cfg.k).filter(|&o| o != k).map(|o| g.v2v_cross(o, k, b)).sum();
        db(cross)
    }));
    obs.extend((0..m).map(|b| db(state.measured_mw[k * m + b])));
    obs.push((state.remaining_bits(k) / state.initial_bits).clamp(0.0, 1.0));
    obs.push(((state.horizon - state.t.min(state.horizon)) as f64 / state.horizon as f64).clamp(0.0, 1.0));
    obs.push(state.fingerprint.epsilon.clamp(0.0, 1.0));
    obs.push(state.fingerprint.progress.clamp(0.0, 1.0));
    Observation(obs)
}

/// Starts an episode on a fixed large-scale channel with fresh small-scale
/// fading and a full payload for every agent.
pub fn reset<R: Rng + ?Sized>(
    large: Arc<LargeScale>,
    cfg: &NetworkConfig,
    fingerprint: Fingerprint,
    rng: &mut R,
) -> Result<(EpisodeState, Vec<Observation>), EnvError> {
    if large.m != cfg.m || large.k != cfg.k {
        return Err(EnvError::Shape {
            expected: (cfg.m, cfg.k),
            found: (large.m, large.k),
        });
    }
    let gains = GainTensor::draw(large, rng);
    let state = EpisodeState {
        t: 0,
        horizon: cfg.horizon(),
        initial_bits: cfg.payload_bits(),
        delivered_bits: vec![0.0; cfg.k],
        delivered_at: vec![None; cfg.k],
        gains,
        allocation: vec![None; cfg.k],
        measured_mw: vec![cfg.noise_mw(); cfg.k * cfg.m],
        fingerprint,
    };
    let obs = (0..cfg.k).map(|k| build_observation(k, &state, cfg)).collect();
    Ok((state, obs))
}

/// Pairs the vehicles of `scene` and evaluates the large-scale channel.
pub fn large_scale_for<R: Rng + ?Sized>(
    scene: &Scene,
    cfg: &NetworkConfig,
    propagation: &PropagationConfig,
    shadow: &mut ShadowingState,
    rng: &mut R,
) -> Result<Arc<LargeScale>, EnvError> {
    let layout = pair_vehicles(scene, cfg.k, cfg.m)?;
    Ok(Arc::new(LargeScale::compute(scene, &layout, cfg.carrier_hz, propagation, shadow, rng)?))
}

/// Advances one coherence interval under the joint action.
pub fn step<R: Rng + ?Sized>(
    state: &mut EpisodeState,
    joint: &[Action],
    cfg: &NetworkConfig,
    rng: &mut R,
) -> Result<StepOutcome, EnvError> {
    if state.is_done() {
        return Err(EnvError::EpisodeOver);
    }
    if joint.len() != cfg.k {
        return Err(EnvError::ActionCount {
            expected: cfg.k,
            found: joint.len(),
        });
    }
    let levels = cfg.n_power_levels();
    for (agent, a) in joint.iter().enumerate() {
        if a.sub_band >= cfg.m || a.power_level >= levels {
            return Err(EnvError::MalformedAction {
                agent,
                index: a.sub_band * levels + a.power_level,
            });
        }
    }

    let delivered_before: Vec<bool> = (0..cfg.k).map(|k| state.is_delivered(k)).collect();
    let effective: Vec<Action> = joint
        .iter()
        .zip(&delivered_before)
        .map(|(a, &done)| Action {
            sub_band: a.sub_band,
            power_level: if done { cfg.silent_level() } else { a.power_level },
        })
        .collect();
    let alloc: Vec<Option<Transmission>> = effective
        .iter()
        .map(|a| {
            Some(Transmission {
                band: a.sub_band,
                power_mw: cfg.power_mw(a.power_level),
            })
        })
        .collect();

    let gains = &state.gains;
    let v2i_rates_bps: Vec<f64> = (0..cfg.m)
        .map(|m| link_rate(v2i_sinr(m, &alloc, gains, cfg), cfg.bandwidth_hz))
        .collect();
    let v2v_rates_bps: Vec<f64> = effective
        .iter()
        .enumerate()
        .map(|(k, a)| link_rate(v2v_sinr(k, a.sub_band, &alloc, gains, cfg), cfg.bandwidth_hz))
        .collect();
    let v2v_rewards: Vec<f64> = v2v_rates_bps
        .iter()
        .zip(&delivered_before)
        .map(|(&r, &done)| v2v_reward(r, done, cfg))
        .collect();
    let reward = global_reward(&v2i_rates_bps, &v2v_rewards, cfg);

    let noise = cfg.noise_mw();
    let measured: Vec<f64> = (0..cfg.k)
        .flat_map(|k| (0..cfg.m).map(move |m| (k, m)))
        .map(|(k, m)| noise + v2v_interference(k, m, &alloc, gains, cfg))
        .collect();

    for k in 0..cfg.k {
        if delivered_before[k] {
            continue;
        }
        state.delivered_bits[k] += v2v_rates_bps[k] * cfg.coherence_ms as f64 / 1000.0;
        if state.is_delivered(k) {
            state.delivered_at[k] = Some(state.t + 1);
        }
    }
    state.allocation = effective.into_iter().map(Some).collect();
    state.measured_mw = measured;
    state.gains = state.gains.redraw(rng);
    state.t += 1;

    let observations = (0..cfg.k).map(|k| build_observation(k, state, cfg)).collect();
    Ok(StepOutcome {
        v2i_rates_bps,
        v2v_rates_bps,
        v2v_rewards,
        reward,
        observations,
        done: state.is_done(),
    })
}
