use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use super::agent::AgentBundle;
use super::replay::Transition;
use super::schedule::{epsilon_at, TrainSchedule};
use super::{stream, MarlError, Variant};
use crate::env::{large_scale_for, reset, step, Action, Fingerprint, NetworkConfig};
use crate::geo::{LargeScale, PropagationConfig, ShadowingState, TraceSet};
use crate::neuro::QNetwork;

const STREAM_INIT: u64 = 1;
const STREAM_SHADOW: u64 = 2;
const STREAM_FADING: u64 = 3;
const STREAM_POLICY: u64 = 4;
const STREAM_REPLAY: u64 = 5;

/// Mobility traces plus the radio configuration run on top of them.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub traces: TraceSet,
    pub network: NetworkConfig,
    pub propagation: PropagationConfig,
}

impl Scenario {
    /// Large-scale channel of trace snapshot `index` (wrapping).
    pub(crate) fn large_scale<R: Rng + ?Sized>(
        &self,
        index: usize,
        shadow: &mut ShadowingState,
        rng: &mut R,
    ) -> Result<Arc<LargeScale>, MarlError> {
        let scene = self.traces.snapshot_wrapping(index);
        Ok(large_scale_for(scene, &self.network, &self.propagation, shadow, rng)?)
    }
}

pub const TRAINING_LOG_HEADER: [&str; 6] = ["episode", "epsilon", "mean_loss", "mean_reward", "v2i_sum_mbps", "v2v_delivered_frac"];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub episode: usize,
    pub epsilon: f64,
    /// Mean over agents that took a gradient step; absent during warm-up.
    pub mean_loss: Option<f64>,
    /// Mean per-step global reward.
    pub mean_reward: f64,
    /// Mean per-step V2I sum rate.
    pub v2i_sum_mbps: f64,
    pub v2v_delivered_frac: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub bundles: Vec<AgentBundle>,
    pub log: Vec<TrainLogRow>,
    /// Fingerprint of the last training episode, frozen for evaluation.
    pub final_fingerprint: Fingerprint,
    /// Distinct trace snapshots consumed.
    pub snapshots_used: usize,
}

impl TrainOutcome {
    pub fn networks(&self) -> Vec<QNetwork> {
        self.bundles.iter().map(|b| b.online.clone()).collect()
    }
}

/// Trains one network per V2V agent on `scenario`. The large-scale channel
/// advances to the next trace snapshot every `refresh_episodes`.
pub fn train(
    scenario: &Scenario,
    sched: &TrainSchedule,
    variant: Variant,
    expert: Option<&[QNetwork]>,
    seed: u64,
) -> Result<TrainOutcome, MarlError> {
    if !variant.is_trainable() {
        return Err(MarlError::NotTrainable(variant));
    }
    sched.validate()?;
    let cfg = &scenario.network;
    cfg.validate()?;
    if variant == Variant::DdqnTql && expert.is_none() {
        return Err(MarlError::MissingExpert);
    }
    if let Some(e) = expert {
        if e.len() < cfg.k {
            return Err(MarlError::ExpertShape(format!("{} expert networks for {} agents", e.len(), cfg.k)));
        }
    }

    let sizes = sched.layer_sizes(cfg);
    let mut init = stream(seed, STREAM_INIT);
    let mut bundles = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let mut b = AgentBundle::new(k, &sizes, sched, init.random())?;
        if let (Variant::DdqnTql, Some(e)) = (variant, expert) {
            b.set_expert(e[k].clone())?;
        }
        bundles.push(b);
    }

    let mut shadow_rng = stream(seed, STREAM_SHADOW);
    let mut fading = stream(seed, STREAM_FADING);
    let mut policy = stream(seed, STREAM_POLICY);
    let mut replay = stream(seed, STREAM_REPLAY);
    let mut shadow = ShadowingState::new();
    let needed = sched.episodes.div_ceil(sched.refresh_episodes);
    if needed > scenario.traces.len() {
        log::warn!(
            "training needs {needed} snapshots but the trace has {}; wrapping around",
            scenario.traces.len()
        );
    }

    let n_levels = cfg.n_power_levels();
    let mut log_rows = Vec::with_capacity(sched.episodes);
    let mut large = None;
    let mut fingerprint = Fingerprint::new(sched.epsilon_start, 0, sched.episodes);
    for episode in 0..sched.episodes {
        let epsilon = epsilon_at(episode, sched);
        fingerprint = Fingerprint::new(epsilon, episode + 1, sched.episodes);
        if episode % sched.refresh_episodes == 0 {
            large = Some(scenario.large_scale(episode / sched.refresh_episodes, &mut shadow, &mut shadow_rng)?);
        }
        let current = Arc::clone(large.as_ref().expect("set on the first episode"));
        let (mut state, mut obs) = reset(current, cfg, fingerprint, &mut fading)?;

        let (mut reward_sum, mut v2i_sum, mut steps) = (0.0, 0.0, 0usize);
        while !state.is_done() {
            let mut flat = Vec::with_capacity(cfg.k);
            for (b, o) in bundles.iter().zip(&obs) {
                flat.push(b.act(o, epsilon, &mut policy)?);
            }
            let joint: Vec<Action> = flat.iter().map(|&a| Action::from_flat(a, n_levels)).collect();
            let out = step(&mut state, &joint, cfg, &mut fading)?;
            for ((b, &a), (o, next)) in bundles.iter_mut().zip(&flat).zip(obs.iter().zip(&out.observations)) {
                b.memory.push(Transition {
                    state: o.0.clone(),
                    action: a,
                    reward: out.reward,
                    next_state: next.0.clone(),
                    terminal: out.done,
                });
            }
            reward_sum += out.reward;
            v2i_sum += out.v2i_rates_bps.iter().sum::<f64>();
            steps += 1;
            obs = out.observations;
        }

        let w = sched.transfer_weight_at(episode);
        let mut losses = Vec::new();
        for _ in 0..sched.updates_per_episode {
            for b in bundles.iter_mut() {
                if let Some(l) = b.train_step(sched, variant, w, &mut replay)? {
                    losses.push(l);
                }
            }
        }
        let delivered = (0..cfg.k).filter(|&k| state.is_delivered(k)).count();
        log_rows.push(TrainLogRow {
            episode,
            epsilon,
            mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            mean_reward: reward_sum / steps.max(1) as f64,
            v2i_sum_mbps: v2i_sum / steps.max(1) as f64 / 1e6,
            v2v_delivered_frac: delivered as f64 / cfg.k as f64,
        });
    }

    Ok(TrainOutcome {
        bundles,
        log: log_rows,
        final_fingerprint: fingerprint,
        snapshots_used: needed.min(scenario.traces.len()),
    })
}

pub fn write_training_log<W: Write>(w: W, rows: &[TrainLogRow]) -> Result<(), MarlError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(TRAINING_LOG_HEADER)?;
    for r in rows {
        out.write_record([
            r.episode.to_string(),
            r.epsilon.to_string(),
            r.mean_loss.map(|l| l.to_string()).unwrap_or_default(),
            r.mean_reward.to_string(),
            r.v2i_sum_mbps.to_string(),
            r.v2v_delivered_frac.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geo::{generate_grid_traces, GridSpec};

    pub(crate) fn small_scenario(seed: u64) -> Scenario {
        let spec = GridSpec { duration_ms: 1000, ..GridSpec::default() };
        Scenario {
            traces: generate_grid_traces(&spec, seed).unwrap(),
            network: NetworkConfig { budget_ms: 10, ..NetworkConfig::default() },
            propagation: PropagationConfig::default(),
        }
    }

    pub(crate) fn small_schedule(episodes: usize) -> TrainSchedule {
        TrainSchedule {
            episodes,
            hidden: vec![16, 8],
            batch_size: 16,
            replay_capacity: 200,
            refresh_episodes: 2,
            target_sync_steps: 4,
            ..TrainSchedule::default()
        }
    }

    #[test]
    fn zero_episodes_returns_fresh_agents() {
        let out = train(&small_scenario(1), &small_schedule(0), Variant::Dqn, None, 3).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.bundles.len(), 4);
        assert!(out.bundles.iter().all(|b| b.memory.is_empty() && b.online == b.target));
    }

    #[test]
    fn training_is_deterministic() {
        let sc = small_scenario(2);
        let a = train(&sc, &small_schedule(6), Variant::Ddqn, None, 7).unwrap();
        let b = train(&sc, &small_schedule(6), Variant::Ddqn, None, 7).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.networks(), b.networks());
        let c = train(&sc, &small_schedule(6), Variant::Ddqn, None, 8).unwrap();
        assert_ne!(a.networks(), c.networks());
        assert_eq!(a.snapshots_used, 3);
        assert_eq!(a.final_fingerprint.progress, 1.0);
        assert!(a.log.iter().any(|r| r.mean_loss.is_some()));
    }

    #[test]
    fn transfer_variant_needs_expert() {
        let sc = small_scenario(3);
        let s = small_schedule(2);
        assert!(matches!(train(&sc, &s, Variant::DdqnTql, None, 1), Err(MarlError::MissingExpert)));
        assert!(matches!(train(&sc, &s, Variant::Random, None, 1), Err(MarlError::NotTrainable(_))));
        let expert = train(&sc, &s, Variant::Ddqn, None, 1).unwrap().networks();
        let learner = train(&sc, &s, Variant::DdqnTql, Some(&expert), 2).unwrap();
        assert!(learner.bundles.iter().all(|b| b.expert.is_some()));
    }

    #[test]
    fn log_header_and_rows() {
        let out = train(&small_scenario(4), &small_schedule(2), Variant::Dqn, None, 1).unwrap();
        let mut buf = Vec::new();
        write_training_log(&mut buf, &out.log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "episode,epsilon,mean_loss,mean_reward,v2i_sum_mbps,v2v_delivered_frac");
        assert_eq!(lines.count(), 2);
    }
}
