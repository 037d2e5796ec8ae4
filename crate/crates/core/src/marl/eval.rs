use std::sync::Arc;

use rand::Rng;

use super::agent::{argmax, AgentBundle};
use super::train::Scenario;
use super::{stream, MarlError};
use crate::env::{reset, step, Action, Fingerprint, Observation};
use crate::evalkit::RunMetrics;
use crate::geo::ShadowingState;

const STREAM_SHADOW: u64 = 11;
const STREAM_POLICY: u64 = 12;
const STREAM_FADING_BASE: u64 = 1 << 20;

pub enum Policy<'a> {
    /// Greedy actions from each agent's online network.
    Greedy(&'a [AgentBundle]),
    /// Uniform random sub-band and power level at every step.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    /// Trace snapshot of the first evaluation episode.
    pub first_snapshot: usize,
    /// Fingerprint inputs held fixed during evaluation.
    pub fingerprint: Fingerprint,
}

/// Bookkeeping checks made on every agent-episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Audit {
    pub agent_episodes: usize,
    pub steps: usize,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub v2i_sum_bps: Vec<f64>,
    pub deliveries: Vec<Option<f64>>,
    pub audit: Audit,
}

impl EvalOutcome {
    pub fn into_metrics(self, variant: &str, seed: u64, payload_bytes: u64, budget_ms: u64, config_digest: &str) -> RunMetrics {
        RunMetrics {
            variant: variant.into(),
            seed,
            payload_bytes,
            budget_ms,
            config_digest: config_digest.into(),
            v2i_sum_bps: self.v2i_sum_bps,
            deliveries: self.deliveries,
        }
    }
}

/// Runs `settings.episodes` full-length episodes, one trace snapshot each.
/// Channel randomness depends only on `seed`, so different policies see
/// identical channels.
pub fn evaluate(policy: Policy<'_>, scenario: &Scenario, settings: &EvalSettings, seed: u64) -> Result<EvalOutcome, MarlError> {
    let cfg = &scenario.network;
    cfg.validate()?;
    if let Policy::Greedy(b) = policy {
        if b.len() != cfg.k {
            return Err(MarlError::ExpertShape(format!("{} agents for {} V2V links", b.len(), cfg.k)));
        }
    }
    let n_levels = cfg.n_power_levels();
    let mut shadow_rng = stream(seed, STREAM_SHADOW);
    let mut policy_rng = stream(seed, STREAM_POLICY);
    let mut shadow = ShadowingState::new();
    let mut out = EvalOutcome { v2i_sum_bps: Vec::new(), deliveries: Vec::new(), audit: Audit::default() };

    for episode in 0..settings.episodes {
        let large = scenario.large_scale(settings.first_snapshot + episode, &mut shadow, &mut shadow_rng)?;
        let mut fading = stream(seed, STREAM_FADING_BASE + episode as u64);
        let (mut state, mut obs) = reset(Arc::clone(&large), cfg, settings.fingerprint, &mut fading)?;

        let mut ledger = vec![0.0; cfg.k];
        let mut crossed: Vec<Option<usize>> = vec![None; cfg.k];
        let mut v2i_total = 0.0;
        let mut steps = 0usize;
        while !state.is_done() {
            let flat: Vec<usize> = match policy {
                Policy::Greedy(bundles) => bundles
                    .iter()
                    .zip(&obs)
                    .map(|(b, o)| Ok(argmax(&b.online.forward_one(o)?)))
                    .collect::<Result<_, MarlError>>()?,
                Policy::Random => (0..cfg.k).map(|_| policy_rng.random_range(0..cfg.n_actions())).collect(),
            };
            let joint: Vec<Action> = flat.iter().map(|&a| Action::from_flat(a, n_levels)).collect();
            let before: Vec<bool> = (0..cfg.k).map(|k| state.is_delivered(k)).collect();
            let o = step(&mut state, &joint, cfg, &mut fading)?;
            steps += 1;
            v2i_total += o.v2i_rates_bps.iter().sum::<f64>();
            for k in 0..cfg.k {
                if state.bands_used(k) != 1 {
                    out.audit.violations.push(format!("episode {episode} step {steps}: agent {k} uses {} sub-bands", state.bands_used(k)));
                }
                if !before[k] {
                    ledger[k] += o.v2v_rates_bps[k] * cfg.coherence_ms as f64 / 1000.0;
                    if crossed[k].is_none() && ledger[k] >= cfg.payload_bits() {
                        crossed[k] = Some(steps);
                    }
                }
            }
            obs = o.observations;
        }

        out.audit.steps += steps;
        for k in 0..cfg.k {
            out.audit.agent_episodes += 1;
            if ledger[k] != state.delivered_bits[k] {
                out.audit.violations.push(format!(
                    "episode {episode}: agent {k} delivered {} bits, rates account for {}",
                    state.delivered_bits[k], ledger[k]
                ));
            }
            if crossed[k] != state.delivered_at[k] {
                out.audit.violations.push(format!(
                    "episode {episode}: agent {k} completion step {:?}, expected {:?}",
                    state.delivered_at[k], crossed[k]
                ));
            }
            let time = state.delivered_at[k].map(|t| (t as u64 * cfg.coherence_ms) as f64);
            if let Some(t) = time {
                if !(t > 0.0 && t <= cfg.budget_ms as f64) {
                    out.audit.violations.push(format!("episode {episode}: agent {k} delivery time {t} ms outside the budget"));
                }
            }
            out.deliveries.push(time);
        }
        out.v2i_sum_bps.push(v2i_total / steps.max(1) as f64);
    }
    Ok(out)
}

/// Observations met by a uniform random policy over the evaluation
/// snapshots, grouped per agent.
pub fn held_out_observations(scenario: &Scenario, settings: &EvalSettings, per_agent: usize, seed: u64) -> Result<Vec<Vec<Observation>>, MarlError> {
    let cfg = &scenario.network;
    let mut shadow_rng = stream(seed, STREAM_SHADOW);
    let mut rng = stream(seed, STREAM_POLICY);
    let mut shadow = ShadowingState::new();
    let mut groups: Vec<Vec<Observation>> = vec![Vec::new(); cfg.k];
    let mut episode = 0;
    while groups[0].len() < per_agent {
        let large = scenario.large_scale(settings.first_snapshot + episode, &mut shadow, &mut shadow_rng)?;
        let (mut state, mut obs) = reset(large, cfg, settings.fingerprint, &mut rng)?;
        while !state.is_done() && groups[0].len() < per_agent {
            for (g, o) in groups.iter_mut().zip(&obs) {
                g.push(o.clone());
            }
            let joint: Vec<Action> = (0..cfg.k)
                .map(|_| Action::from_flat(rng.random_range(0..cfg.n_actions()), cfg.n_power_levels()))
                .collect();
            obs = step(&mut state, &joint, cfg, &mut rng)?.observations;
        }
        episode += 1;
    }
    Ok(groups)
}

/// Mean over agents and their observations of `max_a Q(s, a)`.
pub fn mean_max_q(bundles: &[AgentBundle], observations: &[Vec<Observation>]) -> Result<f64, MarlError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (b, group) in bundles.iter().zip(observations) {
        for o in group {
            let q = b.online.forward_one(o)?;
            total += q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            count += 1;
        }
    }
    Ok(if count == 0 { f64::NAN } else { total / count as f64 })
}
