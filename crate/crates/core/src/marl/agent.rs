use ndarray::Array2;
use rand::Rng;

use super::replay::{ReplayMemory, Transition};
use super::schedule::TrainSchedule;
use super::{MarlError, Variant};
use crate::neuro::{Gradients, QNetwork, RmsProp};

/// One learning agent: online and target networks, optional frozen expert,
/// optimizer state and replay memory.
#[derive(Clone, Debug)]
pub struct AgentBundle {
    pub index: usize,
    pub online: QNetwork,
    pub target: QNetwork,
    pub expert: Option<QNetwork>,
    pub optimizer: RmsProp,
    pub memory: ReplayMemory,
    pub gradient_steps: usize,
}

impl AgentBundle {
    pub fn new(index: usize, layer_sizes: &[usize], sched: &TrainSchedule, seed: u64) -> Result<Self, MarlError> {
        let online = QNetwork::new(layer_sizes, seed)?;
        Ok(Self {
            index,
            target: online.clone(),
            optimizer: RmsProp::new(&online, sched.learning_rate, sched.rms_decay, sched.rms_epsilon),
            online,
            expert: None,
            memory: ReplayMemory::new(sched.replay_capacity),
            gradient_steps: 0,
        })
    }

    pub fn set_expert(&mut self, expert: QNetwork) -> Result<(), MarlError> {
        let (have, want) = (expert.layer_sizes(), self.online.layer_sizes());
        if have.first() != want.first() || have.last() != want.last() {
            return Err(MarlError::ExpertShape(format!("expert sizes {have:?}, agent sizes {want:?}")));
        }
        self.expert = Some(expert);
        Ok(())
    }

    /// Hard copy of the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Epsilon-greedy action for one observation.
    pub fn act<R: Rng + ?Sized>(&self, observation: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, MarlError> {
        let q = self.online.forward_one(observation)?;
        select_action(&q, epsilon, rng)
    }

    /// One mini-batch update; `None` while the memory holds less than a
    /// full batch. Syncs the target every `target_sync_steps` updates.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        sched: &TrainSchedule,
        variant: Variant,
        transfer_weight: f64,
        rng: &mut R,
    ) -> Result<Option<f64>, MarlError> {
        if self.memory.len() < sched.batch_size {
            return Ok(None);
        }
        let batch = self.memory.sample(sched.batch_size, rng);
        let (loss, grads) = loss_and_gradients(self, &batch, sched.gamma, variant, transfer_weight)?;
        self.optimizer.step(&mut self.online, &grads);
        self.gradient_steps += 1;
        if self.gradient_steps.is_multiple_of(sched.target_sync_steps) {
            self.sync_target();
        }
        Ok(Some(loss))
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, MarlError> {
    if q.is_empty() {
        return Err(MarlError::EmptyQ);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(argmax(q))
}

fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for r in rows {
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((n, width), flat).expect("observation width")
}

fn targets(batch: &[&Transition], online: &QNetwork, target: &QNetwork, gamma: f64, double: bool) -> Result<Vec<f64>, MarlError> {
    let width = target.input_size();
    let next = stack(batch.iter().map(|t| t.next_state.as_slice()), width);
    let q_target = target.forward(next.view())?;
    let q_online = if double { Some(online.forward(next.view())?) } else { None };
    Ok(batch
        .iter()
        .enumerate()
        .map(|(b, t)| {
            if t.terminal {
                return t.reward;
            }
            let row = q_target.row(b);
            let bootstrap = match &q_online {
                Some(q) => row[argmax(q.row(b).as_slice().expect("contiguous"))],
                None => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            t.reward + gamma * bootstrap
        })
        .collect())
}

/// `R + gamma * max_a Q(S', a; target)`, or `R` at a terminal transition.
pub fn dqn_target(t: &Transition, target: &QNetwork, gamma: f64) -> Result<f64, MarlError> {
    Ok(targets(&[t], target, target, gamma, false)?[0])
}

/// `R + gamma * Q(S', argmax_a Q(S', a; online); target)`, or `R` at a
/// terminal transition.
pub fn ddqn_target(t: &Transition, online: &QNetwork, target: &QNetwork, gamma: f64) -> Result<f64, MarlError> {
    Ok(targets(&[t], online, target, gamma, true)?[0])
}

/// Mean squared TD error of the batch (plus the expert residual for the
/// transfer variant) and its gradient with respect to the online network.
pub fn loss_and_gradients(
    bundle: &AgentBundle,
    batch: &[&Transition],
    gamma: f64,
    variant: Variant,
    transfer_weight: f64,
) -> Result<(f64, Gradients), MarlError> {
    if !variant.is_trainable() {
        return Err(MarlError::NotTrainable(variant));
    }
    let expert = match variant {
        Variant::DdqnTql => Some(bundle.expert.as_ref().ok_or(MarlError::MissingExpert)?),
        _ => None,
    };
    let net = &bundle.online;
    let y = targets(batch, net, &bundle.target, gamma, variant.uses_double_target())?;
    let states = stack(batch.iter().map(|t| t.state.as_slice()), net.input_size());
    let cache = net.forward_cached(states.view())?;
    let q_expert = match expert {
        Some(e) if transfer_weight != 0.0 => Some(e.forward(states.view())?),
        _ => None,
    };

    let n = batch.len() as f64;
    let mut cotangent = Array2::zeros(cache.output.raw_dim());
    let mut td_sum = 0.0;
    let mut transfer_sum = 0.0;
    for (b, t) in batch.iter().enumerate() {
        let q = cache.output[[b, t.action]];
        let residual = q - y[b];
        td_sum += residual * residual;
        let mut g = 2.0 * residual;
        if let Some(qe) = &q_expert {
            let r = q - qe[[b, t.action]];
            transfer_sum += r * r;
            g += transfer_weight * 2.0 * r;
        }
        cotangent[[b, t.action]] = g;
    }
    let mut loss = td_sum / n;
    if q_expert.is_some() {
        loss += transfer_weight * transfer_sum / n;
    }
    let grads = net.backward_cached(&cache, cotangent.view())?;
    Ok((loss, grads))
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched() -> TrainSchedule {
        TrainSchedule { hidden: vec![6, 5], batch_size: 4, replay_capacity: 64, target_sync_steps: 3, ..TrainSchedule::default() }
    }

    fn bundle(seed: u64) -> AgentBundle {
        AgentBundle::new(0, &[3, 6, 5, 4], &sched(), seed).unwrap()
    }

    fn transition(rng: &mut ChaCha8Rng, terminal: bool) -> Transition {
        Transition {
            state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: rng.random_range(0..4),
            reward: rng.random_range(-2.0..2.0),
            next_state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal,
        }
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0, 0.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&[5.0, 5.0, 0.0, 0.0], 0.0, &mut rng).unwrap(), 0);
        assert!(matches!(select_action(&[], 0.5, &mut rng), Err(MarlError::EmptyQ)));
    }

    #[test]
    fn terminal_and_zero_discount() {
        let b = bundle(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = transition(&mut rng, true);
        t.reward = 10.0;
        assert_eq!(dqn_target(&t, &b.target, 0.95).unwrap(), 10.0);
        assert_eq!(ddqn_target(&t, &b.online, &b.target, 0.95).unwrap(), 10.0);
        t.terminal = false;
        assert_eq!(dqn_target(&t, &b.target, 0.0).unwrap(), 10.0);
        assert_eq!(ddqn_target(&t, &b.online, &b.target, 0.0).unwrap(), 10.0);
    }

    #[test]
    fn dqn_target_formula() {
        // a 1-in, 4-out linear target whose largest output is 2
        let mut target = QNetwork::new(&[1, 4], 0).unwrap();
        target.set_params_flat(&[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.5]).unwrap();
        let t = Transition { state: vec![0.0], action: 0, reward: 1.0, next_state: vec![3.0], terminal: false };
        assert!((dqn_target(&t, &target, 0.95).unwrap() - 2.9).abs() < 1e-12);
        // online prefers action 0 (value 1 under the target)
        let mut online = target.clone();
        online.set_params_flat(&[0.0, 0.0, 0.0, 0.0, 9.0, 2.0, -1.0, 0.5]).unwrap();
        let y = ddqn_target(&t, &online, &target, 0.95).unwrap();
        assert!((y - 1.95).abs() < 1e-12);
        assert!(y <= dqn_target(&t, &target, 0.95).unwrap());
    }

    #[test]
    fn synced_targets_coincide() {
        let mut b = bundle(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // make online differ, then sync
        b.online = QNetwork::new(&[3, 6, 5, 4], 99).unwrap();
        b.sync_target();
        for _ in 0..50 {
            let t = transition(&mut rng, false);
            assert_eq!(dqn_target(&t, &b.target, 0.95).unwrap(), ddqn_target(&t, &b.online, &b.target, 0.95).unwrap());
        }
    }

    #[test]
    fn squared_error_of_one_sample() {
        let mut b = bundle(0);
        let mut net = QNetwork::new(&[1, 2], 0).unwrap();
        net.set_params_flat(&[0.0, 0.0, 3.0, 0.0]).unwrap();
        b.online = net.clone();
        b.target = net;
        let t = Transition { state: vec![1.0], action: 0, reward: 5.0, next_state: vec![1.0], terminal: true };
        for v in [Variant::Dqn, Variant::Ddqn] {
            let (loss, _) = loss_and_gradients(&b, &[&t], 0.95, v, 0.0).unwrap();
            assert_eq!(loss, 4.0);
        }
    }

    #[test]
    fn transfer_term_collapses() {
        let mut b = bundle(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch: Vec<Transition> = (0..8).map(|i| transition(&mut rng, i % 3 == 0)).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        assert!(matches!(loss_and_gradients(&b, &refs, 0.9, Variant::DdqnTql, 0.5), Err(MarlError::MissingExpert)));
        b.set_expert(QNetwork::new(&[3, 6, 5, 4], 77).unwrap()).unwrap();
        let plain = loss_and_gradients(&b, &refs, 0.9, Variant::Ddqn, 0.0).unwrap();
        let zero = loss_and_gradients(&b, &refs, 0.9, Variant::DdqnTql, 0.0).unwrap();
        assert_eq!(plain.0, zero.0);
        assert_eq!(plain.1, zero.1);
        b.expert = Some(b.online.clone());
        let same = loss_and_gradients(&b, &refs, 0.9, Variant::DdqnTql, 3.0).unwrap();
        assert_eq!(same.0, plain.0);
        assert!(matches!(loss_and_gradients(&b, &refs, 0.9, Variant::Random, 0.0), Err(MarlError::NotTrainable(_))));
    }

    #[test]
    fn target_frozen_between_syncs() {
        let s = sched();
        let mut b = bundle(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..8 {
            b.memory.push(transition(&mut rng, false));
        }
        let frozen = b.target.clone();
        b.train_step(&s, Variant::Dqn, 0.0, &mut rng).unwrap();
        b.train_step(&s, Variant::Dqn, 0.0, &mut rng).unwrap();
        assert_eq!(b.target, frozen);
        assert_ne!(b.online, frozen);
        b.train_step(&s, Variant::Dqn, 0.0, &mut rng).unwrap();
        assert_eq!(b.target, b.online);

        let every = TrainSchedule { target_sync_steps: 1, ..s };
        b.train_step(&every, Variant::Ddqn, 0.0, &mut rng).unwrap();
        assert_eq!(b.target, b.online);
    }
}
