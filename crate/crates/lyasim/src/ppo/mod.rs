//! Slow-timescale partition policy trained with PPO.
//!
//! Once per decision period (G slots) the agent observes a normalized
//! summary of the period: per service the mean backlogs of the three
//! stages, the current stage costs, and the mean granted resources; per
//! device the mean transmit power and mean achievable rate. It then picks
//! one partition point per service from a factorized categorical head
//! (the joint log-probability is the sum over heads).
//!
//! The reward of a period is the negated weighted sum, over devices, of
//! mean energy (CPU plus radio) and mean normalized backlog. Training is
//! standard clipped-surrogate PPO with one-step advantages
//! `A = r + gamma V(s') - V(s)`, discounted-return targets for the
//! critic, Adam, and a behavior policy frozen at the start of each
//! update. Hyperparameters (clip 0.2, 10 epochs, minibatch 32, lr 3e-4,
//! two 128-unit tanh layers, gamma 0.99) are all configurable.

pub mod net;

use crate::queueing::Layout;
use net::{Adam, Cache, Grads, Mlp};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error("period window covers {got} slots, expected {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("feature vector has length {got}, expected {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("non-finite {what} during update (epoch {epoch})")]
    NonFinite { what: &'static str, epoch: usize },
    #[error("empty replay buffer")]
    EmptyReplay,
    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),
    #[error("checkpoint config hash {got} does not match current config {expected}")]
    CheckpointConfig { expected: String, got: String },
}

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub hidden: Vec<usize>,
    pub standardize_advantages: bool,
    pub entropy_coeff: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip: 0.2,
            learning_rate: 3e-4,
            epochs: 10,
            minibatch: 32,
            hidden: vec![128, 128],
            standardize_advantages: true,
            entropy_coeff: 0.0,
        }
    }
}

/// Per-slot accumulator building one period's summary.
#[derive(Debug, Clone)]
pub struct PeriodAccumulator {
    slots: usize,
    local_backlog: Vec<f64>,
    transmit_backlog: Vec<f64>,
    edge_backlog: Vec<f64>,
    local_hz: Vec<f64>,
    rate_bps: Vec<f64>,
    edge_hz: Vec<f64>,
    power_w: Vec<f64>,
    max_rate_bps: Vec<f64>,
    energy_local: Vec<f64>,
    energy_transmit: Vec<f64>,
}

/// Means over one period, the raw material of both the observation and
/// the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodWindow {
    pub slots: usize,
    pub mean_local_backlog: Vec<f64>,
    pub mean_transmit_backlog: Vec<f64>,
    pub mean_edge_backlog: Vec<f64>,
    pub mean_local_hz: Vec<f64>,
    pub mean_rate_bps: Vec<f64>,
    pub mean_edge_hz: Vec<f64>,
    pub mean_power_w: Vec<f64>,
    pub mean_max_rate_bps: Vec<f64>,
    pub mean_energy_local: Vec<f64>,
    pub mean_energy_transmit: Vec<f64>,
}

impl PeriodAccumulator {
    #[must_use]
    pub fn new(n_services: usize, n_devices: usize) -> Self {
        Self {
            slots: 0,
            local_backlog: vec![0.0; n_services],
            transmit_backlog: vec![0.0; n_services],
            edge_backlog: vec![0.0; n_services],
            local_hz: vec![0.0; n_services],
            rate_bps: vec![0.0; n_services],
            edge_hz: vec![0.0; n_services],
            power_w: vec![0.0; n_devices],
            max_rate_bps: vec![0.0; n_devices],
            energy_local: vec![0.0; n_devices],
            energy_transmit: vec![0.0; n_devices],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add_slot(
        &mut self,
        local_backlog: &[f64],
        transmit_backlog: &[f64],
        edge_backlog: &[f64],
        local_hz: &[f64],
        rate_bps: &[f64],
        edge_hz: &[f64],
        power_w: &[f64],
        max_rate_bps: &[f64],
        energy_local: &[f64],
        energy_transmit: &[f64],
    ) {
        let add = |acc: &mut [f64], x: &[f64]| {
            debug_assert_eq!(acc.len(), x.len());
            for (a, v) in acc.iter_mut().zip(x) {
                *a += v;
            }
        };
        add(&mut self.local_backlog, local_backlog);
        add(&mut self.transmit_backlog, transmit_backlog);
        add(&mut self.edge_backlog, edge_backlog);
        add(&mut self.local_hz, local_hz);
        add(&mut self.rate_bps, rate_bps);
        add(&mut self.edge_hz, edge_hz);
        add(&mut self.power_w, power_w);
        add(&mut self.max_rate_bps, max_rate_bps);
        add(&mut self.energy_local, energy_local);
        add(&mut self.energy_transmit, energy_transmit);
        self.slots += 1;
    }

    /// Divides the sums into means. An empty accumulator yields an
    /// all-zero window (used for the initial observation).
    #[must_use]
    pub fn finish(self) -> PeriodWindow {
        let div = |v: Vec<f64>, n: usize| {
            if n == 0 {
                v
            } else {
                v.into_iter().map(|x| x / n as f64).collect()
            }
        };
        let n = self.slots;
        PeriodWindow {
            slots: n,
            mean_local_backlog: div(self.local_backlog, n),
            mean_transmit_backlog: div(self.transmit_backlog, n),
            mean_edge_backlog: div(self.edge_backlog, n),
            mean_local_hz: div(self.local_hz, n),
            mean_rate_bps: div(self.rate_bps, n),
            mean_edge_hz: div(self.edge_hz, n),
            mean_power_w: div(self.power_w, n),
            mean_max_rate_bps: div(self.max_rate_bps, n),
            mean_energy_local: div(self.energy_local, n),
            mean_energy_transmit: div(self.energy_transmit, n),
        }
    }

    #[must_use]
    pub fn zero_window(n_services: usize, n_devices: usize) -> PeriodWindow {
        Self::new(n_services, n_devices).finish()
    }
}

/// Fixed normalization scales for the observation features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationScales {
    /// Cycle-queue scale (local and edge backlogs).
    pub cycles: f64,
    /// Bit-queue scale (transmit backlogs).
    pub bits: f64,
    /// Per service: full-model cycle cost C * rho.
    pub cost_cycles: Vec<f64>,
    /// Per service: input bits D.
    pub cost_bits: Vec<f64>,
    pub local_cap_hz: f64,
    pub edge_cap_hz: f64,
    pub p_max_w: f64,
    /// Per device: achievable rate at p_max over the mean channel gain.
    pub rate_ref_bps: Vec<f64>,
}

/// Normalized observation vector: 9 features per service then 2 per
/// device.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodObservation {
    pub features: Vec<f64>,
}

/// Upper bound on any observation feature. Backlog features are
/// unbounded when queues diverge; clipping keeps the tanh layers out of
/// saturation so the networks still get gradient signal from flooded
/// states.
pub const OBSERVATION_CLIP: f64 = 10.0;

/// Feature count for a layout.
#[must_use]
pub fn observation_len(layout: Layout) -> usize {
    9 * layout.num_services() + 2 * layout.num_devices
}

/// Builds the normalized observation from a period window and the stage
/// costs currently in force. `expected_slots` is the period length G; a
/// window of any other length is a contract error.
pub fn build_state(
    window: &PeriodWindow,
    current_costs: &[crate::profiles::PartitionCosts],
    scales: &ObservationScales,
    layout: Layout,
    expected_slots: usize,
) -> Result<PeriodObservation, PpoError> {
    if window.slots != expected_slots {
        return Err(PpoError::WindowLength {
            expected: expected_slots,
            got: window.slots,
        });
    }
    let n = layout.num_services();
    let mut features = Vec::with_capacity(observation_len(layout));
    let mut push = |v: f64| features.push(v.min(OBSERVATION_CLIP));
    for i in 0..n {
        let dev = layout.device_of(i);
        push(window.mean_local_backlog[i] / scales.cycles);
        push(window.mean_transmit_backlog[i] / scales.bits);
        push(window.mean_edge_backlog[i] / scales.cycles);
        push(current_costs[i].local_cycles / scales.cost_cycles[i]);
        push(current_costs[i].transfer_bits / scales.cost_bits[i]);
        push(current_costs[i].edge_cycles / scales.cost_cycles[i]);
        push(window.mean_local_hz[i] / scales.local_cap_hz);
        push(window.mean_rate_bps[i] / scales.rate_ref_bps[dev]);
        push(window.mean_edge_hz[i] / scales.edge_cap_hz);
    }
    for dev in 0..layout.num_devices {
        push(window.mean_power_w[dev] / scales.p_max_w);
        push(window.mean_max_rate_bps[dev] / scales.rate_ref_bps[dev]);
    }
    Ok(PeriodObservation { features })
}

/// Reward weights: `energy` prices mean Joules per device, `backlog`
/// prices mean normalized queue length per device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub energy: f64,
    pub backlog: f64,
}

/// Period reward: minus the weighted energy-plus-backlog cost summed over
/// devices. Backlogs enter normalized by the observation scales.
#[must_use]
pub fn reward(
    window: &PeriodWindow,
    weights: RewardWeights,
    scales: &ObservationScales,
    layout: Layout,
) -> f64 {
    let mut total = 0.0;
    for dev in 0..layout.num_devices {
        let energy = window.mean_energy_local[dev] + window.mean_energy_transmit[dev];
        let mut backlog = 0.0;
        for i in layout.device_range(dev) {
            backlog += window.mean_local_backlog[i] / scales.cycles
                + window.mean_transmit_backlog[i] / scales.bits
                + window.mean_edge_backlog[i] / scales.cycles;
        }
        total += weights.energy * energy + weights.backlog * backlog;
    }
    -total
}

/// One sampled partition decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAction {
    /// Chosen partition point k per service.
    pub partitions: Vec<usize>,
    /// Head-local indices (k - k_min) per service.
    pub action_idx: Vec<usize>,
    /// Joint log-probability under the sampling policy.
    pub log_prob: f64,
}

/// One period's transition in the replay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action_idx: Vec<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub log_prob_old: f64,
}

/// Actor (current and behavior copies) plus critic. The actor's output
/// layer is the concatenation of one categorical head per service;
/// `head_sizes[i]` logits cover partitions `k_min ..= k_min+size-1`.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub actor_old: Mlp,
    pub critic: Mlp,
    pub head_sizes: Vec<usize>,
    pub k_min: usize,
    pub input_dim: usize,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&z| z - log_sum).collect()
}

impl ActorCritic {
    pub fn new(
        input_dim: usize,
        head_sizes: Vec<usize>,
        k_min: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        let total_logits: usize = head_sizes.iter().sum();
        let mut actor_dims = vec![input_dim];
        actor_dims.extend_from_slice(hidden);
        actor_dims.push(total_logits);
        let mut critic_dims = vec![input_dim];
        critic_dims.extend_from_slice(hidden);
        critic_dims.push(1);
        let actor = Mlp::new(&actor_dims, rng);
        let actor_old = actor.clone();
        let critic = Mlp::new(&critic_dims, rng);
        Self {
            actor,
            actor_old,
            critic,
            head_sizes,
            k_min,
            input_dim,
        }
    }

    fn check_features(&self, features: &[f64]) -> Result<(), PpoError> {
        if features.len() != self.input_dim {
            return Err(PpoError::FeatureLength {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Joint log-probability of `action_idx` under the given network.
    fn joint_log_prob(net: &Mlp, head_sizes: &[usize], features: &[f64], action_idx: &[usize]) -> f64 {
        let logits = net.forward(features);
        let mut at = 0;
        let mut total = 0.0;
        for (head, &size) in head_sizes.iter().enumerate() {
            let lp = log_softmax(&logits[at..at + size]);
            total += lp[action_idx[head]];
            at += size;
        }
        total
    }

    /// Samples one action per head from the behavior policy (the frozen
    /// old actor), returning the joint log-probability.
    pub fn act(&self, features: &[f64], rng: &mut impl Rng) -> Result<PolicyAction, PpoError> {
        self.check_features(features)?;
        let logits = self.actor_old.forward(features);
        let mut at = 0;
        let mut partitions = Vec::with_capacity(self.head_sizes.len());
        let mut action_idx = Vec::with_capacity(self.head_sizes.len());
        let mut log_prob = 0.0;
        for &size in &self.head_sizes {
            let lp = log_softmax(&logits[at..at + size]);
            let u: f64 = rng.gen_range(0.0..1.0);
            let mut cum = 0.0;
            let mut chosen = size - 1;
            for (a, &l) in lp.iter().enumerate() {
                cum += l.exp();
                if u < cum {
                    chosen = a;
                    break;
                }
            }
            log_prob += lp[chosen];
            action_idx.push(chosen);
            partitions.push(chosen + self.k_min);
            at += size;
        }
        Ok(PolicyAction {
            partitions,
            action_idx,
            log_prob,
        })
    }

    /// Deterministic argmax action of the trained actor.
    pub fn act_greedy(&self, features: &[f64]) -> Result<PolicyAction, PpoError> {
        self.check_features(features)?;
        let logits = self.actor.forward(features);
        let mut at = 0;
        let mut partitions = Vec::new();
        let mut action_idx = Vec::new();
        let mut log_prob = 0.0;
        for &size in &self.head_sizes {
            let lp = log_softmax(&logits[at..at + size]);
            let (best, best_lp) = lp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
                .expect("nonempty head");
            log_prob += best_lp;
            action_idx.push(best);
            partitions.push(best + self.k_min);
            at += size;
        }
        Ok(PolicyAction {
            partitions,
            action_idx,
            log_prob,
        })
    }

    /// Log-probability of a stored action under the current actor.
    #[must_use]
    pub fn log_prob_current(&self, features: &[f64], action_idx: &[usize]) -> f64 {
        Self::joint_log_prob(&self.actor, &self.head_sizes, features, action_idx)
    }

    /// Log-probability of a stored action under the behavior actor.
    #[must_use]
    pub fn log_prob_old(&self, features: &[f64], action_idx: &[usize]) -> f64 {
        Self::joint_log_prob(&self.actor_old, &self.head_sizes, features, action_idx)
    }

    /// State value V(s) under the critic.
    #[must_use]
    pub fn value(&self, features: &[f64]) -> f64 {
        self.critic.forward(features)[0]
    }

    /// One-step advantage estimate `r + gamma V(s') - V(s)`.
    #[must_use]
    pub fn advantage(&self, t: &Transition, gamma: f64) -> f64 {
        t.reward + gamma * self.value(&t.next_state) - self.value(&t.state)
    }
}

/// Clipped-surrogate actor loss over a batch, accumulating dL/d(theta)
/// into `grads`. `adv` pairs with `batch`. Returns the loss value
/// (negated mean surrogate, minus any entropy bonus).
pub fn actor_loss(
    ac: &ActorCritic,
    batch: &[&Transition],
    adv: &[f64],
    clip: f64,
    entropy_coeff: f64,
    grads: &mut Grads,
) -> f64 {
    let b = batch.len() as f64;
    let mut cache = Cache::default();
    let mut loss = 0.0;
    for (t, &a) in batch.iter().zip(adv) {
        let logits = ac.actor.forward_cached(&t.state, &mut cache);
        let mut dlogits = vec![0.0; logits.len()];
        let mut at = 0;
        let mut logp = 0.0;
        let mut heads = Vec::with_capacity(ac.head_sizes.len());
        for (head, &size) in ac.head_sizes.iter().enumerate() {
            let lp = log_softmax(&logits[at..at + size]);
            logp += lp[t.action_idx[head]];
            heads.push((at, size, lp));
            at += size;
        }
        let ratio = (logp - t.log_prob_old).exp();
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let s_plain = ratio * a;
        let s_clip = clipped * a;
        let surrogate = s_plain.min(s_clip);
        loss -= surrogate / b;
        // d(surrogate)/d(logp): the plain branch contributes ratio * A;
        // when the clipped branch is strictly smaller the ratio sits
        // outside the clip interval and the gradient is zero.
        let dsurr_dlogp = if s_plain <= s_clip { ratio * a } else { 0.0 };
        let dloss_dlogp = -dsurr_dlogp / b;
        for (head, &(at, size, ref lp)) in heads.iter().enumerate() {
            let chosen = t.action_idx[head];
            for j in 0..size {
                let p_j = lp[j].exp();
                let indicator = if j == chosen { 1.0 } else { 0.0 };
                dlogits[at + j] += dloss_dlogp * (indicator - p_j);
                if entropy_coeff != 0.0 {
                    // Entropy H = -sum p ln p per head; the bonus enters
                    // the loss as -c * H / B.
                    let h: f64 = lp.iter().map(|&l| -l.exp() * l).sum();
                    dlogits[at + j] += entropy_coeff / b * p_j * (lp[j] + h);
                }
            }
            if entropy_coeff != 0.0 {
                let h: f64 = lp.iter().map(|&l| -l.exp() * l).sum();
                loss -= entropy_coeff * h / b;
            }
        }
        ac.actor.backward(&cache, &dlogits, grads);
    }
    loss
}

/// Mean-squared-error critic loss against fixed targets, accumulating
/// dL/d(phi) into `grads`.
pub fn critic_loss(
    ac: &ActorCritic,
    batch: &[&Transition],
    targets: &[f64],
    grads: &mut Grads,
) -> f64 {
    let b = batch.len() as f64;
    let mut cache = Cache::default();
    let mut loss = 0.0;
    for (t, &target) in batch.iter().zip(targets) {
        let v = ac.critic.forward_cached(&t.state, &mut cache)[0];
        loss += (v - target) * (v - target) / b;
        ac.critic.backward(&cache, &[2.0 * (v - target) / b], grads);
    }
    loss
}

/// Discounted return targets by backward recursion with a terminal
/// bootstrap from the critic's value of the last next-state.
#[must_use]
pub fn discounted_returns(ac: &ActorCritic, replay: &[Transition], gamma: f64) -> Vec<f64> {
    let mut targets = vec![0.0; replay.len()];
    let mut carry = match replay.last() {
        Some(last) => ac.value(&last.next_state),
        None => return targets,
    };
    for (i, t) in replay.iter().enumerate().rev() {
        carry = t.reward + gamma * carry;
        targets[i] = carry;
    }
    targets
}

/// Everything trainable: networks, optimizer state, progress counter.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub net: ActorCritic,
    pub opt_actor: Adam,
    pub opt_critic: Adam,
    pub config: PpoConfig,
    pub episodes_trained: u64,
}

/// Loss summary of one update call.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub actor_loss_first: f64,
    pub actor_loss_last: f64,
    pub critic_loss_first: f64,
    pub critic_loss_last: f64,
    pub mean_advantage: f64,
}

impl PpoAgent {
    pub fn new(
        input_dim: usize,
        head_sizes: Vec<usize>,
        k_min: usize,
        config: PpoConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let net = ActorCritic::new(input_dim, head_sizes, k_min, &config.hidden, rng);
        let opt_actor = Adam::new(config.learning_rate, net.actor.n_params());
        let opt_critic = Adam::new(config.learning_rate, net.critic.n_params());
        Self {
            net,
            opt_actor,
            opt_critic,
            config,
            episodes_trained: 0,
        }
    }

    /// One PPO update over an episode's replay buffer: advantages and
    /// return targets are computed once with the current critic, then
    /// `epochs` passes of minibatch Adam steps run on both networks, and
    /// finally the behavior policy is synchronized to the new actor.
    pub fn update(&mut self, replay: &[Transition], rng: &mut impl Rng) -> Result<UpdateStats, PpoError> {
        if replay.is_empty() {
            return Err(PpoError::EmptyReplay);
        }
        let gamma = self.config.gamma;
        let mut adv: Vec<f64> = replay.iter().map(|t| self.net.advantage(t, gamma)).collect();
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        if self.config.standardize_advantages {
            let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / adv.len() as f64;
            let std = var.sqrt().max(1e-8);
            for a in adv.iter_mut() {
                *a = (*a - mean) / std;
            }
        }
        let targets = discounted_returns(&self.net, replay, gamma);

        let mut stats = UpdateStats {
            mean_advantage: mean,
            ..Default::default()
        };
        let mut order: Vec<usize> = (0..replay.len()).collect();
        let mut actor_grads = Grads::zeros_like(&self.net.actor);
        let mut critic_grads = Grads::zeros_like(&self.net.critic);
        for epoch in 0..self.config.epochs {
            // Fisher-Yates shuffle from the policy stream keeps updates
            // deterministic per seed.
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let chunk = self.config.minibatch.max(1);
            for mb in order.chunks(chunk) {
                let batch: Vec<&Transition> = mb.iter().map(|&i| &replay[i]).collect();
                let batch_adv: Vec<f64> = mb.iter().map(|&i| adv[i]).collect();
                let batch_targets: Vec<f64> = mb.iter().map(|&i| targets[i]).collect();

                actor_grads.reset();
                let a_loss = actor_loss(
                    &self.net,
                    &batch,
                    &batch_adv,
                    self.config.clip,
                    self.config.entropy_coeff,
                    &mut actor_grads,
                );
                if !a_loss.is_finite() || actor_grads.any_non_finite() {
                    return Err(PpoError::NonFinite {
                        what: "actor loss/gradient",
                        epoch,
                    });
                }
                self.opt_actor.step(&mut self.net.actor, &actor_grads);

                critic_grads.reset();
                let c_loss = critic_loss(&self.net, &batch, &batch_targets, &mut critic_grads);
                if !c_loss.is_finite() || critic_grads.any_non_finite() {
                    return Err(PpoError::NonFinite {
                        what: "critic loss/gradient",
                        epoch,
                    });
                }
                self.opt_critic.step(&mut self.net.critic, &critic_grads);

                if epoch == 0 && stats.actor_loss_first == 0.0 && stats.critic_loss_first == 0.0 {
                    stats.actor_loss_first = a_loss;
                    stats.critic_loss_first = c_loss;
                }
                stats.actor_loss_last = a_loss;
                stats.critic_loss_last = c_loss;
            }
        }
        self.net.actor_old = self.net.actor.clone();
        Ok(stats)
    }
}

/// Serializable training snapshot: both actors, the critic, optimizer
/// moments, and the hash of the generating config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub episodes_trained: u64,
    pub input_dim: usize,
    pub head_sizes: Vec<usize>,
    pub k_min: usize,
    pub actor_dims: Vec<usize>,
    pub critic_dims: Vec<usize>,
    pub actor: Vec<f64>,
    pub actor_old: Vec<f64>,
    pub critic: Vec<f64>,
    pub opt_actor: Adam,
    pub opt_critic: Adam,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl PpoAgent {
    #[must_use]
    pub fn to_checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            episodes_trained: self.episodes_trained,
            input_dim: self.net.input_dim,
            head_sizes: self.net.head_sizes.clone(),
            k_min: self.net.k_min,
            actor_dims: self.net.actor.dims(),
            critic_dims: self.net.critic.dims(),
            actor: self.net.actor.flatten(),
            actor_old: self.net.actor_old.flatten(),
            critic: self.net.critic.flatten(),
            opt_actor: self.opt_actor.clone(),
            opt_critic: self.opt_critic.clone(),
        }
    }

    /// Restores an agent, rejecting any structural mismatch with the
    /// freshly constructed shape for the current config.
    pub fn from_checkpoint(
        cp: &Checkpoint,
        input_dim: usize,
        head_sizes: &[usize],
        k_min: usize,
        config: PpoConfig,
        config_hash: &str,
    ) -> Result<Self, PpoError> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(PpoError::CheckpointShape(format!(
                "version {} unsupported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        if cp.config_hash != config_hash {
            return Err(PpoError::CheckpointConfig {
                expected: config_hash.to_string(),
                got: cp.config_hash.clone(),
            });
        }
        if cp.input_dim != input_dim || cp.head_sizes != head_sizes || cp.k_min != k_min {
            return Err(PpoError::CheckpointShape(format!(
                "heads/input {:?}/{} vs expected {:?}/{}",
                cp.head_sizes, cp.input_dim, head_sizes, input_dim
            )));
        }
        let mut seed_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut agent = Self::new(input_dim, head_sizes.to_vec(), k_min, config, &mut seed_rng);
        for (net, flat, what) in [
            (&mut agent.net.actor, &cp.actor, "actor"),
            (&mut agent.net.actor_old, &cp.actor_old, "actor_old"),
            (&mut agent.net.critic, &cp.critic, "critic"),
        ] {
            if net.n_params() != flat.len() {
                return Err(PpoError::CheckpointShape(format!(
                    "{what} has {} params, expected {}",
                    flat.len(),
                    net.n_params()
                )));
            }
            net.assign(flat);
        }
        if cp.opt_actor.m.len() != agent.net.actor.n_params()
            || cp.opt_critic.m.len() != agent.net.critic.n_params()
        {
            return Err(PpoError::CheckpointShape(
                "optimizer moment size mismatch".to_string(),
            ));
        }
        agent.opt_actor = cp.opt_actor.clone();
        agent.opt_critic = cp.opt_critic.clone();
        agent.episodes_trained = cp.episodes_trained;
        Ok(agent)
    }
}
