//! Experiment orchestration: configuration, instance construction, the
//! slot/period/episode loops, baseline controllers, and parameter sweeps.
//!
//! An [`ExperimentConfig`] is a plain serde struct with one field per
//! physical or algorithmic parameter; every field has a default so a
//! config file only needs the overrides. [`Instance`] resolves a config
//! into concrete tables: model profiles per service, partition cost
//! tables, device distances (drawn once from the setup seed stream), and
//! the fixed observation scales.
//!
//! Randomness is split into named ChaCha streams keyed by (master seed,
//! stream, episode index), so a resumed training run consumes exactly the
//! draws an uninterrupted one would, and different controllers compare
//! against identical channel and arrival realizations.

use crate::alloc::{self, Allocation, PenaltyWeights};
use crate::channel::{self, ChannelParams};
use crate::ppo::{
    self, observation_len, ObservationScales, PeriodAccumulator, PeriodWindow, PolicyAction,
    PpoAgent, PpoConfig, PpoError, RewardWeights, Transition,
};
use crate::profiles::{self, DnnProfile, PartitionCosts, ProfileError};
use crate::queueing::{sample_arrivals, Layout, QueueError, SlotDepartures, SystemState};
use crate::seeds::{stream_rng, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Parse(String),
    #[error("config field {field}: {rule}")]
    Invalid { field: &'static str, rule: &'static str },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Policy(#[from] PpoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("algorithm {0} requires a trained policy")]
    MissingAgent(Algo),
}

/// Full experiment description. Serialized form is flat JSON with these
/// exact field names; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Number of devices M.
    pub num_devices: usize,
    /// Inference services per device N.
    pub services_per_device: usize,
    /// Mean task arrivals per service per slot.
    pub arrival_rate: f64,
    /// Slot length tau in seconds.
    pub slot_seconds: f64,
    /// Slots per partition decision period G.
    pub period_slots: usize,
    /// Decision periods per episode.
    pub periods_per_episode: usize,
    /// Training episodes of a default run.
    pub episodes: u64,
    /// Device CPU capacity in Hz.
    pub local_cap_hz: f64,
    /// Edge server CPU capacity in Hz.
    pub edge_cap_hz: f64,
    /// Device transmit power cap in W.
    pub max_power_w: f64,
    /// CPU cycles per multiply-accumulate.
    pub cycles_per_mac: f64,
    /// Switched capacitance of the cubic CPU power model.
    pub switched_capacitance: f64,
    /// Drift-penalty price of local CPU energy.
    pub local_drift_weight: f64,
    /// Drift-penalty price of transmit energy.
    pub transmit_drift_weight: f64,
    /// Antenna gain of the mean-gain power law.
    pub antenna_gain: f64,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Path-loss exponent.
    pub path_loss_exp: f64,
    /// Smallest device distance in meters.
    pub min_distance_m: f64,
    /// Largest device distance in meters.
    pub max_distance_m: f64,
    /// Total uplink bandwidth in Hz, split evenly across devices.
    pub total_bandwidth_hz: f64,
    /// Noise power spectral density in dBm/Hz.
    pub noise_dbm_per_hz: f64,
    /// Reward price of mean device energy.
    pub reward_energy_weight: f64,
    /// Reward price of mean normalized backlog.
    pub reward_backlog_weight: f64,
    /// Whether partition point 0 (uplink the raw input) is allowed.
    pub allow_full_offload: bool,
    /// Path to a JSON profile file; `null` uses the built-in profiles.
    pub profile_path: Option<String>,
    pub ppo: PpoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_devices: 4,
            services_per_device: 2,
            arrival_rate: 0.2,
            slot_seconds: 0.01,
            period_slots: 10,
            periods_per_episode: 200,
            episodes: 2500,
            local_cap_hz: 1.5e9,
            edge_cap_hz: 2.0e10,
            max_power_w: 0.3,
            cycles_per_mac: 0.12,
            switched_capacitance: 1e-28,
            local_drift_weight: 1e9,
            transmit_drift_weight: 1e6,
            antenna_gain: 3.0,
            carrier_hz: 915.0e6,
            path_loss_exp: 3.0,
            min_distance_m: 150.0,
            max_distance_m: 250.0,
            total_bandwidth_hz: 1.0e6,
            noise_dbm_per_hz: -174.0,
            reward_energy_weight: 0.6,
            reward_backlog_weight: 0.2,
            allow_full_offload: true,
            profile_path: None,
            ppo: PpoConfig::default(),
        }
    }
}

fn require(cond: bool, field: &'static str, rule: &'static str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invalid { field, rule })
    }
}

impl ExperimentConfig {
    /// Parses a JSON config, rejecting unknown keys.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        require(self.num_devices >= 1, "num_devices", "must be at least 1")?;
        require(
            self.services_per_device >= 1,
            "services_per_device",
            "must be at least 1",
        )?;
        require(
            self.arrival_rate.is_finite() && self.arrival_rate >= 0.0,
            "arrival_rate",
            "must be finite and nonnegative",
        )?;
        require(
            self.slot_seconds.is_finite() && self.slot_seconds > 0.0,
            "slot_seconds",
            "must be finite and positive",
        )?;
        require(self.period_slots >= 1, "period_slots", "must be at least 1")?;
        require(
            self.periods_per_episode >= 1,
            "periods_per_episode",
            "must be at least 1",
        )?;
        require(self.episodes >= 1, "episodes", "must be at least 1")?;
        for (field, v) in [
            ("local_cap_hz", self.local_cap_hz),
            ("edge_cap_hz", self.edge_cap_hz),
            ("max_power_w", self.max_power_w),
            ("cycles_per_mac", self.cycles_per_mac),
            ("switched_capacitance", self.switched_capacitance),
            ("antenna_gain", self.antenna_gain),
            ("carrier_hz", self.carrier_hz),
            ("path_loss_exp", self.path_loss_exp),
            ("total_bandwidth_hz", self.total_bandwidth_hz),
        ] {
            require(v.is_finite() && v > 0.0, field, "must be finite and positive")?;
        }
        for (field, v) in [
            ("local_drift_weight", self.local_drift_weight),
            ("transmit_drift_weight", self.transmit_drift_weight),
            ("reward_energy_weight", self.reward_energy_weight),
            ("reward_backlog_weight", self.reward_backlog_weight),
        ] {
            require(v.is_finite() && v >= 0.0, field, "must be finite and nonnegative")?;
        }
        require(
            self.min_distance_m.is_finite() && self.min_distance_m > 0.0,
            "min_distance_m",
            "must be finite and positive",
        )?;
        require(
            self.max_distance_m.is_finite() && self.max_distance_m >= self.min_distance_m,
            "max_distance_m",
            "must be at least min_distance_m",
        )?;
        require(
            self.noise_dbm_per_hz.is_finite(),
            "noise_dbm_per_hz",
            "must be finite",
        )?;
        let ppo = &self.ppo;
        require(
            ppo.gamma.is_finite() && (0.0..1.0).contains(&ppo.gamma),
            "ppo.gamma",
            "must lie in [0, 1)",
        )?;
        require(
            ppo.clip.is_finite() && ppo.clip > 0.0 && ppo.clip < 1.0,
            "ppo.clip",
            "must lie in (0, 1)",
        )?;
        require(
            ppo.learning_rate.is_finite() && ppo.learning_rate >= 0.0,
            "ppo.learning_rate",
            "must be finite and nonnegative",
        )?;
        require(ppo.epochs >= 1, "ppo.epochs", "must be at least 1")?;
        require(ppo.minibatch >= 1, "ppo.minibatch", "must be at least 1")?;
        require(
            ppo.hidden.iter().all(|&h| h >= 1),
            "ppo.hidden",
            "layer widths must be at least 1",
        )?;
        require(
            ppo.entropy_coeff.is_finite() && ppo.entropy_coeff >= 0.0,
            "ppo.entropy_coeff",
            "must be finite and nonnegative",
        )?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialized config; stored in
    /// checkpoints so a resumed run must use an identical experiment.
    #[must_use]
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[must_use]
    pub fn layout(&self) -> Layout {
        Layout {
            num_devices: self.num_devices,
            services_per_device: self.services_per_device,
        }
    }
}

/// The three compared controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Drift-plus-penalty allocation with the PPO partition policy.
    Lyappo,
    /// Fixed mid-network partition for every service and period.
    Fixcov,
    /// Fresh uniform-random partition per service and period.
    Randomcov,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algo::Lyappo => "lyappo",
            Algo::Fixcov => "fixcov",
            Algo::Randomcov => "randomcov",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lyappo" => Ok(Algo::Lyappo),
            "fixcov" => Ok(Algo::Fixcov),
            "randomcov" => Ok(Algo::Randomcov),
            other => Err(format!(
                "unknown algorithm {other:?}; expected lyappo, fixcov or randomcov"
            )),
        }
    }
}

/// A config resolved into concrete per-service tables.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ExperimentConfig,
    pub layout: Layout,
    pub profiles: Vec<DnnProfile>,
    /// Per service: costs for every candidate k (index = k).
    pub cost_tables: Vec<Vec<PartitionCosts>>,
    pub channel: ChannelParams,
    pub weights: PenaltyWeights,
    pub scales: ObservationScales,
    /// Smallest allowed partition point (0, or 1 when full offload is
    /// disabled).
    pub k_min: usize,
    /// Actor head sizes: candidate partitions per service.
    pub head_sizes: Vec<usize>,
    pub master_seed: u64,
}

impl Instance {
    /// Resolves the config's profile source and builds the instance.
    pub fn new(config: ExperimentConfig, master_seed: u64) -> Result<Self, ConfigError> {
        let profiles = match &config.profile_path {
            Some(path) => profiles::load_profiles(path)?,
            None => profiles::builtin_profiles(),
        };
        Self::with_profiles(config, master_seed, profiles)
    }

    /// Builds the instance with explicitly supplied profiles. Service n
    /// of every device runs model `profiles[n % profiles.len()]`.
    pub fn with_profiles(
        config: ExperimentConfig,
        master_seed: u64,
        profiles: Vec<DnnProfile>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        require(!profiles.is_empty(), "profiles", "need at least one model profile")?;
        for p in &profiles {
            p.validate()?;
        }
        let layout = config.layout();
        let n = layout.num_services();

        let mut cost_tables = Vec::with_capacity(n);
        for i in 0..n {
            let profile = &profiles[layout.service_of(i) % profiles.len()];
            let table: Result<Vec<PartitionCosts>, ProfileError> = (0..=profile.num_layers())
                .map(|k| profile.partition_view(k, config.cycles_per_mac))
                .collect();
            cost_tables.push(table?);
        }
        let k_min = usize::from(!config.allow_full_offload);
        let head_sizes: Vec<usize> = cost_tables.iter().map(|t| t.len() - k_min).collect();

        let mut setup_rng = stream_rng(master_seed, Stream::Setup, 0);
        let distances_m: Vec<f64> = (0..layout.num_devices)
            .map(|_| setup_rng.gen_range(config.min_distance_m..=config.max_distance_m))
            .collect();
        let chan = ChannelParams {
            antenna_gain: config.antenna_gain,
            carrier_hz: config.carrier_hz,
            path_loss_exp: config.path_loss_exp,
            distances_m,
            total_bandwidth_hz: config.total_bandwidth_hz,
            noise_psd: channel::noise_psd_from_dbm_per_hz(config.noise_dbm_per_hz),
        };
        let bw = chan.subchannel_hz();
        let rate_ref_bps: Vec<f64> = (0..layout.num_devices)
            .map(|m| channel::rate(config.max_power_w, chan.mean_gain(m), bw, chan.noise_psd))
            .collect();

        // Backlog scales: one full task of the heaviest model, so queue
        // features and reward terms are O(1) per resident task.
        let cost_cycles: Vec<f64> = cost_tables
            .iter()
            .map(|t| t.last().expect("nonempty table").local_cycles)
            .collect();
        let cost_bits: Vec<f64> = cost_tables.iter().map(|t| t[0].transfer_bits).collect();
        let scales = ObservationScales {
            cycles: cost_cycles.iter().cloned().fold(f64::MIN, f64::max),
            bits: cost_bits.iter().cloned().fold(f64::MIN, f64::max),
            cost_cycles,
            cost_bits,
            local_cap_hz: config.local_cap_hz,
            edge_cap_hz: config.edge_cap_hz,
            p_max_w: config.max_power_w,
            rate_ref_bps,
        };
        let weights = PenaltyWeights {
            local_energy_weight: config.local_drift_weight,
            transmit_energy_weight: config.transmit_drift_weight,
            switched_capacitance: config.switched_capacitance,
        };
        Ok(Self {
            config,
            layout,
            profiles,
            cost_tables,
            channel: chan,
            weights,
            scales,
            k_min,
            head_sizes,
            master_seed,
        })
    }

    /// Largest candidate partition K of service `i`.
    #[must_use]
    pub fn max_k(&self, i: usize) -> usize {
        self.cost_tables[i].len() - 1
    }

    /// Neutral mid-network partition per service; the initial choice of
    /// every episode and the fixed baseline's choice.
    #[must_use]
    pub fn mid_partitions(&self) -> Vec<usize> {
        (0..self.layout.num_services())
            .map(|i| (self.k_min + self.max_k(i)) / 2)
            .collect()
    }

    pub fn new_state(&self) -> Result<SystemState, QueueError> {
        SystemState::new(self.layout, self.cost_tables.clone(), self.mid_partitions())
    }

    /// Fresh agent initialized from the master seed's init stream.
    #[must_use]
    pub fn new_agent(&self) -> PpoAgent {
        let mut rng = stream_rng(self.master_seed, Stream::Init, 0);
        PpoAgent::new(
            observation_len(self.layout),
            self.head_sizes.clone(),
            self.k_min,
            self.config.ppo.clone(),
            &mut rng,
        )
    }

    #[must_use]
    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights {
            energy: self.config.reward_energy_weight,
            backlog: self.config.reward_backlog_weight,
        }
    }

    /// Admission count exceeded with probability at most `epsilon` per
    /// service-slot; the truncation constant of the drift bound.
    #[must_use]
    pub fn admission_truncation(&self, epsilon: f64) -> u64 {
        crate::queueing::poisson_upper_quantile(self.config.arrival_rate, epsilon)
    }
}

/// Everything produced by one simulated slot.
#[derive(Debug, Clone)]
pub struct SlotLog {
    /// Realized channel gain per device.
    pub gains: Vec<f64>,
    /// Task arrivals per service.
    pub arrivals: Vec<u64>,
    pub alloc: Allocation,
    pub departures: SlotDepartures,
    /// CPU energy per device (J).
    pub energy_local: Vec<f64>,
    /// Radio energy per device (J).
    pub energy_transmit: Vec<f64>,
    /// Rate achievable at full power under the slot's gain, per device.
    pub max_rate_bps: Vec<f64>,
}

/// Solves the three allocation programs against the current backlogs for
/// the given realized gains, without advancing the state.
#[must_use]
pub fn plan_slot(inst: &Instance, state: &SystemState, gains: &[f64]) -> Allocation {
    let layout = inst.layout;
    let n = layout.num_services();
    let tau = inst.config.slot_seconds;
    let bw = inst.channel.subchannel_hz();
    let n0 = inst.channel.noise_psd;

    let ql = state.local_backlogs();
    let qt = state.transmit_backlogs();
    let qe = state.edge_backlogs();

    let mut local_hz = vec![0.0; n];
    let mut rate_bps = vec![0.0; n];
    let mut power_w = vec![0.0; layout.num_devices];
    for m in 0..layout.num_devices {
        let range = layout.device_range(m);
        let f = alloc::solve_local(&ql[range.clone()], inst.config.local_cap_hz, &inst.weights, tau);
        for (i, fi) in range.clone().zip(f) {
            local_hz[i] = fi;
        }
        let (rates, p) = alloc::solve_transmission(
            &qt[range.clone()],
            inst.config.max_power_w,
            gains[m],
            bw,
            n0,
            &inst.weights,
            tau,
        );
        for (i, ri) in range.zip(rates) {
            rate_bps[i] = ri;
        }
        power_w[m] = p;
    }
    let edge_hz = alloc::solve_edge(&qe, inst.config.edge_cap_hz, tau);

    Allocation {
        local_hz,
        rate_bps,
        edge_hz,
        power_w,
    }
}

/// Draws the slot's channel and arrivals, solves the three allocation
/// programs, and advances the queues.
pub fn run_slot(
    inst: &Instance,
    state: &mut SystemState,
    channel_rng: &mut impl Rng,
    arrivals_rng: &mut impl Rng,
) -> Result<SlotLog, SimError> {
    let layout = inst.layout;
    let n = layout.num_services();
    let tau = inst.config.slot_seconds;
    let bw = inst.channel.subchannel_hz();
    let n0 = inst.channel.noise_psd;

    let gains: Vec<f64> = (0..layout.num_devices)
        .map(|m| inst.channel.sample_gain(m, channel_rng))
        .collect();
    let arrivals: Vec<u64> = (0..n)
        .map(|_| sample_arrivals(inst.config.arrival_rate, arrivals_rng))
        .collect();

    let alloc = plan_slot(inst, state, &gains);
    let departures =
        state.step_queues(&alloc.local_hz, &alloc.rate_bps, &alloc.edge_hz, &arrivals, tau)?;

    let mut energy_local = vec![0.0; layout.num_devices];
    let mut energy_transmit = vec![0.0; layout.num_devices];
    let mut max_rate_bps = vec![0.0; layout.num_devices];
    for m in 0..layout.num_devices {
        let total: f64 = layout.device_range(m).map(|i| alloc.local_hz[i]).sum();
        energy_local[m] = tau * inst.weights.switched_capacitance * total.powi(3);
        energy_transmit[m] = tau * alloc.power_w[m];
        max_rate_bps[m] = channel::rate(inst.config.max_power_w, gains[m], bw, n0);
    }

    Ok(SlotLog {
        gains,
        arrivals,
        alloc,
        departures,
        energy_local,
        energy_transmit,
        max_rate_bps,
    })
}

/// Runs `slots` slots and returns the period's means plus the number of
/// tasks completed in it. Backlogs enter the means post-slot.
pub fn run_period(
    inst: &Instance,
    state: &mut SystemState,
    slots: usize,
    channel_rng: &mut impl Rng,
    arrivals_rng: &mut impl Rng,
) -> Result<(PeriodWindow, u64), SimError> {
    let layout = inst.layout;
    let mut acc = PeriodAccumulator::new(layout.num_services(), layout.num_devices);
    let mut completed = 0u64;
    for _ in 0..slots {
        let log = run_slot(inst, state, channel_rng, arrivals_rng)?;
        completed += log.departures.completed.iter().map(|&c| u64::from(c)).sum::<u64>();
        acc.add_slot(
            &state.local_backlogs(),
            &state.transmit_backlogs(),
            &state.edge_backlogs(),
            &log.alloc.local_hz,
            &log.alloc.rate_bps,
            &log.alloc.edge_hz,
            &log.alloc.power_w,
            &log.max_rate_bps,
            &log.energy_local,
            &log.energy_transmit,
        );
    }
    Ok((acc.finish(), completed))
}

/// Partition controller of one episode.
#[derive(Debug)]
pub enum Controller<'a> {
    /// Sample from the behavior policy, then update after the episode.
    Train(&'a mut PpoAgent),
    /// Greedy actions of the trained actor, no update.
    Greedy(&'a PpoAgent),
    /// The same fixed partition vector every period.
    Fixed(Vec<usize>),
    /// Fresh uniform partitions per period from the baseline stream.
    Random,
}

/// Per-episode summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    /// Seed-stream index the episode ran under.
    pub episode: u64,
    /// Sum of period rewards.
    pub cumulative_reward: f64,
    /// Mean over slots of the devices' summed energy (J per slot).
    pub mean_energy_j: f64,
    /// Mean over slots of the summed local backlog (cycles).
    pub mean_local_backlog: f64,
    /// Mean over slots of the summed transmit backlog (bits).
    pub mean_transmit_backlog: f64,
    /// Mean over slots of the summed edge backlog (cycles).
    pub mean_edge_backlog: f64,
    /// Mean chosen partition point over services and periods.
    pub mean_partition: f64,
    pub completed_tasks: u64,
    /// Last-minibatch losses of the episode's update (0 when not training).
    pub actor_loss: f64,
    pub critic_loss: f64,
}

/// Runs one episode under `controller`, using the per-episode seed
/// streams of `episode`. Training controllers also run one PPO update.
pub fn run_episode(
    inst: &Instance,
    controller: &mut Controller<'_>,
    episode: u64,
) -> Result<EpisodeMetrics, SimError> {
    let master = inst.master_seed;
    let mut channel_rng = stream_rng(master, Stream::Channel, episode);
    let mut arrivals_rng = stream_rng(master, Stream::Arrivals, episode);
    let mut policy_rng = stream_rng(master, Stream::Policy, episode);
    let mut baseline_rng = stream_rng(master, Stream::Baseline, episode);

    let layout = inst.layout;
    let n = layout.num_services();
    let g = inst.config.period_slots;
    let periods = inst.config.periods_per_episode;
    let mut state = inst.new_state()?;

    let costs_of = |st: &SystemState| -> Vec<PartitionCosts> {
        (0..n).map(|i| st.current_costs(i)).collect()
    };
    let zero = PeriodAccumulator::zero_window(n, layout.num_devices);
    let mut obs = ppo::build_state(&zero, &costs_of(&state), &inst.scales, layout, 0)?;

    let mut transitions: Vec<Transition> = Vec::with_capacity(periods);
    let mut sum_reward = 0.0;
    let mut sum_energy = 0.0;
    let mut sum_ql = 0.0;
    let mut sum_qt = 0.0;
    let mut sum_qe = 0.0;
    let mut sum_k = 0.0;
    let mut completed_tasks = 0u64;

    for _ in 0..periods {
        let (partitions, action): (Vec<usize>, Option<PolicyAction>) = match &mut *controller {
            Controller::Train(agent) => {
                let a = agent.net.act(&obs.features, &mut policy_rng)?;
                (a.partitions.clone(), Some(a))
            }
            Controller::Greedy(agent) => (agent.net.act_greedy(&obs.features)?.partitions, None),
            Controller::Fixed(k) => (k.clone(), None),
            Controller::Random => (
                (0..n)
                    .map(|i| baseline_rng.gen_range(inst.k_min..=inst.max_k(i)))
                    .collect(),
                None,
            ),
        };
        state.apply_partition(&partitions)?;
        let (window, completed) =
            run_period(inst, &mut state, g, &mut channel_rng, &mut arrivals_rng)?;
        let r = ppo::reward(&window, inst.reward_weights(), &inst.scales, layout);
        let next_obs = ppo::build_state(&window, &costs_of(&state), &inst.scales, layout, g)?;

        if let Some(a) = action {
            transitions.push(Transition {
                state: obs.features.clone(),
                action_idx: a.action_idx,
                reward: r,
                next_state: next_obs.features.clone(),
                log_prob_old: a.log_prob,
            });
        }

        sum_reward += r;
        sum_energy += (0..layout.num_devices)
            .map(|m| window.mean_energy_local[m] + window.mean_energy_transmit[m])
            .sum::<f64>();
        sum_ql += window.mean_local_backlog.iter().sum::<f64>();
        sum_qt += window.mean_transmit_backlog.iter().sum::<f64>();
        sum_qe += window.mean_edge_backlog.iter().sum::<f64>();
        sum_k += partitions.iter().sum::<usize>() as f64 / n as f64;
        completed_tasks += completed;
        obs = next_obs;
    }

    let mut actor_loss = 0.0;
    let mut critic_loss = 0.0;
    if let Controller::Train(agent) = &mut *controller {
        let stats = agent.update(&transitions, &mut policy_rng)?;
        actor_loss = stats.actor_loss_last;
        critic_loss = stats.critic_loss_last;
        agent.episodes_trained += 1;
    }

    let p = periods as f64;
    Ok(EpisodeMetrics {
        episode,
        cumulative_reward: sum_reward,
        mean_energy_j: sum_energy / p,
        mean_local_backlog: sum_ql / p,
        mean_transmit_backlog: sum_qt / p,
        mean_edge_backlog: sum_qe / p,
        mean_partition: sum_k / p,
        completed_tasks,
        actor_loss,
        critic_loss,
    })
}

/// Trains `agent` for `episodes` more episodes. The seed-stream index of
/// each episode is the agent's lifetime episode counter, so resuming from
/// a checkpoint consumes exactly the streams an uninterrupted run would.
pub fn train(
    inst: &Instance,
    agent: &mut PpoAgent,
    episodes: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<(), SimError> {
    for _ in 0..episodes {
        let e = agent.episodes_trained;
        let mut controller = Controller::Train(&mut *agent);
        let metrics = run_episode(inst, &mut controller, e)?;
        on_episode(&metrics);
    }
    Ok(())
}

/// Evaluates a controller for `episodes` episodes on seed-stream indices
/// 0..episodes, so every algorithm sees identical channel and arrival
/// draws. `agent` is required for [`Algo::Lyappo`] only.
pub fn evaluate(
    inst: &Instance,
    algo: Algo,
    agent: Option<&PpoAgent>,
    episodes: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<(), SimError> {
    for e in 0..episodes {
        let mut controller = match algo {
            Algo::Lyappo => Controller::Greedy(agent.ok_or(SimError::MissingAgent(algo))?),
            Algo::Fixcov => Controller::Fixed(inst.mid_partitions()),
            Algo::Randomcov => Controller::Random,
        };
        let metrics = run_episode(inst, &mut controller, e)?;
        on_episode(&metrics);
    }
    Ok(())
}

/// Config parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    LocalCapHz,
    MaxPowerW,
    EdgeCapHz,
    ServicesPerDevice,
}

impl std::fmt::Display for SweepVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SweepVar::LocalCapHz => "local_cap_hz",
            SweepVar::MaxPowerW => "max_power_w",
            SweepVar::EdgeCapHz => "edge_cap_hz",
            SweepVar::ServicesPerDevice => "services_per_device",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local_cap_hz" => Ok(SweepVar::LocalCapHz),
            "max_power_w" => Ok(SweepVar::MaxPowerW),
            "edge_cap_hz" => Ok(SweepVar::EdgeCapHz),
            "services_per_device" => Ok(SweepVar::ServicesPerDevice),
            other => Err(format!(
                "unknown sweep variable {other:?}; expected local_cap_hz, \
                 max_power_w, edge_cap_hz or services_per_device"
            )),
        }
    }
}

impl SweepVar {
    /// Returns a copy of `base` with this variable set to `value`.
    pub fn apply(&self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, ConfigError> {
        let mut config = base.clone();
        match self {
            SweepVar::LocalCapHz => config.local_cap_hz = value,
            SweepVar::MaxPowerW => config.max_power_w = value,
            SweepVar::EdgeCapHz => config.edge_cap_hz = value,
            SweepVar::ServicesPerDevice => {
                require(
                    value.fract() == 0.0 && value >= 1.0 && value <= 64.0,
                    "services_per_device",
                    "sweep values must be small positive integers",
                )?;
                config.services_per_device = value as usize;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// Aggregated evaluation result of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPointResult {
    pub var: SweepVar,
    pub value: f64,
    pub algo: Algo,
    /// Episodes trained at this point's config (the fine-tune episodes
    /// when warm starting).
    pub train_episodes: u64,
    pub eval_episodes: u64,
    pub mean_reward: f64,
    pub mean_energy_j: f64,
    pub mean_local_backlog: f64,
    pub mean_transmit_backlog: f64,
    pub mean_edge_backlog: f64,
    pub mean_partition: f64,
    pub completed_tasks: u64,
}

/// Reduced-scale per-point retraining of a sweep: instead of training a
/// fresh policy at every point, one policy is trained at the base config
/// and then fine-tuned along the sweep. Points are visited from the
/// largest value down, each warm-started from its neighbor, so every
/// fine-tune run only faces a mild parameter shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSpec {
    /// Fine-tune episodes per sweep point.
    pub episodes: u64,
    /// Learning rate during fine-tuning, usually below the training rate.
    pub learning_rate: f64,
    /// Entropy bonus during fine-tuning.
    pub entropy_coeff: f64,
}

impl Default for FinetuneSpec {
    fn default() -> Self {
        Self {
            episodes: 1000,
            learning_rate: 2.5e-4,
            entropy_coeff: 3e-3,
        }
    }
}

/// Sweeps one variable over `values` for each algorithm. Every point
/// rebuilds the instance (same master seed, so distances and seed streams
/// are paired across points and algorithms).
///
/// With `finetune: None`, `lyappo` retrains a fresh agent per point for
/// `train_episodes`. With `Some(spec)`, one agent is trained at the base
/// config for `train_episodes` and then fine-tuned per point along the
/// descending warm-start chain described on [`FinetuneSpec`]. Results are
/// returned in the order of `values` either way.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    base: &ExperimentConfig,
    master_seed: u64,
    var: SweepVar,
    values: &[f64],
    algos: &[Algo],
    train_episodes: u64,
    eval_episodes: u64,
    finetune: Option<FinetuneSpec>,
    mut on_point: impl FnMut(&SweepPointResult),
) -> Result<Vec<SweepPointResult>, SimError> {
    require(!values.is_empty(), "values", "sweep needs at least one value")
        .map_err(SimError::Config)?;
    let instances: Vec<Instance> = values
        .iter()
        .map(|&v| Instance::new(var.apply(base, v)?, master_seed))
        .collect::<Result<_, _>>()?;

    let mut agents: Vec<Option<PpoAgent>> = vec![None; values.len()];
    if algos.contains(&Algo::Lyappo) {
        match finetune {
            None => {
                for (inst, slot) in instances.iter().zip(&mut agents) {
                    let mut agent = inst.new_agent();
                    train(inst, &mut agent, train_episodes, |_| {})?;
                    *slot = Some(agent);
                }
            }
            Some(spec) => {
                let base_inst = Instance::new(base.clone(), master_seed)?;
                let mut carried = base_inst.new_agent();
                train(&base_inst, &mut carried, train_episodes, |_| {})?;
                let mut order: Vec<usize> = (0..values.len()).collect();
                order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
                for vi in order {
                    let mut agent = carried.clone();
                    agent.config.learning_rate = spec.learning_rate;
                    agent.config.entropy_coeff = spec.entropy_coeff;
                    train(&instances[vi], &mut agent, spec.episodes, |_| {})?;
                    carried = agent.clone();
                    agents[vi] = Some(agent);
                }
            }
        }
    }

    let point_train_episodes = match finetune {
        None => train_episodes,
        Some(spec) => spec.episodes,
    };
    let mut results = Vec::with_capacity(values.len() * algos.len());
    for (vi, &value) in values.iter().enumerate() {
        let inst = &instances[vi];
        for &algo in algos {
            let mut rows: Vec<EpisodeMetrics> = Vec::with_capacity(eval_episodes as usize);
            evaluate(inst, algo, agents[vi].as_ref(), eval_episodes, |m| {
                rows.push(m.clone());
            })?;
            let n = rows.len() as f64;
            let mean = |f: fn(&EpisodeMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
            let point = SweepPointResult {
                var,
                value,
                algo,
                train_episodes: if algo == Algo::Lyappo { point_train_episodes } else { 0 },
                eval_episodes,
                mean_reward: mean(|m| m.cumulative_reward),
                mean_energy_j: mean(|m| m.mean_energy_j),
                mean_local_backlog: mean(|m| m.mean_local_backlog),
                mean_transmit_backlog: mean(|m| m.mean_transmit_backlog),
                mean_edge_backlog: mean(|m| m.mean_edge_backlog),
                mean_partition: mean(|m| m.mean_partition),
                completed_tasks: rows.iter().map(|m| m.completed_tasks).sum(),
            };
            on_point(&point);
            results.push(point);
        }
    }
    Ok(results)
}
