//! Independent cross-checks of the solvers, losses and queue dynamics.
//!
//! Every check here deliberately avoids the code path it verifies: the
//! allocation solvers are compared against brute-force grids and a
//! quantized fill, the edge program against its optimality conditions,
//! the loss gradients against central finite differences, and the
//! per-slot drift inequality and queue conservation laws against full
//! simulated traces. The `selfcheck` CLI command runs [`run_all_checks`];
//! the test suite calls the individual families with larger case counts.

use crate::alloc::{self, DriftBoundParams, PenaltyWeights};
use crate::channel;
use crate::ppo::{actor_loss, critic_loss, ActorCritic, Transition};
use crate::ppo::net::Grads;
use crate::profiles::synth_profile;
use crate::queueing::sample_arrivals;
use crate::seeds::{stream_rng, Stream};
use crate::sim::{plan_slot, run_slot, ExperimentConfig, Instance};
use rand::Rng;

/// Outcome of one check family.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    /// Instances or probe points exercised.
    pub cases: usize,
    /// Family-specific extreme: worst signed optimality margin or largest
    /// relative error observed.
    pub worst: f64,
    pub detail: String,
}

fn report(name: &'static str, cases: usize, failures: usize, worst: f64, detail: String) -> CheckReport {
    CheckReport {
        name,
        passed: failures == 0,
        cases,
        worst,
        detail,
    }
}

/// Greedy fill used only by the oracles: repeatedly grants the longest
/// remaining queue. Shares no code with the allocator's fill.
fn oracle_fill_value(q: &[f64], demands: &[f64], mut total: f64) -> f64 {
    let mut remaining = demands.to_vec();
    let mut value = 0.0;
    while total > 0.0 {
        let mut best: Option<usize> = None;
        for i in 0..q.len() {
            if remaining[i] > 0.0 && best.map_or(true, |b| q[i] > q[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        let take = remaining[b].min(total);
        value += take * q[b];
        remaining[b] = 0.0;
        total -= take;
    }
    value
}

/// Compares the local-CPU solver against a dense one-dimensional grid
/// over the total frequency, and for two queues additionally against an
/// exhaustive two-dimensional grid.
pub fn check_local_against_grid(master_seed: u64, cases: usize) -> CheckReport {
    let mut rng = stream_rng(master_seed, Stream::Policy, 9001);
    let tau = 0.01;
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for case in 0..cases {
        let n = case % 4 + 1;
        let q: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.0..1e8) })
            .collect();
        let cap = rng.gen_range(1e8..3e9);
        let weights = PenaltyWeights {
            local_energy_weight: 10f64.powf(rng.gen_range(8.0..10.0)),
            transmit_energy_weight: 1e6,
            switched_capacitance: 1e-28,
        };
        let energy_coeff = weights.local_energy_weight * tau * weights.switched_capacitance;
        let demands: Vec<f64> = q.iter().map(|qi| qi / tau).collect();
        let objective = |value: f64, total: f64| -tau * value + energy_coeff * total.powi(3);

        let f = alloc::solve_local(&q, cap, &weights, tau);
        let f_total: f64 = f.iter().sum();
        let f_value: f64 = f.iter().zip(&q).map(|(fi, qi)| fi * qi).sum();
        let solver_obj = objective(f_value, f_total);

        let upper = cap.min(demands.iter().sum());
        let mut grid_best = f64::INFINITY;
        for step in 0..=2000 {
            let total = upper * step as f64 / 2000.0;
            let obj = objective(oracle_fill_value(&q, &demands, total), total);
            grid_best = grid_best.min(obj);
        }
        if n == 2 {
            let d0 = demands[0].min(cap);
            for i in 0..=100 {
                let f0 = d0 * i as f64 / 100.0;
                let d1 = demands[1].min(cap - f0);
                for j in 0..=100 {
                    let f1 = d1.max(0.0) * j as f64 / 100.0;
                    let obj = objective(f0 * q[0] + f1 * q[1], f0 + f1);
                    grid_best = grid_best.min(obj);
                }
            }
        }
        // The solver optimizes a continuous relaxation of the grid, so it
        // may only beat the grid, never lose to it beyond float noise.
        let margin = solver_obj - grid_best;
        let tol = 1e-9 * grid_best.abs().max(1.0);
        worst = worst.max(margin / grid_best.abs().max(1.0));
        if margin > tol {
            failures += 1;
            if detail.is_empty() {
                detail = format!(
                    "case {case}: solver objective {solver_obj:e} above grid best {grid_best:e}"
                );
            }
        }
    }
    if detail.is_empty() {
        detail = format!("worst relative margin {worst:.3e}");
    }
    report("local_solver_vs_grid", cases, failures, worst, detail)
}

/// Compares the uplink solver against a dense power grid and verifies the
/// exactness of the final power refinement.
pub fn check_transmission_against_grid(master_seed: u64, cases: usize) -> CheckReport {
    let mut rng = stream_rng(master_seed, Stream::Policy, 9002);
    let tau = 0.01;
    let bw = 2.5e5;
    let n0 = channel::noise_psd_from_dbm_per_hz(-174.0);
    let p_max = 0.3;
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for case in 0..cases {
        let n = case % 3 + 1;
        let q: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.0..2e6) })
            .collect();
        let gain = 10f64.powf(rng.gen_range(-12.0..-9.0));
        let weights = PenaltyWeights {
            local_energy_weight: 1e9,
            transmit_energy_weight: 10f64.powf(rng.gen_range(5.0..7.0)),
            switched_capacitance: 1e-28,
        };
        let demands: Vec<f64> = q.iter().map(|qi| qi / tau).collect();

        let (rates, power) = alloc::solve_transmission(&q, p_max, gain, bw, n0, &weights, tau);
        let granted: f64 = rates.iter().sum();
        let value: f64 = rates.iter().zip(&q).map(|(ri, qi)| ri * qi).sum();
        let solver_obj = -tau * value + weights.transmit_energy_weight * tau * power;

        let mut grid_best = f64::INFINITY;
        for step in 0..=2000 {
            let p = p_max * step as f64 / 2000.0;
            let achievable = channel::rate(p, gain, bw, n0);
            let obj = -tau * oracle_fill_value(&q, &demands, achievable)
                + weights.transmit_energy_weight * tau * p;
            grid_best = grid_best.min(obj);
        }
        let margin = solver_obj - grid_best;
        let tol = 1e-9 * grid_best.abs().max(1.0);
        worst = worst.max(margin / grid_best.abs().max(1.0));
        let mut bad = margin > tol;

        // Refinement exactness: the reported power must reproduce the
        // granted total rate bit for bit (up to float noise).
        if granted > 0.0 {
            let back = channel::rate(power, gain, bw, n0);
            if (back / granted - 1.0).abs() > 1e-9 {
                bad = true;
                if detail.is_empty() {
                    detail = format!(
                        "case {case}: refined power reproduces rate {back:e}, granted {granted:e}"
                    );
                }
            }
        } else if power != 0.0 {
            bad = true;
        }
        if bad {
            failures += 1;
            if detail.is_empty() {
                detail = format!(
                    "case {case}: solver objective {solver_obj:e} above grid best {grid_best:e}"
                );
            }
        }
    }
    if detail.is_empty() {
        detail = format!("worst relative margin {worst:.3e}");
    }
    report("uplink_solver_vs_grid", cases, failures, worst, detail)
}

/// Serves the edge capacity in many small quanta, always to the longest
/// unserved queue, and returns the drain value achieved.
fn quantized_edge_value(q: &[f64], cap: f64, tau: f64, quanta: usize) -> f64 {
    let quantum = cap / quanta as f64;
    let mut remaining: Vec<f64> = q.iter().map(|qi| qi / tau).collect();
    let mut value = 0.0;
    for _ in 0..quanta {
        let mut best: Option<usize> = None;
        for i in 0..q.len() {
            if remaining[i] > 0.0 && best.map_or(true, |b| q[i] > q[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        let take = quantum.min(remaining[b]);
        value += take * q[b];
        remaining[b] -= take;
    }
    value
}

/// Sandwiches the edge solver's drain value between a quantized fill and
/// the quantization error bound. `quanta` sets the oracle's resolution;
/// the acceptance band shrinks proportionally.
pub fn check_edge_against_quantized_fill(
    master_seed: u64,
    cases: usize,
    quanta: usize,
) -> CheckReport {
    let mut rng = stream_rng(master_seed, Stream::Policy, 9003);
    let tau = 0.01;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for case in 0..cases {
        let n = case % 8 + 1;
        let q: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1e8) })
            .collect();
        let cap = rng.gen_range(0.0..2e10);
        let f = alloc::solve_edge(&q, cap, tau);
        let solver_value: f64 = f.iter().zip(&q).map(|(fi, qi)| fi * qi).sum();
        let oracle_value = quantized_edge_value(&q, cap, tau, quanta);

        let max_q = q.iter().cloned().fold(0.0, f64::max);
        let scale = solver_value.abs().max(oracle_value.abs()).max(1.0);
        // Each queue boundary can strand at most one quantum, so the
        // quantized value trails the optimum by at most (n+1) quanta of
        // the longest queue and can never exceed it.
        let slack = (n as f64 + 1.0) * (cap / quanta as f64) * max_q;
        let low_ok = solver_value >= oracle_value - 1e-9 * scale;
        let high_ok = solver_value <= oracle_value + slack + 1e-9 * scale;
        worst = worst.max((solver_value - oracle_value).abs() / scale);
        if !(low_ok && high_ok) {
            failures += 1;
            if detail.is_empty() {
                detail = format!(
                    "case {case}: solver value {solver_value:e} outside \
                     [{:e}, {:e}]",
                    oracle_value - 1e-9 * scale,
                    oracle_value + slack + 1e-9 * scale
                );
            }
        }
    }
    if detail.is_empty() {
        detail = format!("worst relative deviation {worst:.3e}");
    }
    report("edge_solver_vs_quantized_fill", cases, failures, worst, detail)
}

/// Certifies edge solutions through their optimality conditions and
/// verifies that deliberately corrupted allocations are rejected.
pub fn check_edge_kkt(master_seed: u64, cases: usize) -> CheckReport {
    let mut rng = stream_rng(master_seed, Stream::Policy, 9004);
    let tau = 0.01;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for case in 0..cases {
        let n = case % 6 + 1;
        let q: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1e8) })
            .collect();
        let cap = rng.gen_range(0.0..2e10);
        let f = alloc::solve_edge(&q, cap, tau);
        match alloc::edge_kkt_certificate(&q, cap, tau, &f) {
            Ok(lambda) => {
                worst = worst.max(lambda);
                if lambda < 0.0 {
                    failures += 1;
                }
            }
            Err(e) => {
                failures += 1;
                if detail.is_empty() {
                    detail = format!("case {case}: certificate failed: {e}");
                }
            }
        }

        // Mutation probe: move served capacity from the longest to the
        // shortest queue; when their prices differ the certificate must
        // reject the corrupted allocation.
        if n >= 2 {
            let hi = (0..n).max_by(|&a, &b| q[a].partial_cmp(&q[b]).unwrap()).unwrap();
            let lo = (0..n).min_by(|&a, &b| q[a].partial_cmp(&q[b]).unwrap()).unwrap();
            let movable = f[hi].min(q[lo] / tau - f[lo]).min(q[lo] / tau * 0.5);
            if q[hi] > q[lo] * (1.0 + 1e-6) + 1.0 && movable > 1e-3 * (q[hi] / tau) {
                let mut bad = f.clone();
                bad[hi] -= movable;
                bad[lo] += movable;
                if alloc::edge_kkt_certificate(&q, cap, tau, &bad).is_ok() {
                    failures += 1;
                    if detail.is_empty() {
                        detail = format!("case {case}: corrupted allocation not rejected");
                    }
                }
            }
        }
    }
    if detail.is_empty() {
        detail = format!("largest multiplier {worst:.3e}");
    }
    report("edge_kkt_certificate", cases, failures, worst, detail)
}

/// Central-difference verification of the actor and critic loss
/// gradients on small random networks and batches.
pub fn check_loss_gradients(master_seed: u64, points: usize) -> CheckReport {
    let mut rng = stream_rng(master_seed, Stream::Policy, 9005);
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    let rel_tol = 1e-4;

    for point in 0..points {
        let head_sizes = vec![2, 3];
        let ac = ActorCritic::new(3, head_sizes.clone(), 0, &[5], &mut rng);
        let clip = 0.2;
        let entropy_coeff = if point % 2 == 1 { 0.05 } else { 0.0 };

        let batch: Vec<Transition> = (0..3)
            .map(|_| {
                let state: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let next_state: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let action_idx = vec![rng.gen_range(0..2), rng.gen_range(0..3)];
                let log_prob_old =
                    ac.log_prob_current(&state, &action_idx) + rng.gen_range(-0.3..0.3);
                Transition {
                    state,
                    action_idx,
                    reward: rng.gen_range(-1.0..1.0),
                    next_state,
                    log_prob_old,
                }
            })
            .collect();
        let advs: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let targets: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let eval_actor = |ac: &ActorCritic| {
            let refs: Vec<&Transition> = batch.iter().collect();
            let mut sink = Grads::zeros_like(&ac.actor);
            actor_loss(ac, &refs, &advs, clip, entropy_coeff, &mut sink)
        };
        let eval_critic = |ac: &ActorCritic| {
            let refs: Vec<&Transition> = batch.iter().collect();
            let mut sink = Grads::zeros_like(&ac.critic);
            critic_loss(ac, &refs, &targets, &mut sink)
        };

        let refs: Vec<&Transition> = batch.iter().collect();
        let mut actor_grads = Grads::zeros_like(&ac.actor);
        actor_loss(&ac, &refs, &advs, clip, entropy_coeff, &mut actor_grads);
        let mut critic_grads = Grads::zeros_like(&ac.critic);
        critic_loss(&ac, &refs, &targets, &mut critic_grads);

        let mut probe = |net: &str| {
            let (mut theta, analytic): (Vec<f64>, Vec<f64>) = if net == "actor" {
                (ac.actor.flatten(), actor_grads.flatten())
            } else {
                (ac.critic.flatten(), critic_grads.flatten())
            };
            for j in 0..theta.len() {
                let h = 1e-5 * theta[j].abs().max(1.0);
                let mut perturbed = ac.clone();
                theta[j] += h;
                let plus = if net == "actor" {
                    perturbed.actor.assign(&theta);
                    eval_actor(&perturbed)
                } else {
                    perturbed.critic.assign(&theta);
                    eval_critic(&perturbed)
                };
                theta[j] -= 2.0 * h;
                let minus = if net == "actor" {
                    perturbed.actor.assign(&theta);
                    eval_actor(&perturbed)
                } else {
                    perturbed.critic.assign(&theta);
                    eval_critic(&perturbed)
                };
                theta[j] += h;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[j];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
                if err > rel_tol {
                    failures += 1;
                    if detail.is_empty() {
                        detail = format!(
                            "point {point} {net} param {j}: analytic {a:e} vs numeric {numeric:e}"
                        );
                    }
                }
            }
        };
        probe("actor");
        probe("critic");
    }
    if detail.is_empty() {
        detail = format!("worst relative gradient error {worst:.3e}");
    }
    report("loss_gradients_vs_finite_differences", points, failures, worst, detail)
}

/// Runs the full allocator pipeline under random partition switches and
/// verifies the per-queue one-slot drift inequality at every slot.
pub fn check_drift_bound(
    inst: &Instance,
    slots: usize,
    partition_every: usize,
    epsilon: f64,
) -> CheckReport {
    let name = "drift_bound_per_slot";
    let master = inst.master_seed;
    let mut channel_rng = stream_rng(master, Stream::Channel, 0);
    let mut arrivals_rng = stream_rng(master, Stream::Arrivals, 0);
    let mut baseline_rng = stream_rng(master, Stream::Baseline, 0);
    let layout = inst.layout;
    let n = layout.num_services();
    let tau = inst.config.slot_seconds;
    let bw = inst.channel.subchannel_hz();
    let n0 = inst.channel.noise_psd;
    let a_max = inst.admission_truncation(epsilon);

    let mut state = match inst.new_state() {
        Ok(s) => s,
        Err(e) => return report(name, 0, 1, 0.0, format!("state setup failed: {e}")),
    };
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    let mut detail = String::new();
    for slot in 0..slots {
        if slot % partition_every.max(1) == 0 {
            let partitions: Vec<usize> = (0..n)
                .map(|i| baseline_rng.gen_range(inst.k_min..=inst.max_k(i)))
                .collect();
            if let Err(e) = state.apply_partition(&partitions) {
                return report(name, slot, 1, min_slack, format!("partition failed: {e}"));
            }
        }
        let gains: Vec<f64> = (0..layout.num_devices)
            .map(|m| inst.channel.sample_gain(m, &mut channel_rng))
            .collect();
        let arrivals: Vec<u64> = (0..n)
            .map(|_| sample_arrivals(inst.config.arrival_rate, &mut arrivals_rng))
            .collect();
        let alloc = plan_slot(inst, &state, &gains);
        let max_rate_bps: Vec<f64> = gains
            .iter()
            .map(|&g| channel::rate(inst.config.max_power_w, g, bw, n0))
            .collect();
        let params = DriftBoundParams {
            local_cap_hz: inst.config.local_cap_hz,
            edge_cap_hz: inst.config.edge_cap_hz,
            max_rate_bps: &max_rate_bps,
            a_max,
            tau,
        };
        let diag =
            match alloc::drift_penalty_bound(&state, &alloc, &arrivals, &params, &inst.weights) {
                Ok(d) => d,
                Err(e) => return report(name, slot, 1, min_slack, format!("slot failed: {e}")),
            };
        for (bounds, realized) in [
            (&diag.bound_local, &diag.realized_local),
            (&diag.bound_transmit, &diag.realized_transmit),
            (&diag.bound_edge, &diag.realized_edge),
        ] {
            for (b, r) in bounds.iter().zip(realized) {
                min_slack = min_slack.min(b - r);
            }
        }
        if !diag.holds() {
            violations += 1;
            if detail.is_empty() {
                detail = format!("first violation at slot {slot}");
            }
        }
        if let Err(e) =
            state.step_queues(&alloc.local_hz, &alloc.rate_bps, &alloc.edge_hz, &arrivals, tau)
        {
            return report(name, slot, 1, min_slack, format!("step failed: {e}"));
        }
    }
    if detail.is_empty() {
        detail = format!("minimum bound slack {min_slack:.3e} over {slots} slots");
    }
    report(name, slots, violations, min_slack, detail)
}

/// Verifies task and workload conservation along a simulated trace: every
/// admitted task is eventually completed or still resident, and each
/// queue's backlog equals the sum of its tasks' remaining work.
pub fn check_queue_conservation(inst: &Instance, slots: usize) -> CheckReport {
    let name = "queue_conservation";
    let master = inst.master_seed;
    let mut channel_rng = stream_rng(master, Stream::Channel, 1);
    let mut arrivals_rng = stream_rng(master, Stream::Arrivals, 1);
    let mut baseline_rng = stream_rng(master, Stream::Baseline, 1);
    let n = inst.layout.num_services();
    let mut state = match inst.new_state() {
        Ok(s) => s,
        Err(e) => return report(name, 0, 1, 0.0, format!("state setup failed: {e}")),
    };

    let mut entered = 0u64;
    let mut completed = 0u64;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for slot in 0..slots {
        if slot % 10 == 0 {
            let partitions: Vec<usize> = (0..n)
                .map(|i| baseline_rng.gen_range(inst.k_min..=inst.max_k(i)))
                .collect();
            state.apply_partition(&partitions).expect("valid partitions");
        }
        let log = match run_slot(inst, &mut state, &mut channel_rng, &mut arrivals_rng) {
            Ok(l) => l,
            Err(e) => return report(name, slot, 1, worst, format!("slot failed: {e}")),
        };
        entered += log.arrivals.iter().sum::<u64>();
        completed += log.departures.completed.iter().map(|&c| u64::from(c)).sum::<u64>();

        for i in 0..n {
            for queue in [state.local_queue(i), state.transmit_queue(i), state.edge_queue(i)] {
                let sum: f64 = queue.tasks().map(|t| t.remaining_work).sum();
                let mismatch = (queue.backlog() - sum).abs();
                worst = worst.max(mismatch);
                if mismatch > 1e-6 * sum.max(1.0) {
                    failures += 1;
                }
                if queue.tasks().any(|t| t.remaining_work <= 0.0) {
                    failures += 1;
                    if detail.is_empty() {
                        detail = format!("slot {slot}: nonpositive resident work");
                    }
                }
            }
        }
    }
    let resident = state.total_tasks() as u64;
    if entered != completed + resident {
        failures += 1;
        detail = format!(
            "task balance broken: entered {entered}, completed {completed}, resident {resident}"
        );
    }
    if detail.is_empty() {
        detail = format!(
            "entered {entered} = completed {completed} + resident {resident}; \
             worst backlog mismatch {worst:.3e}"
        );
    }
    report(name, slots, failures, worst, detail)
}

/// Validates synthetic profiles and their JSON round trip, and checks the
/// cycle-split identity of every partition view.
pub fn check_profile_round_trip(cases: usize) -> CheckReport {
    let name = "profile_round_trip";
    let rho = 0.12;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for case in 0..cases {
        let layers = case % 12 + 1;
        let profile = synth_profile(layers, case as u64);
        if let Err(e) = profile.validate() {
            failures += 1;
            if detail.is_empty() {
                detail = format!("case {case}: invalid synthetic profile: {e}");
            }
            continue;
        }
        let json = crate::profiles::profiles_to_json(&[profile.clone()]);
        match crate::profiles::parse_profiles(&json) {
            Ok(back) if back.len() == 1 && back[0] == profile => {}
            Ok(_) => {
                failures += 1;
                if detail.is_empty() {
                    detail = format!("case {case}: JSON round trip changed the profile");
                }
            }
            Err(e) => {
                failures += 1;
                if detail.is_empty() {
                    detail = format!("case {case}: round trip failed: {e}");
                }
            }
        }
        let total = profile.total_macs * rho;
        for k in 0..=profile.num_layers() {
            let view = profile.partition_view(k, rho).expect("k in range");
            let err = ((view.local_cycles + view.edge_cycles) - total).abs() / total;
            worst = worst.max(err);
            if err > 1e-12 {
                failures += 1;
                if detail.is_empty() {
                    detail = format!("case {case} k={k}: cycle split off by {err:e}");
                }
            }
        }
    }
    if detail.is_empty() {
        detail = format!("worst relative cycle-split error {worst:.3e}");
    }
    report(name, cases, failures, worst, detail)
}

/// Runs every check family at moderate sizes; the `selfcheck` command
/// prints one line per report.
#[must_use]
pub fn run_all_checks(master_seed: u64) -> Vec<CheckReport> {
    let mut reports = vec![
        check_local_against_grid(master_seed, 60),
        check_transmission_against_grid(master_seed, 60),
        check_edge_against_quantized_fill(master_seed, 40, 200_000),
        check_edge_kkt(master_seed, 120),
        check_loss_gradients(master_seed, 6),
        check_profile_round_trip(30),
    ];
    match Instance::new(ExperimentConfig::default(), master_seed) {
        Ok(inst) => {
            reports.push(check_drift_bound(&inst, 1500, 10, 1e-8));
            reports.push(check_queue_conservation(&inst, 1500));
        }
        Err(e) => {
            reports.push(report(
                "drift_bound_per_slot",
                0,
                1,
                0.0,
                format!("default instance failed: {e}"),
            ));
        }
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_fill_prefers_long_queues() {
        let q = [5.0, 3.0, 2.0];
        let demands = [5.0, 3.0, 2.0];
        assert_eq!(oracle_fill_value(&q, &demands, 6.0), 5.0 * 5.0 + 1.0 * 3.0);
        assert_eq!(oracle_fill_value(&q, &demands, 100.0), 25.0 + 9.0 + 4.0);
        assert_eq!(oracle_fill_value(&q, &demands, 0.0), 0.0);
    }

    #[test]
    fn quantized_fill_approaches_the_exact_value() {
        let q = [5.0, 3.0, 2.0];
        let exact = 5.0 * 5.0 + 1.0 * 3.0;
        let coarse = quantized_edge_value(&q, 6.0, 1.0, 100);
        let fine = quantized_edge_value(&q, 6.0, 1.0, 100_000);
        assert!((fine - exact).abs() < (coarse - exact).abs() + 1e-12);
        assert!((fine - exact).abs() < 1e-2);
        assert!(fine <= exact + 1e-12);
    }

    #[test]
    fn local_grid_family_passes() {
        let r = check_local_against_grid(101, 40);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn transmission_grid_family_passes() {
        let r = check_transmission_against_grid(102, 40);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn edge_quantized_family_passes() {
        let r = check_edge_against_quantized_fill(103, 20, 200_000);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn edge_kkt_family_passes() {
        let r = check_edge_kkt(104, 80);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn gradient_family_passes() {
        let r = check_loss_gradients(105, 4);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn profile_family_passes() {
        let r = check_profile_round_trip(20);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn drift_and_conservation_families_pass_on_a_small_instance() {
        let mut config = ExperimentConfig::default();
        config.num_devices = 2;
        let inst = Instance::new(config, 106).unwrap();
        let drift = check_drift_bound(&inst, 400, 10, 1e-8);
        assert!(drift.passed, "{}", drift.detail);
        assert!(drift.worst.is_finite());
        let conservation = check_queue_conservation(&inst, 400);
        assert!(conservation.passed, "{}", conservation.detail);
    }

    #[test]
    fn all_families_report() {
        let reports = run_all_checks(107);
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
