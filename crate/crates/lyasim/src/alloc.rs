//! Per-slot drift-plus-penalty resource allocation.
//!
//! Given the pre-slot backlogs, the controller trades queue drain against
//! energy through three decoupled convex programs:
//!
//! * local CPU: minimize `-sum_n f_n tau Q_n + U_l tau delta (sum_n f_n)^3`
//!   subject to `sum_n f_n <= F_local` and `f_n <= Q_n / tau`;
//! * uplink: minimize `-sum_n r_n tau Q_n + U_t tau p` subject to
//!   `p <= p_max`, `sum_n r_n <= R(p)` and `r_n <= Q_n / tau`;
//! * edge CPU: maximize `sum f_eq tau Q_eq` subject to `sum f <= F_edge`
//!   and the per-queue drain caps, a pure linear program.
//!
//! For fixed total budget the linear drain gain is maximized by filling
//! queues in descending-backlog order up to their drain caps, so the
//! first two problems reduce to one-dimensional convex minimizations over
//! the total (budget or power) handled by golden-section search. The
//! uplink solution is finished by a power refinement step: the power is
//! set to the exact inverse of the rate function at the granted total
//! rate, so no energy is spent on unused rate. The edge program is solved
//! exactly by the greedy fill itself; `edge_kkt_certificate` recovers the
//! multiplier of the capacity constraint and replays the optimality
//! conditions, which the test suite uses as an independent check.

use crate::channel;
use crate::queueing::{Layout, QueueError, SystemState};
use serde::{Deserialize, Serialize};

/// Relative interval tolerance of the golden-section searches.
pub const GOLDEN_TOL_REL: f64 = 1e-9;

const PHI: f64 = 1.618_033_988_749_895;
const RESP: f64 = 2.0 - PHI;

/// Weights of the per-slot penalty term. `local_energy_weight` and
/// `transmit_energy_weight` convert Joules of CPU and radio energy into
/// drift units; `switched_capacitance` is the chip constant delta of the
/// cubic CPU power model E = tau * delta * f^3.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub local_energy_weight: f64,
    pub transmit_energy_weight: f64,
    pub switched_capacitance: f64,
}

/// One slot's control decision for every queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Local CPU frequency per service (Hz).
    pub local_hz: Vec<f64>,
    /// Granted uplink rate per service (bit/s).
    pub rate_bps: Vec<f64>,
    /// Edge CPU frequency per service (Hz).
    pub edge_hz: Vec<f64>,
    /// Transmit power per device (W).
    pub power_w: Vec<f64>,
}

/// Minimizes a unimodal function on [a, b] by golden-section search and
/// returns the argmin. The interval shrinks to `GOLDEN_TOL_REL` of its
/// initial width.
fn golden_min(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    debug_assert!(b >= a);
    let width = b - a;
    if width <= 0.0 {
        return a;
    }
    let mut lo = a;
    let mut hi = b;
    let mut x1 = lo + RESP * (hi - lo);
    let mut x2 = hi - RESP * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > GOLDEN_TOL_REL * width {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = lo + RESP * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = hi - RESP * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Queue order for the greedy fills: descending backlog, ties broken by
/// the flat service index so results are deterministic.
fn fill_order(backlogs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..backlogs.len()).collect();
    order.sort_by(|&i, &j| {
        backlogs[j]
            .partial_cmp(&backlogs[i])
            .expect("backlogs are finite")
            .then(i.cmp(&j))
    });
    order
}

/// Drain gain `sum_i alloc_i * Q_i` of greedily filling `total` service
/// units into queues in descending-backlog order, capped per queue.
fn fill_value(order: &[usize], backlogs: &[f64], demands: &[f64], total: f64) -> f64 {
    let mut remaining = total;
    let mut value = 0.0;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = demands[i].min(remaining);
        value += take * backlogs[i];
        remaining -= take;
    }
    value
}

/// The greedy fill itself: allocation per queue for a given total.
fn fill_alloc(order: &[usize], demands: &[f64], total: f64) -> Vec<f64> {
    let mut remaining = total;
    let mut alloc = vec![0.0; demands.len()];
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = demands[i].min(remaining);
        alloc[i] = take;
        remaining -= take;
    }
    alloc
}

/// Local-CPU subproblem for one device: frequencies per service. The
/// drain caps make each f_n at most Q_n / tau, and the total at most
/// `cap_hz`.
#[must_use]
pub fn solve_local(
    q_cycles: &[f64],
    cap_hz: f64,
    weights: &PenaltyWeights,
    tau: f64,
) -> Vec<f64> {
    let demands: Vec<f64> = q_cycles.iter().map(|q| q / tau).collect();
    let upper = cap_hz.min(demands.iter().sum());
    if upper <= 0.0 {
        return vec![0.0; q_cycles.len()];
    }
    let order = fill_order(q_cycles);
    let energy_coeff = weights.local_energy_weight * tau * weights.switched_capacitance;
    let objective = |total: f64| {
        -tau * fill_value(&order, q_cycles, &demands, total) + energy_coeff * total.powi(3)
    };
    let interior = golden_min(objective, 0.0, upper);
    let total = [0.0, interior, upper]
        .into_iter()
        .min_by(|&x, &y| objective(x).partial_cmp(&objective(y)).expect("finite"))
        .expect("nonempty");
    fill_alloc(&order, &demands, total)
}

/// Uplink subproblem for one device: (rates per service, transmit power).
/// The search runs over the power; for each candidate the achievable rate
/// is greedily granted to the longest queues. The returned power is the
/// exact inverse of the rate curve at the granted total, never more.
#[must_use]
pub fn solve_transmission(
    q_bits: &[f64],
    p_max_w: f64,
    gain: f64,
    bandwidth_hz: f64,
    noise_psd: f64,
    weights: &PenaltyWeights,
    tau: f64,
) -> (Vec<f64>, f64) {
    let n = q_bits.len();
    let demands: Vec<f64> = q_bits.iter().map(|q| q / tau).collect();
    let total_demand: f64 = demands.iter().sum();
    if total_demand <= 0.0 || p_max_w <= 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let order = fill_order(q_bits);
    let objective = |p: f64| {
        let achievable = channel::rate(p, gain, bandwidth_hz, noise_psd);
        -tau * fill_value(&order, q_bits, &demands, achievable)
            + weights.transmit_energy_weight * tau * p
    };
    let interior = golden_min(objective, 0.0, p_max_w);
    let p_star = [0.0, interior, p_max_w]
        .into_iter()
        .min_by(|&x, &y| objective(x).partial_cmp(&objective(y)).expect("finite"))
        .expect("nonempty");
    let achievable = channel::rate(p_star, gain, bandwidth_hz, noise_psd);
    let rates = fill_alloc(&order, &demands, achievable);
    let granted: f64 = rates.iter().sum();
    let power = channel::power_for_rate(granted, gain, bandwidth_hz, noise_psd).min(p_max_w);
    (rates, power)
}

/// Edge-CPU subproblem across all queues: exact greedy solution of the
/// linear program. Queues are filled to their drain caps in descending
/// backlog order; the first demand that does not fully fit gets the
/// remaining capacity and everything after it gets zero.
#[must_use]
pub fn solve_edge(q_cycles: &[f64], cap_hz: f64, tau: f64) -> Vec<f64> {
    let demands: Vec<f64> = q_cycles.iter().map(|q| q / tau).collect();
    let order = fill_order(q_cycles);
    fill_alloc(&order, &demands, cap_hz.max(0.0))
}

/// Replays the optimality conditions of the edge linear program for a
/// given allocation and returns the recovered capacity multiplier.
///
/// The program is `min -sum tau Q_i f_i` over `0 <= f_i <= Q_i / tau`,
/// `sum f_i <= cap`. An allocation is optimal iff there is a lambda >= 0
/// with: partially served queues priced exactly at lambda = tau Q_i,
/// fully served queues at tau Q_i >= lambda, unserved queues at
/// tau Q_i <= lambda, and lambda = 0 whenever capacity is slack.
pub fn edge_kkt_certificate(
    q_cycles: &[f64],
    cap_hz: f64,
    tau: f64,
    alloc: &[f64],
) -> Result<f64, String> {
    assert_eq!(q_cycles.len(), alloc.len(), "allocation length mismatch");
    let rel = 1e-9;
    let price: Vec<f64> = q_cycles.iter().map(|q| tau * q).collect();
    let price_scale = price.iter().cloned().fold(1e-12, f64::max);
    let cap_tol = rel * cap_hz.max(1.0);

    let mut total = 0.0;
    let mut partial_price: Option<f64> = None;
    let mut min_full_price = f64::INFINITY;
    let mut max_zero_price: f64 = 0.0;
    for i in 0..alloc.len() {
        let demand = q_cycles[i] / tau;
        let f = alloc[i];
        let demand_tol = rel * demand.max(1.0);
        if f < -demand_tol {
            return Err(format!("queue {i}: negative allocation {f:e}"));
        }
        if f > demand + demand_tol {
            return Err(format!(
                "queue {i}: allocation {f:e} exceeds drain cap {demand:e}"
            ));
        }
        total += f;
        if f >= demand - demand_tol && demand > demand_tol {
            min_full_price = min_full_price.min(price[i]);
        } else if f <= demand_tol {
            max_zero_price = max_zero_price.max(price[i]);
        } else {
            match partial_price {
                None => partial_price = Some(price[i]),
                Some(p) if (p - price[i]).abs() <= rel * price_scale => {}
                Some(p) => {
                    return Err(format!(
                        "two partially served queues priced {p:e} and {:e}",
                        price[i]
                    ))
                }
            }
        }
    }
    if total > cap_hz + cap_tol {
        return Err(format!("total {total:e} exceeds capacity {cap_hz:e}"));
    }

    let slack = total < cap_hz - cap_tol;
    let lambda = match partial_price {
        Some(p) => {
            if slack {
                return Err(format!(
                    "partially served queue with slack capacity (lambda {p:e})"
                ));
            }
            p
        }
        None if slack => 0.0,
        None => max_zero_price,
    };
    if min_full_price < lambda - rel * price_scale {
        return Err(format!(
            "fully served queue priced {min_full_price:e} below multiplier {lambda:e}"
        ));
    }
    if max_zero_price > lambda + rel * price_scale {
        return Err(format!(
            "unserved queue priced {max_zero_price:e} above multiplier {lambda:e}"
        ));
    }
    Ok(lambda)
}

/// Static inputs of the one-slot drift bound.
#[derive(Debug, Clone)]
pub struct DriftBoundParams<'a> {
    pub local_cap_hz: f64,
    pub edge_cap_hz: f64,
    /// Achievable rate per device at the slot's allocated power.
    pub max_rate_bps: &'a [f64],
    /// Truncation count bounding per-slot admissions in the constants.
    pub a_max: u64,
    pub tau: f64,
}

/// Per-queue drift bounds and realized drifts of one slot, plus the
/// weighted energy penalty per device. With V(Q) = Q^2/2, each bound is
/// `Q * (admitted_work - service * tau) + B/2` where B collects the
/// squared extremes of admission and service, e.g. for a local queue
/// `B = (a_max * c_local)^2 + (F_local * tau)^2`.
#[derive(Debug, Clone)]
pub struct DriftDiagnostics {
    pub bound_local: Vec<f64>,
    pub bound_transmit: Vec<f64>,
    pub bound_edge: Vec<f64>,
    pub realized_local: Vec<f64>,
    pub realized_transmit: Vec<f64>,
    pub realized_edge: Vec<f64>,
    pub const_local: Vec<f64>,
    pub const_transmit: Vec<f64>,
    pub const_edge: Vec<f64>,
    /// Per device: CPU energy tau * delta * (sum_n f_n)^3.
    pub energy_local: Vec<f64>,
    /// Per device: radio energy tau * p.
    pub energy_transmit: Vec<f64>,
    /// Per device: U_l * E_local + U_t * E_transmit.
    pub weighted_penalty: Vec<f64>,
}

impl DriftDiagnostics {
    /// True when every realized per-queue drift respects its bound up to
    /// float slack.
    #[must_use]
    pub fn holds(&self) -> bool {
        let ok = |real: &[f64], bound: &[f64]| {
            real.iter()
                .zip(bound)
                .all(|(r, b)| *r <= b + 1e-9 * b.abs().max(1.0))
        };
        ok(&self.realized_local, &self.bound_local)
            && ok(&self.realized_transmit, &self.bound_transmit)
            && ok(&self.realized_edge, &self.bound_edge)
    }
}

/// Evaluates the one-slot drift bound and the realized drift by stepping
/// a copy of `state` under the given controls and arrivals.
pub fn drift_penalty_bound(
    state: &SystemState,
    alloc: &Allocation,
    arrivals: &[u64],
    params: &DriftBoundParams,
    weights: &PenaltyWeights,
) -> Result<DriftDiagnostics, QueueError> {
    let layout = state.layout();
    let n = layout.num_services();
    let tau = params.tau;

    let pre_local = state.local_backlogs();
    let pre_transmit = state.transmit_backlogs();
    let pre_edge = state.edge_backlogs();

    let mut stepped = state.clone();
    let departures = stepped.step_queues(
        &alloc.local_hz,
        &alloc.rate_bps,
        &alloc.edge_hz,
        arrivals,
        tau,
    )?;
    let post_local = stepped.local_backlogs();
    let post_transmit = stepped.transmit_backlogs();
    let post_edge = stepped.edge_backlogs();

    let v = |q: f64| 0.5 * q * q;
    let a_max = params.a_max as f64;

    let mut diag = DriftDiagnostics {
        bound_local: vec![0.0; n],
        bound_transmit: vec![0.0; n],
        bound_edge: vec![0.0; n],
        realized_local: vec![0.0; n],
        realized_transmit: vec![0.0; n],
        realized_edge: vec![0.0; n],
        const_local: vec![0.0; n],
        const_transmit: vec![0.0; n],
        const_edge: vec![0.0; n],
        energy_local: vec![0.0; layout.num_devices],
        energy_transmit: vec![0.0; layout.num_devices],
        weighted_penalty: vec![0.0; layout.num_devices],
    };

    for i in 0..n {
        let costs = state.current_costs(i);
        let device = layout.device_of(i);
        let max_rate = params.max_rate_bps[device];

        let admitted_local = f64::from(departures.admitted_local[i]) * costs.local_cycles;
        let admitted_transmit =
            f64::from(departures.admitted_transmit[i]) * costs.transfer_bits;
        let admitted_edge = f64::from(departures.admitted_edge[i]) * costs.edge_cycles;

        diag.const_local[i] = (a_max * costs.local_cycles).powi(2)
            + (params.local_cap_hz * tau).powi(2);
        diag.const_transmit[i] =
            (a_max * costs.transfer_bits).powi(2) + (max_rate * tau).powi(2);
        diag.const_edge[i] =
            (a_max * costs.edge_cycles).powi(2) + (params.edge_cap_hz * tau).powi(2);

        diag.realized_local[i] = v(post_local[i]) - v(pre_local[i]);
        diag.realized_transmit[i] = v(post_transmit[i]) - v(pre_transmit[i]);
        diag.realized_edge[i] = v(post_edge[i]) - v(pre_edge[i]);

        diag.bound_local[i] = pre_local[i] * (admitted_local - alloc.local_hz[i] * tau)
            + 0.5 * diag.const_local[i];
        diag.bound_transmit[i] = pre_transmit[i]
            * (admitted_transmit - alloc.rate_bps[i] * tau)
            + 0.5 * diag.const_transmit[i];
        diag.bound_edge[i] = pre_edge[i] * (admitted_edge - alloc.edge_hz[i] * tau)
            + 0.5 * diag.const_edge[i];
    }

    for device in 0..layout.num_devices {
        let total_hz: f64 = layout.device_range(device).map(|i| alloc.local_hz[i]).sum();
        let e_local = tau * weights.switched_capacitance * total_hz.powi(3);
        let e_transmit = tau * alloc.power_w[device];
        diag.energy_local[device] = e_local;
        diag.energy_transmit[device] = e_transmit;
        diag.weighted_penalty[device] = weights.local_energy_weight * e_local
            + weights.transmit_energy_weight * e_transmit;
    }
    Ok(diag)
}

/// Feasibility audit of a full allocation against caps and backlogs,
/// used by tests and the selfcheck command. Tolerances are relative
/// (1e-9) to absorb solver rounding.
pub fn check_allocation(
    alloc: &Allocation,
    layout: Layout,
    local_cap_hz: f64,
    edge_cap_hz: f64,
    p_max_w: f64,
    gains: &[f64],
    bandwidth_hz: f64,
    noise_psd: f64,
    local_backlogs: &[f64],
    transmit_backlogs: &[f64],
    edge_backlogs: &[f64],
    tau: f64,
) -> Result<(), String> {
    let rel = 1e-9;
    let n = layout.num_services();
    for i in 0..n {
        for (name, v) in [
            ("local frequency", alloc.local_hz[i]),
            ("rate", alloc.rate_bps[i]),
            ("edge frequency", alloc.edge_hz[i]),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("service {i}: {name} is {v:e}"));
            }
        }
        let checks = [
            ("local drain cap", alloc.local_hz[i] * tau, local_backlogs[i]),
            ("transmit drain cap", alloc.rate_bps[i] * tau, transmit_backlogs[i]),
            ("edge drain cap", alloc.edge_hz[i] * tau, edge_backlogs[i]),
        ];
        for (name, served, backlog) in checks {
            if served > backlog + rel * backlog.max(1.0) {
                return Err(format!(
                    "service {i}: {name} violated, served {served:e} backlog {backlog:e}"
                ));
            }
        }
    }
    for device in 0..layout.num_devices {
        let range = layout.device_range(device);
        let local_total: f64 = range.clone().map(|i| alloc.local_hz[i]).sum();
        if local_total > local_cap_hz * (1.0 + rel) {
            return Err(format!(
                "device {device}: local total {local_total:e} exceeds cap {local_cap_hz:e}"
            ));
        }
        let p = alloc.power_w[device];
        if !(p.is_finite() && p >= 0.0) {
            return Err(format!("device {device}: power is {p:e}"));
        }
        if p > p_max_w * (1.0 + rel) {
            return Err(format!(
                "device {device}: power {p:e} exceeds cap {p_max_w:e}"
            ));
        }
        let rate_total: f64 = range.map(|i| alloc.rate_bps[i]).sum();
        let achievable = channel::rate(p, gains[device], bandwidth_hz, noise_psd);
        if rate_total > achievable * (1.0 + rel) + rel {
            return Err(format!(
                "device {device}: rate total {rate_total:e} exceeds achievable {achievable:e}"
            ));
        }
    }
    let edge_total: f64 = alloc.edge_hz.iter().sum();
    if edge_total > edge_cap_hz * (1.0 + rel) {
        return Err(format!(
            "edge total {edge_total:e} exceeds cap {edge_cap_hz:e}"
        ));
    }
    Ok(())
}
