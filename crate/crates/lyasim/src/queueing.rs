//! Task-granular FIFO queues for the three processing stages.
//!
//! Each service (device m, model n) owns three queues: local compute
//! (cycles), uplink transmission (bits), edge compute (cycles). A task is
//! admitted to a stage with its workload fixed by the partition in force
//! at that moment; later partition changes never rewrite resident tasks.
//! Within one slot the order is: serve all three stages against the
//! pre-slot backlogs, then admit promotions (local -> transmit -> edge)
//! and fresh arrivals. Promoted tasks are enqueued ahead of same-slot
//! arrivals, preserving age order.
//!
//! Routing at admission follows the partition point k of the moment:
//! arrivals enter local unless k = 0 (straight to transmit with the full
//! input); local departures complete outright at k = K, otherwise enter
//! transmit; transmit departures enter edge unless the current edge share
//! is zero. A zero-workload admission cascades to the next stage in the
//! same slot and is not counted as a serviced departure of the stage it
//! passed through.

use crate::profiles::PartitionCosts;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Relative slack allowed when checking service against the per-queue
/// drain caps (service * tau <= backlog); absorbs solver rounding only.
pub const CAP_SLACK_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapKind {
    /// Local frequency drains more cycles than the local queue holds.
    LocalService,
    /// Rate drains more bits than the transmit queue holds.
    TransmitService,
    /// Edge frequency drains more cycles than the edge queue holds.
    EdgeService,
}

impl std::fmt::Display for CapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CapKind::LocalService => "local compute drain cap",
            CapKind::TransmitService => "transmit drain cap",
            CapKind::EdgeService => "edge compute drain cap",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QueueError {
    #[error("{cap} violated for device {device} service {service}: \
             service {served:e} exceeds backlog {backlog:e}")]
    CapViolation {
        cap: CapKind,
        device: usize,
        service: usize,
        served: f64,
        backlog: f64,
    },
    #[error("expected {expected} per-service entries for {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("partition {k} out of range 0..={max} for device {device} service {service}")]
    PartitionOutOfRange {
        device: usize,
        service: usize,
        k: usize,
        max: usize,
    },
}

/// Index arithmetic for the per-(device, service) flat layout. All
/// per-service vectors in the crate are ordered device-major:
/// (0,0), (0,1), ..., (1,0), ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub num_devices: usize,
    pub services_per_device: usize,
}

impl Layout {
    #[must_use]
    pub fn num_services(&self) -> usize {
        self.num_devices * self.services_per_device
    }

    #[must_use]
    pub fn flat(&self, device: usize, service: usize) -> usize {
        device * self.services_per_device + service
    }

    #[must_use]
    pub fn device_of(&self, flat: usize) -> usize {
        flat / self.services_per_device
    }

    #[must_use]
    pub fn service_of(&self, flat: usize) -> usize {
        flat % self.services_per_device
    }

    /// Flat index range of one device's services.
    #[must_use]
    pub fn device_range(&self, device: usize) -> std::ops::Range<usize> {
        let start = device * self.services_per_device;
        start..start + self.services_per_device
    }
}

/// One inference task resident in some stage queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// Cycles or bits still to be served in the current stage.
    pub remaining_work: f64,
    /// Slot at which the task entered the system.
    pub birth_slot: u64,
    /// Costs of the partition in force when the task entered its current
    /// stage; `remaining_work` started from the matching component.
    pub stage_costs: PartitionCosts,
}

/// FIFO queue of tasks for one stage of one service.
#[derive(Debug, Clone, Default)]
pub struct StageQueue {
    fifo: VecDeque<Task>,
}

impl StageQueue {
    /// Total unserved workload; by construction always the exact sum of
    /// the resident tasks' remaining work.
    #[must_use]
    pub fn backlog(&self) -> f64 {
        self.fifo.iter().map(|t| t.remaining_work).sum()
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    #[must_use]
    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.fifo.iter()
    }

    fn admit(&mut self, task: Task) {
        self.fifo.push_back(task);
    }

    /// Serves up to `budget` units head-first; returns tasks whose work
    /// reached zero, in departure order.
    fn drain(&mut self, mut budget: f64) -> Vec<Task> {
        let mut departed = Vec::new();
        while budget > 0.0 {
            let Some(head) = self.fifo.front_mut() else {
                break;
            };
            let applied = head.remaining_work.min(budget);
            head.remaining_work -= applied;
            budget -= applied;
            if head.remaining_work <= 0.0 {
                departed.push(self.fifo.pop_front().expect("head exists"));
            } else {
                break;
            }
        }
        departed
    }
}

/// Per-service departure and admission counts of one slot. `local`,
/// `transmit`, `edge` count tasks drained from the resident queues;
/// `completed` counts tasks that left the system; the `admitted_*` fields
/// count stage admissions (promotions plus arrivals) after service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotDepartures {
    pub local: Vec<u32>,
    pub transmit: Vec<u32>,
    pub edge: Vec<u32>,
    pub completed: Vec<u32>,
    pub admitted_local: Vec<u32>,
    pub admitted_transmit: Vec<u32>,
    pub admitted_edge: Vec<u32>,
}

impl SlotDepartures {
    fn zeros(n: usize) -> Self {
        Self {
            local: vec![0; n],
            transmit: vec![0; n],
            edge: vec![0; n],
            completed: vec![0; n],
            admitted_local: vec![0; n],
            admitted_transmit: vec![0; n],
            admitted_edge: vec![0; n],
        }
    }
}

/// Full queue state of the system plus the current partition choices.
#[derive(Debug, Clone)]
pub struct SystemState {
    layout: Layout,
    /// Per service: costs for every candidate k (index = k).
    cost_tables: Vec<Vec<PartitionCosts>>,
    partitions: Vec<usize>,
    local: Vec<StageQueue>,
    transmit: Vec<StageQueue>,
    edge: Vec<StageQueue>,
    /// Slots stepped so far.
    pub slot: u64,
    /// Partition decisions applied so far.
    pub periods_applied: u64,
}

impl SystemState {
    /// Empty queues with the given per-service cost tables and initial
    /// partition choices.
    pub fn new(
        layout: Layout,
        cost_tables: Vec<Vec<PartitionCosts>>,
        initial_partitions: Vec<usize>,
    ) -> Result<Self, QueueError> {
        let n = layout.num_services();
        if cost_tables.len() != n {
            return Err(QueueError::LengthMismatch {
                what: "cost tables",
                expected: n,
                got: cost_tables.len(),
            });
        }
        if initial_partitions.len() != n {
            return Err(QueueError::LengthMismatch {
                what: "initial partitions",
                expected: n,
                got: initial_partitions.len(),
            });
        }
        for (i, (&k, table)) in initial_partitions.iter().zip(&cost_tables).enumerate() {
            if k >= table.len() {
                return Err(QueueError::PartitionOutOfRange {
                    device: layout.device_of(i),
                    service: layout.service_of(i),
                    k,
                    max: table.len() - 1,
                });
            }
        }
        Ok(Self {
            layout,
            cost_tables,
            partitions: initial_partitions,
            local: (0..n).map(|_| StageQueue::default()).collect(),
            transmit: (0..n).map(|_| StageQueue::default()).collect(),
            edge: (0..n).map(|_| StageQueue::default()).collect(),
            slot: 0,
            periods_applied: 0,
        })
    }

    #[must_use]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[must_use]
    pub fn partitions(&self) -> &[usize] {
        &self.partitions
    }

    /// Largest candidate partition index K of service `i`.
    #[must_use]
    pub fn max_partition(&self, i: usize) -> usize {
        self.cost_tables[i].len() - 1
    }

    /// Costs of the partition currently in force for service `i`.
    #[must_use]
    pub fn current_costs(&self, i: usize) -> PartitionCosts {
        self.cost_tables[i][self.partitions[i]]
    }

    #[must_use]
    pub fn local_queue(&self, i: usize) -> &StageQueue {
        &self.local[i]
    }

    #[must_use]
    pub fn transmit_queue(&self, i: usize) -> &StageQueue {
        &self.transmit[i]
    }

    #[must_use]
    pub fn edge_queue(&self, i: usize) -> &StageQueue {
        &self.edge[i]
    }

    #[must_use]
    pub fn local_backlogs(&self) -> Vec<f64> {
        self.local.iter().map(StageQueue::backlog).collect()
    }

    #[must_use]
    pub fn transmit_backlogs(&self) -> Vec<f64> {
        self.transmit.iter().map(StageQueue::backlog).collect()
    }

    #[must_use]
    pub fn edge_backlogs(&self) -> Vec<f64> {
        self.edge.iter().map(StageQueue::backlog).collect()
    }

    /// Tasks resident anywhere in the system.
    #[must_use]
    pub fn total_tasks(&self) -> usize {
        self.local
            .iter()
            .chain(&self.transmit)
            .chain(&self.edge)
            .map(StageQueue::len)
            .sum()
    }

    /// Switches the partition choices for the next decision period.
    /// Resident tasks are untouched; only future admissions see the new
    /// costs. Callers invoke this exactly once per period boundary.
    pub fn apply_partition(&mut self, new_k: &[usize]) -> Result<(), QueueError> {
        let n = self.layout.num_services();
        if new_k.len() != n {
            return Err(QueueError::LengthMismatch {
                what: "partition vector",
                expected: n,
                got: new_k.len(),
            });
        }
        for (i, &k) in new_k.iter().enumerate() {
            if k >= self.cost_tables[i].len() {
                return Err(QueueError::PartitionOutOfRange {
                    device: self.layout.device_of(i),
                    service: self.layout.service_of(i),
                    k,
                    max: self.cost_tables[i].len() - 1,
                });
            }
        }
        self.partitions.copy_from_slice(new_k);
        self.periods_applied += 1;
        Ok(())
    }

    fn check_cap(
        &self,
        cap: CapKind,
        i: usize,
        served: f64,
        backlog: f64,
    ) -> Result<(), QueueError> {
        if served > backlog + CAP_SLACK_REL * backlog.max(1.0) {
            return Err(QueueError::CapViolation {
                cap,
                device: self.layout.device_of(i),
                service: self.layout.service_of(i),
                served,
                backlog,
            });
        }
        Ok(())
    }

    /// Advances one slot: serves all stages against pre-slot backlogs at
    /// the given frequencies/rates, then admits promotions and `arrivals`
    /// new tasks per service under the current partition.
    pub fn step_queues(
        &mut self,
        local_hz: &[f64],
        rate_bps: &[f64],
        edge_hz: &[f64],
        arrivals: &[u64],
        tau: f64,
    ) -> Result<SlotDepartures, QueueError> {
        let n = self.layout.num_services();
        for (what, len) in [
            ("local frequencies", local_hz.len()),
            ("rates", rate_bps.len()),
            ("edge frequencies", edge_hz.len()),
            ("arrivals", arrivals.len()),
        ] {
            if len != n {
                return Err(QueueError::LengthMismatch {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        for i in 0..n {
            self.check_cap(
                CapKind::LocalService,
                i,
                local_hz[i] * tau,
                self.local[i].backlog(),
            )?;
            self.check_cap(
                CapKind::TransmitService,
                i,
                rate_bps[i] * tau,
                self.transmit[i].backlog(),
            )?;
            self.check_cap(
                CapKind::EdgeService,
                i,
                edge_hz[i] * tau,
                self.edge[i].backlog(),
            )?;
        }

        let mut out = SlotDepartures::zeros(n);
        for i in 0..n {
            let costs = self.current_costs(i);
            let k = self.partitions[i];
            let k_last = self.max_partition(i);

            let from_local = self.local[i].drain(local_hz[i] * tau);
            let from_transmit = self.transmit[i].drain(rate_bps[i] * tau);
            let from_edge = self.edge[i].drain(edge_hz[i] * tau);
            out.local[i] = from_local.len() as u32;
            out.transmit[i] = from_transmit.len() as u32;
            out.edge[i] = from_edge.len() as u32;
            out.completed[i] += from_edge.len() as u32;

            for mut task in from_local {
                if k == k_last {
                    out.completed[i] += 1;
                    continue;
                }
                task.stage_costs = costs;
                if costs.transfer_bits > 0.0 {
                    task.remaining_work = costs.transfer_bits;
                    out.admitted_transmit[i] += 1;
                    self.transmit[i].admit(task);
                } else if costs.edge_cycles > 0.0 {
                    // Nothing to uplink under the current split; the task
                    // falls through to the edge queue within the slot.
                    task.remaining_work = costs.edge_cycles;
                    out.admitted_edge[i] += 1;
                    self.edge[i].admit(task);
                } else {
                    out.completed[i] += 1;
                }
            }
            for mut task in from_transmit {
                task.stage_costs = costs;
                if costs.edge_cycles > 0.0 {
                    task.remaining_work = costs.edge_cycles;
                    out.admitted_edge[i] += 1;
                    self.edge[i].admit(task);
                } else {
                    out.completed[i] += 1;
                }
            }
            for _ in 0..arrivals[i] {
                let task = Task {
                    remaining_work: 0.0,
                    birth_slot: self.slot,
                    stage_costs: costs,
                };
                if k == 0 {
                    let mut task = task;
                    task.remaining_work = costs.transfer_bits;
                    out.admitted_transmit[i] += 1;
                    self.transmit[i].admit(task);
                } else {
                    let mut task = task;
                    task.remaining_work = costs.local_cycles;
                    out.admitted_local[i] += 1;
                    self.local[i].admit(task);
                }
            }
        }
        self.slot += 1;
        Ok(out)
    }
}

/// One Poisson draw of task arrivals for a single service-slot.
pub fn sample_arrivals(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(lambda).expect("lambda checked positive");
    poisson.sample(rng) as u64
}

/// Smallest a with P(Poisson(lambda) <= a) >= 1 - epsilon; the truncation
/// count used inside the drift-bound constants.
#[must_use]
pub fn poisson_upper_quantile(lambda: f64, epsilon: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut term = (-lambda).exp();
    let mut cdf = term;
    let mut k = 0u64;
    while cdf < 1.0 - epsilon && k < 10_000 {
        k += 1;
        term *= lambda / k as f64;
        cdf += term;
    }
    k
}
