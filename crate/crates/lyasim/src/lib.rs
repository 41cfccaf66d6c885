//! Simulator and optimizer for energy-aware multi-task DNN inference
//! offloading between battery-limited devices and an edge server.
//!
//! Each device runs several DNN inference services. A task for service
//! (m, n) is split at a per-service partition layer k: the first k layers
//! run on the device, the intermediate feature map is uplinked, and the
//! remaining layers run on the edge server. Work in flight is tracked by
//! three FIFO task queues per service (local compute, transmission, edge
//! compute), measured in CPU cycles / bits / CPU cycles.
//!
//! Control runs on two timescales:
//!
//! * every slot (tau seconds), a drift-plus-penalty allocator picks local
//!   CPU frequencies, uplink powers/rates and edge CPU frequencies by
//!   solving three small convex programs ([`alloc`]);
//! * every G slots, a PPO agent picks the partition layers from a summary
//!   observation of the last period ([`ppo`]).
//!
//! [`sim`] wires the pieces into episodes and parameter sweeps, and
//! [`checks`] holds the independent oracles (grid searches, KKT
//! certificates, finite-difference gradients) used by tests and the
//! `selfcheck` CLI command.

pub mod alloc;
pub mod channel;
pub mod checks;
pub mod ppo;
pub mod profiles;
pub mod queueing;
pub mod seeds;
pub mod sim;

pub use profiles::{DnnProfile, PartitionCosts};
