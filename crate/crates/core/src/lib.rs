//! Cross-layer simulator and distributed policy optimizer for delay-constrained
//! grant-free random access in a multi-antenna uplink.
//!
//! The crate is layered bottom-up:
//!
//! - [`phy`]: large-scale fading, pilot phase, MMSE estimation, MR/ZF combining,
//!   instantaneous SINR and the closed-form rate proxies.
//! - [`traffic`]: Bernoulli arrivals, deadline-driven FIFO queues and the
//!   per-slot success/drop bookkeeping.
//! - [`fairness`]: per-slot priority levels from the log-sum-exp (S1) and
//!   virtual-queue (S2) approximations.
//! - [`objective`]: the differentiable expected sum-priority and its gradient.
//! - [`policy`]: the shared recurrent policy network, replay buffer and trainer.
//! - [`baselines`]: access barring, scheduled pairs and non-orthogonal pilots.
//! - [`sim`]: the slot-level environment, metrics and run orchestration.

pub mod baselines;
pub mod config;
pub mod error;
pub mod fairness;
pub mod objective;
pub mod phy;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
