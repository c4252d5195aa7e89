//! Simulation and verification engine for distributed best-band frequency
//! allocation among clusters that interfere through path loss.
//!
//! - [`topology`]: cluster placements and the distance / gain matrices.
//! - [`interference`]: per-band, per-cluster and aggregate interference,
//!   with an incrementally maintained cache.
//! - [`allocation`]: the asynchronous best-band update rule, schedulers and
//!   convergence.
//! - [`oracle`]: exhaustive optimum, reference assignments, zeta asymptotics
//!   and bound checks.
//! - [`dynamics`]: Markov on/off activity, relaxation fitting and the
//!   steady-state variance prediction.
//! - [`metrics`]: Shannon capacity and dB gaps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod dynamics;
pub mod error;
pub mod interference;
pub mod metrics;
pub mod oracle;
pub mod topology;

pub use error::{Error, Result};
