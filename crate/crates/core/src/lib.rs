//! Federated learning over packet-erasure uplinks.
//!
//! The crate is split along the data path of one communication round:
//!
//! - [`channel`]: erasure probabilities for short packets (normal
//!   approximation) and long packets (Rayleigh outage), plus fading and
//!   erasure sampling.
//! - [`learning`]: device-side regression model and local gradient descent.
//! - [`aggregation`]: the central node's aggregation state machine
//!   (error-free, no-memory, per-user cache, m-deep global cache).
//! - [`analysis`]: participation-count distribution, outcome pmf and the
//!   Le Cam Poisson-approximation check.
//! - [`simulation`]: datasets, the round loop with symbol-time accounting,
//!   Monte Carlo replication and parameter sweeps.

pub mod aggregation;
pub mod analysis;
pub mod channel;
mod error;
pub mod learning;
pub mod simulation;

pub use error::{Error, Result};
