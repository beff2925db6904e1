//! Distributed dual averaging over fixed undirected networks.
//!
//! The crate simulates the second-order-consensus dual averaging method
//! (N-DDA), in which each agent tracks the network-average gradient with a
//! first-order tracker `s` and tracks `s` again with `h`, so that
//! `Σ_k h_{i,k}` follows the global dual variable closely enough for a
//! constant control parameter. Baselines (centralized dual averaging,
//! classical distributed dual averaging, distributed projected gradient) run
//! on the same instances.
//!
//! Module map:
//! - [`graph`]: topologies, Metropolis–Hastings weights, `β = σ₂(P)`
//! - [`prox`]: prox-functions, Bregman divergences, dual projection
//! - [`problem`]: LASSO instances, gradients, smoothness, reference optimum
//! - [`algorithms`]: synchronous round engines
//! - [`analysis`]: step-size admissibility, bound and inequality checks
//! - [`harness`]: configuration, runs, traces, comparisons

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod graph;
pub mod harness;
mod linalg;
pub mod problem;
pub mod prox;
pub mod rng;

pub use error::{Error, Result};
