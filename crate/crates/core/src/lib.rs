//! Optimal-transport metrics on network graphs and a seeded cyber-defence
//! game simulator used to build and score theory-of-mind datasets.
//!
//! The crate is split along the data flow:
//!
//! * [`graph`]: topologies, shortest paths and node features.
//! * [`transport`]: exact Network Transport Distance and feature weighting.
//! * [`sinkhorn`]: entropic surrogate of the transport distance with gradients.
//! * [`env`]: the hot-desking game (state, actions, rewards, rollouts).
//! * [`agents`]: rule-based Blue and Red policies plus Dirichlet species.
//! * [`dataset`]: sample construction, ground-truth successor representations, splits.
//! * [`eval`]: tournaments and prediction scoring.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod graph;
pub mod seeds;
pub mod sinkhorn;
pub mod transport;

pub use error::{Error, Result};
