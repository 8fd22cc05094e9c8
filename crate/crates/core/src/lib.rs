//! Object-goal navigation in synthetic multi-room scenes: frontier
//! exploration guided by a propagated potential field, plus validation of
//! memory-based goal declarations.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod episode;
pub mod estimator;
pub mod frontier;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod potential_graph;
pub mod remote;
pub mod rng;
pub mod scene;
pub mod sim;
