//! Shared-memory graph query engine that picks the degree of intra-query
//! parallelism per iteration from a latency cost model, and falls back to
//! sequential execution when concurrent queries leave too few workers.

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod contention;
pub mod cost;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod harness;
pub mod scheduler;

pub use error::{Error, Result};
