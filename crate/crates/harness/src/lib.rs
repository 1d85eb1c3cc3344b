//! Experiment harness: configuration, price data, seeded sweeps and export.
//!
//! The `fbcert` binary wraps [`sweep::run_sweep`] and [`sweep::certify`];
//! everything it does is reachable from this library for tests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod seeds;
pub mod stats;
pub mod sweep;

pub use error::{HarnessError, Result};
