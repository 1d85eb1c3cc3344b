//! Data-driven forward–backward splitting with finite-sample certificates.
//!
//! The crate runs forward–backward iterations in which the single-valued
//! operator is replaced by a sample average over a fixed dataset, and turns the
//! algorithmic stability of those iterations into a bound `ε` such that the
//! output is an `ε`-zero of `A + B` (or an `ε`-Nash equilibrium for games) with
//! probability at least `1 − δ`.
//!
//! Trial-level parallelism goes through [`exec::Execution`]; with the
//! `parallel` feature disabled every mode runs sequentially.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod error;
pub mod exec;
pub mod games;
pub mod numeric;
pub mod operators;
pub mod splitting;

pub use error::{Error, Result};
pub use exec::Execution;
