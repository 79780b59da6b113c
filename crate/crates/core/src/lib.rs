#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Maximum likelihood constraint inference on tabular approximations of continuous
//! dynamics.
//!
//! The pipeline: declare a continuous system ([`dynamics`]), discretize it into a
//! deterministic tabular MDP that records which candidate constraint regions every
//! transition sweeps through ([`gridmdp`]), compute the maximum-entropy trajectory
//! distribution and per-region violation probabilities ([`maxent`]), and rank regions
//! by how well they explain a set of demonstrations ([`inference`]). [`demogen`]
//! synthesizes constrained expert demonstrations with iLQR, and [`experiment`] wires
//! everything into reproducible, config-driven runs.

pub mod config;
pub mod demogen;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod gridmdp;
pub mod inference;
pub mod mask;
pub mod maxent;

pub use error::{Error, Result};
pub use mask::HypMask;
