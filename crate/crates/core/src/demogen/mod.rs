//! Synthetic expert demonstrations on the continuous system.

mod generate;
mod ilqr;
pub mod io;

pub(crate) use generate::sample_point;
pub use generate::{best_of_restarts, generate_demos, DemoGenConfig, DemoSet, RejectReason, Rejection};
pub use ilqr::{ilqr_solve, CostWeights, DemoProblem, IlqrResult};
