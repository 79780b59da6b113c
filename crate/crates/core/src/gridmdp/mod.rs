//! Tabular approximation of continuous dynamics.

pub mod cache;
mod grid;
mod hypotheses;
mod mdp;

pub use grid::{ActionSet, CellIndex, GridDim, GridSpec};
pub use hypotheses::{DimExtent, HypothesisSet, Region};
pub use mdp::{build_mdp, TabularMdp, INVALID};
