use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integration diverged at t = {time:.4} s: {reason}")]
    IntegrationDiverged { time: f64, reason: String },

    #[error("goal unreachable: start cell {start}, {goal_cells} goal cell(s), horizon T = {horizon}")]
    GoalUnreachable {
        start: usize,
        goal_cells: usize,
        horizon: usize,
    },

    #[error("optimization diverged: {0}")]
    OptimizationDiverged(String),

    #[error("no demonstrations accepted out of {attempted} start/goal pairs")]
    EmptyDataset { attempted: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
