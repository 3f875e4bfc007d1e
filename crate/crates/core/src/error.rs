use alloc::string::String;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid action {action} for player {player}: only {available} actions")]
    InvalidAction {
        player: usize,
        action: usize,
        available: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{welfare} welfare needs non-negative gains over the disagreement point, got ({gain1}, {gain2})")]
    NegativeGain {
        welfare: &'static str,
        gain1: f64,
        gain2: f64,
    },
    #[error("Kalai-Smorodinsky ratio undefined: player 2 value equals its disagreement value")]
    UndefinedRatio,
    #[error("degenerate bargaining problem: {0}")]
    Degenerate(String),
    #[error("state space of {states} states exceeds the planning bound {limit}")]
    StateBoundExceeded { states: usize, limit: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("environment mismatch: {0}")]
    EnvironmentMismatch(String),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error("{0}")]
    PremiseFailed(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
