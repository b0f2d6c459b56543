use pbnco_autodiff::AutodiffError;

use crate::problems::Action;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("illegal action {0:?}")]
    IllegalAction(Action),
    #[error("solution violates independence on edge ({0}, {1})")]
    Infeasible(usize, usize),
    #[error("no legal action in the current state")]
    NoLegalAction,
    #[error("conditioning set has {got} members, limit is {max}")]
    ConditioningTooLarge { got: usize, max: usize },
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged at episode {episode}: {detail}")]
    Diverged { episode: usize, detail: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
