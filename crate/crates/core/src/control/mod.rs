//! Task contexts, motion primitives and episode rollouts.

mod context;
mod plan;
mod rollout;

pub use context::*;
pub use plan::*;
pub use rollout::*;

use crate::softsim::SimError;

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("invalid control input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}
