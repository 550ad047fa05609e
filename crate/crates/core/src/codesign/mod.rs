//! Design scoring and the bi-level co-design driver.

mod driver;
mod metrics;
mod score;

pub use driver::*;
pub use metrics::*;
pub use score::*;
pub use crate::stats::{percentile_top, EmptySet};

use crate::cmaes::CmaError;
use crate::control::ControlError;
use crate::ldm::LdmError;

#[derive(Debug, thiserror::Error)]
pub enum CodesignError {
    #[error("invalid co-design input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ldm(#[from] LdmError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}
