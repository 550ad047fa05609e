//! Latent diffeomorphic design space: RBF velocity fields, flow
//! integration, Chamfer fitting, augmentation, PCA latent model and
//! primitive baselines.

mod augment;
mod field;
mod fit;
mod flow;
mod latent;
mod model;
mod shapes;
mod space;

pub use augment::{augment_dataset, refit_transformed, AugmentConfig};
pub use field::{FreezeMask, RbfField};
pub use fit::{fit_deformation, fit_deformation_with, FitConfig, FitResult};
pub use flow::{chamfer_value, chamfer_value_and_gradient, integrate_flow, integrate_points};
pub use latent::{build_latent, DesignVector, LatentModel, LATENT_BOX};
pub use model::{DesignModel, RawParamsDoc};
pub use shapes::{base_finger, primitive_design, procedural_target, PrimitiveKind, TargetKind};
pub use space::{
    deform_mesh, softplus, softplus_inv, LdmSpace, DEFAULT_STEPS, SIGMA_DEFAULT, SIGMA_MIN,
};

use crate::geom::GeomError;

#[derive(Debug, thiserror::Error)]
pub enum LdmError {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("flow diverged at point {index}")]
    FlowDivergence { index: usize },
    #[error("fit failed: {0}")]
    FitFailure(String),
    #[error("requested latent dimension {requested} exceeds data rank {rank}")]
    RankDeficient { rank: usize, requested: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter out of bounds: {0}")]
    Bounds(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
