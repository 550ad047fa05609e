//! Pre-contact configuration synthesis on rigid SDF surrogates.

mod scene;
mod search;
mod terms;

pub use scene::{PoseSearchSpace, PoseTask, SceneSurrogate};
pub use search::{optimize_pose, pose_distance, PoseCandidate, PoseOptConfig};
pub use terms::{
    grasp_terms, pose_objective, push_direction, push_terms, scoop_terms, score_grasp, score_near, score_pen, score_push,
    score_scoop, PoseWeights,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PoseError {
    #[error("pose search failed: every candidate was invalid")]
    SearchFailure,
    #[error("invalid pose search setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cma(#[from] crate::cmaes::CmaError),
}
