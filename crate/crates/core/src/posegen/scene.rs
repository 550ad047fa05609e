use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::geom::{surface_sample, Sdf, Vec3};
use crate::gripper::{EePose, Gripper, Side, W_MAX};

/// Task-specific data for the pose objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum PoseTask {
    Grasp,
    Push {
        subgoal: Vec3,
        /// Desired gap between the pusher and the object's rear surface.
        offset: f64,
    },
    Scoop {
        /// Horizontal scooping direction.
        direction: Vec3,
        /// Desired fingertip height above the table.
        tip_height: f64,
    },
}

/// Rigid stand-in of a scene for pose scoring.
#[derive(Debug, Clone)]
pub struct SceneSurrogate {
    pub object: Sdf,
    pub table: Option<Sdf>,
    pub fixtures: Vec<Sdf>,
    pub gripper: Gripper,
    /// Finger-frame surface samples of the finger design.
    pub samples: Vec<Vec3>,
    /// Whether support surfaces also count towards proximity.
    pub near_support: bool,
}

impl SceneSurrogate {
    pub fn new(object: Sdf, table: Option<Sdf>, fixtures: Vec<Sdf>, gripper: Gripper, samples: usize, seed: u64) -> Result<Self, PoseError> {
        let samples = surface_sample(gripper.finger(), samples.max(1), seed)
            .map_err(|e| PoseError::Invalid(e.to_string()))?
            .points;
        Ok(Self { object, table, fixtures, gripper, samples, near_support: false })
    }

    /// Table height, if there is a table.
    pub fn table_height(&self) -> Option<f64> {
        self.table.as_ref().map(|t| t.pose.translation.vector.z)
    }

    pub fn placed(&self, pose: &EePose) -> [Vec<Vec3>; 2] {
        self.gripper.place(pose, &self.samples)
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &Sdf> {
        std::iter::once(&self.object).chain(self.table.iter()).chain(self.fixtures.iter())
    }

    pub fn supports(&self) -> impl Iterator<Item = &Sdf> {
        self.table.iter().chain(self.fixtures.iter())
    }

    /// Object centroid (the pose of its SDF).
    pub fn object_center(&self) -> Vec3 {
        self.object.pose.translation.vector
    }

    pub fn finger_samples(&self, pose: &EePose, side: Side) -> Vec<Vec3> {
        self.samples.iter().map(|p| self.gripper.finger_to_world(pose, side, p)).collect()
    }
}

/// Box around a nominal pose, searched in normalized coordinates `[-1, 1]^7`:
/// three position offsets, three axis-angle offsets, one width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSearchSpace {
    pub nominal: EePose,
    pub position_box: f64,
    pub angle_box: f64,
    pub width_range: (f64, f64),
}

impl PoseSearchSpace {
    pub const DIM: usize = 7;

    pub fn new(nominal: EePose, position_box: f64, angle_box: f64, width_range: (f64, f64)) -> Result<Self, PoseError> {
        let (lo, hi) = width_range;
        if !(position_box >= 0.0 && angle_box >= 0.0 && 0.0 <= lo && lo <= hi && hi <= W_MAX + 1e-12) {
            return Err(PoseError::Invalid(format!(
                "empty or invalid search box: position {position_box}, angle {angle_box}, width {width_range:?}"
            )));
        }
        Ok(Self { nominal, position_box, angle_box, width_range })
    }

    /// Default box: +-6 cm, +-0.5 rad, width from 0.2 of the object width
    /// up to the gripper limit.
    pub fn around(nominal: EePose, object_width: f64) -> Result<Self, PoseError> {
        Self::new(nominal, 0.06, 0.5, ((0.2 * object_width).min(W_MAX), W_MAX))
    }

    pub fn decode(&self, u: &[f64]) -> EePose {
        let c = |i: usize| u.get(i).copied().unwrap_or(0.0).clamp(-1.0, 1.0);
        let dp = Vec3::new(c(0), c(1), c(2)) * self.position_box;
        let aa = Vec3::new(c(3), c(4), c(5)) * self.angle_box;
        let (lo, hi) = self.width_range;
        EePose {
            position: self.nominal.position + dp,
            rotation: self.nominal.rotation * UnitQuaternion::from_scaled_axis(aa),
            width: lo + (c(6) + 1.0) / 2.0 * (hi - lo),
        }
    }
}
