use serde::{Deserialize, Serialize};

use crate::geom::{mesh_to_sdf_grid, Aabb, Sdf, Vec3};
use crate::gripper::{EePose, Gripper, Side};

use super::SimError;

/// Signed distance field of one finger in its own frame.
#[derive(Debug, Clone)]
pub struct FingerCollider {
    pub sdf: Sdf,
    /// Finger-frame region outside of which the finger is never touched.
    pub bounds: Aabb,
}

impl FingerCollider {
    /// Grid SDF of the finger mesh with roughly `cell` spacing.
    pub fn from_gripper(gripper: &Gripper, cell: f64) -> Result<Self, SimError> {
        let mesh = gripper.finger();
        let b = mesh.bounds().ok_or(crate::geom::GeomError::EmptyMesh)?;
        let pad = 3.0 * cell;
        let ext = b.extent();
        let res = [0, 1, 2].map(|a| (((ext[a] + 2.0 * pad) / cell).ceil() as usize + 1).max(8));
        let grid = mesh_to_sdf_grid(mesh, res, pad)?;
        Ok(Self { sdf: Sdf::grid(grid), bounds: b.expanded(pad * 0.5) })
    }
}

/// Kinematic state of the gripper over one control interval: it moves from
/// `from` to `to` at constant rate during `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub from: EePose,
    pub to: EePose,
    pub duration: f64,
}

impl GripperState {
    pub fn at_rest(pose: EePose) -> Self {
        Self { from: pose, to: pose, duration: 1.0 }
    }

    pub fn pose_at(&self, t: f64) -> EePose {
        self.from.interpolate(&self.to, t.clamp(0.0, 1.0))
    }

    pub fn linear_velocity(&self) -> Vec3 {
        (self.to.position - self.from.position) / self.duration
    }

    pub fn angular_velocity(&self) -> Vec3 {
        (self.to.rotation * self.from.rotation.inverse()).scaled_axis() / self.duration
    }

    pub fn width_rate(&self) -> f64 {
        (self.to.width - self.from.width) / self.duration
    }
}

/// Two mirrored fingers moving rigidly with the gripper.
#[derive(Debug, Clone)]
pub struct GripperCollider {
    pub gripper: Gripper,
    pub finger: FingerCollider,
    pub state: GripperState,
}

impl GripperCollider {
    pub fn new(gripper: Gripper, cell: f64, pose: EePose) -> Result<Self, SimError> {
        let finger = FingerCollider::from_gripper(&gripper, cell)?;
        Ok(Self { gripper, finger, state: GripperState::at_rest(pose) })
    }

    pub fn pose(&self) -> EePose {
        self.state.to
    }

    /// Signed distance from `x` (world) to the nearer finger at time `t` of
    /// the current interval.
    pub fn distance(&self, x: &Vec3, t: f64) -> f64 {
        let pose = self.state.pose_at(t);
        let q = pose.to_gripper(x);
        [Side::Left, Side::Right]
            .iter()
            .map(|&s| self.finger.sdf.eval(&self.gripper.gripper_to_finger(s, &q, pose.width)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Projects a grid velocity at world point `x`: within `margin` of a
    /// finger the relative normal velocity may only separate, and the
    /// tangential part is reduced by Coulomb friction.
    pub fn project(&self, x: &Vec3, mut v: Vec3, t: f64, friction: f64, margin: f64) -> Vec3 {
        let pose = self.state.pose_at(t);
        let q = pose.to_gripper(x);
        let omega = self.state.angular_velocity();
        let lin = self.state.linear_velocity();
        let wdot = self.state.width_rate();
        for side in [Side::Left, Side::Right] {
            let p = self.gripper.gripper_to_finger(side, &q, pose.width);
            if !self.finger.bounds.contains(&p) {
                continue;
            }
            if self.finger.sdf.eval(&p) > margin {
                continue;
            }
            let Ok(nl) = self.finger.sdf.gradient(&p) else {
                continue;
            };
            let n = pose.rotation * Gripper::finger_dir_to_gripper(side, &nl);
            let open = match side {
                Side::Left => -0.5 * wdot,
                Side::Right => 0.5 * wdot,
            };
            let vc = lin + omega.cross(&(x - pose.position)) + pose.rotation * Vec3::new(open, 0.0, 0.0);
            let rel = v - vc;
            let vn = rel.dot(&n);
            if vn >= 0.0 {
                continue;
            }
            let mut vt = rel - n * vn;
            let tn = vt.norm();
            if tn <= -friction * vn {
                vt = Vec3::zeros();
            } else {
                vt *= 1.0 + friction * vn / tn;
            }
            v = vc + vt;
        }
        v
    }
}
