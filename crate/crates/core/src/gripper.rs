//! Parallel-jaw gripper kinematics. The gripper frame has its origin at the
//! mount center, fingers hanging along -z and closing along x. The left
//! finger is the design mesh, placed so its innermost point sits at
//! `x = -w/2`; the right finger is its mirror image through `x = 0`.

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::geom::{GeomError, TriMesh, Vec3};

/// Maximum opening of the original gripper (m).
pub const W_MAX: f64 = 0.085;

/// End-effector configuration: mount position, orientation and opening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EePose {
    pub position: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub width: f64,
}

impl EePose {
    pub fn new(position: Vec3, rotation: UnitQuaternion<f64>, width: f64) -> Self {
        Self { position, rotation, width }
    }

    /// Pointing straight down (identity orientation).
    pub fn upright(position: Vec3, width: f64) -> Self {
        Self::new(position, UnitQuaternion::identity(), width)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.rotation.coords.iter().all(|c| c.is_finite())
            && self.width.is_finite()
    }

    /// Quaternion in w-x-y-z order.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Linear blend of position and width with slerp of orientation.
    pub fn interpolate(&self, to: &EePose, t: f64) -> EePose {
        EePose {
            position: self.position + (to.position - self.position) * t,
            rotation: self.rotation.slerp(&to.rotation, t),
            width: self.width + (to.width - self.width) * t,
        }
    }

    /// Closure direction (gripper x axis) in the world.
    pub fn closure_axis(&self) -> Vec3 {
        self.rotation * Vec3::x()
    }

    /// Finger principal axis (gripper -z) in the world.
    pub fn finger_axis(&self) -> Vec3 {
        self.rotation * -Vec3::z()
    }

    pub fn to_gripper(&self, x: &Vec3) -> Vec3 {
        self.rotation.inverse() * (x - self.position)
    }

    pub fn to_world(&self, q: &Vec3) -> Vec3 {
        self.position + self.rotation * q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A gripper with a given finger design.
#[derive(Debug, Clone)]
pub struct Gripper {
    finger: TriMesh,
    inner: f64,
}

impl Gripper {
    pub fn new(finger: TriMesh) -> Result<Self, GeomError> {
        let b = finger.bounds().ok_or(GeomError::EmptyMesh)?;
        Ok(Self { inner: b.max.x, finger })
    }

    pub fn finger(&self) -> &TriMesh {
        &self.finger
    }

    /// Largest finger-frame x coordinate (the inner face).
    pub fn inner_extent(&self) -> f64 {
        self.inner
    }

    /// Finger-frame point to gripper frame.
    pub fn finger_to_gripper(&self, side: Side, p: &Vec3, width: f64) -> Vec3 {
        let x = p.x - width / 2.0 - self.inner;
        match side {
            Side::Left => Vec3::new(x, p.y, p.z),
            Side::Right => Vec3::new(-x, p.y, p.z),
        }
    }

    /// Gripper-frame point to finger frame.
    pub fn gripper_to_finger(&self, side: Side, q: &Vec3, width: f64) -> Vec3 {
        let qx = match side {
            Side::Left => q.x,
            Side::Right => -q.x,
        };
        Vec3::new(qx + width / 2.0 + self.inner, q.y, q.z)
    }

    /// Finger-frame direction (e.g. a normal) to gripper frame.
    pub fn finger_dir_to_gripper(side: Side, n: &Vec3) -> Vec3 {
        match side {
            Side::Left => *n,
            Side::Right => Vec3::new(-n.x, n.y, n.z),
        }
    }

    pub fn finger_to_world(&self, pose: &EePose, side: Side, p: &Vec3) -> Vec3 {
        pose.to_world(&self.finger_to_gripper(side, p, pose.width))
    }

    /// Both fingers' copies of `points` (finger frame) in the world.
    pub fn place(&self, pose: &EePose, points: &[Vec3]) -> [Vec<Vec3>; 2] {
        [Side::Left, Side::Right].map(|s| points.iter().map(|p| self.finger_to_world(pose, s, p)).collect())
    }

    /// Both finger meshes in the world (the right one mirrored).
    pub fn world_meshes(&self, pose: &EePose) -> [TriMesh; 2] {
        let left = self.finger.with_vertices(
            self.finger.vertices().iter().map(|p| self.finger_to_world(pose, Side::Left, p)).collect(),
        );
        let mirrored = self.finger.mirrored_x();
        // mirrored_x flips x, so map its vertices back through the left
        // placement of the un-mirrored point.
        let right = mirrored.with_vertices(
            self.finger.vertices().iter().map(|p| self.finger_to_world(pose, Side::Right, p)).collect(),
        );
        [left, right]
    }
}
