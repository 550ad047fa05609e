use std::fmt;
use std::str::FromStr;

use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::geom::{Sdf, SdfShape, Vec3};
use crate::gripper::{EePose, Gripper, W_MAX};
use crate::posegen::{PoseError, PoseSearchSpace, PoseTask, SceneSurrogate};
use crate::seed::{derive, tag};
use crate::softsim::{Material, ObjectKind, ObjectSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Grasp,
    Push,
    Scoop,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Grasp, Task::Push, Task::Scoop];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Grasp => "grasp",
            Task::Push => "push",
            Task::Scoop => "scoop",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = ControlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grasp" => Ok(Task::Grasp),
            "push" => Ok(Task::Push),
            "scoop" => Ok(Task::Scoop),
            other => Err(ControlError::Invalid(format!("unknown task `{other}` (grasp, push, scoop)"))),
        }
    }
}

/// Randomization ranges for [`sample_context`]. Ranges are `(lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextRanges {
    pub young_modulus: (f64, f64),
    pub poisson: (f64, f64),
    pub friction: (f64, f64),
    pub density: f64,
    pub size_scale: (f64, f64),
    /// Planar object position jitter (m, each axis).
    pub position_jitter: f64,
    /// Object yaw jitter (degrees).
    pub yaw_jitter_deg: f64,
    /// Initial end-effector position jitter (m, each axis).
    pub ee_jitter: f64,
    /// Initial end-effector height above the object top.
    pub ee_clearance: f64,
    pub action_noise: f64,
    /// Distance from the object to the push subgoal.
    pub push_distance: (f64, f64),
    /// Overrides the task's default object.
    pub object: Option<ObjectKind>,
    pub table_height: f64,
}

impl Default for ContextRanges {
    fn default() -> Self {
        Self {
            young_modulus: (5e3, 5e4),
            poisson: (0.30, 0.45),
            friction: (0.4, 0.4),
            density: 1000.0,
            size_scale: (0.9, 1.1),
            position_jitter: 0.01,
            yaw_jitter_deg: 10.0,
            ee_jitter: 0.01,
            ee_clearance: 0.04,
            action_noise: 5e-4,
            push_distance: (0.04, 0.06),
            object: None,
            table_height: 0.0,
        }
    }
}

impl ContextRanges {
    pub fn validate(&self) -> Result<(), ControlError> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(ControlError::Invalid(format!("range `{name}` = ({lo}, {hi}) is not ordered")))
            }
        };
        ordered("young_modulus", self.young_modulus)?;
        ordered("poisson", self.poisson)?;
        ordered("friction", self.friction)?;
        ordered("size_scale", self.size_scale)?;
        ordered("push_distance", self.push_distance)?;
        let checks = [
            ("young_modulus", self.young_modulus.0 > 0.0),
            ("poisson", self.poisson.0 >= 0.0 && self.poisson.1 < 0.5),
            ("friction", self.friction.0 >= 0.0),
            ("density", self.density > 0.0),
            ("size_scale", self.size_scale.0 > 0.0),
            ("position_jitter", self.position_jitter >= 0.0),
            ("yaw_jitter_deg", self.yaw_jitter_deg >= 0.0),
            ("ee_jitter", self.ee_jitter >= 0.0),
            ("ee_clearance", self.ee_clearance >= 0.0),
            ("action_noise", self.action_noise >= 0.0),
            ("push_distance", self.push_distance.0 > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(ControlError::Invalid(format!("range `{name}` out of its valid domain")));
            }
        }
        if let Some(o) = &self.object {
            o.validate()?;
        }
        Ok(())
    }

    /// Default object for each task.
    pub fn object_for(&self, task: Task) -> ObjectKind {
        self.object.unwrap_or(match task {
            Task::Grasp => ObjectKind::Cylinder { radius: 0.02, height: 0.05 },
            Task::Push => ObjectKind::Cube { side: 0.04 },
            Task::Scoop => ObjectKind::FilletBox { length: 0.04, width: 0.05, thickness: 0.012 },
        })
    }
}

/// Static box the object is scooped against, opposing motion along
/// `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub yaw: f64,
    /// Horizontal scooping direction.
    pub direction: Vec3,
}

impl FixtureSpec {
    pub fn sdf(&self) -> Sdf {
        Sdf::new(
            SdfShape::Box { half_extents: self.half_extents },
            Isometry3::from_parts(
                Translation3::from(self.center),
                UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.yaw),
            ),
        )
    }
}

/// One randomized episode configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub task: Task,
    pub object: ObjectSpec,
    pub material: Material,
    pub ee_initial: EePose,
    /// Standard deviation of the per-step position noise (m).
    pub action_noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoal: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureSpec>,
    pub table_height: f64,
    pub seed: u64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn symmetric(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    uniform(rng, (-a, a))
}

/// Samples a task context; deterministic per `seed`.
pub fn sample_context(task: Task, ranges: &ContextRanges, seed: u64) -> Result<TaskContext, ControlError> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag("context"), tag(task.name())]));
    let material = Material::new(
        uniform(&mut rng, ranges.young_modulus),
        uniform(&mut rng, ranges.poisson),
        ranges.density,
        uniform(&mut rng, ranges.friction),
    )?;
    let scale = uniform(&mut rng, ranges.size_scale);
    let shape = ranges.object_for(task).scaled(scale);
    let ox = symmetric(&mut rng, ranges.position_jitter);
    let oy = symmetric(&mut rng, ranges.position_jitter);
    let yaw = symmetric(&mut rng, ranges.yaw_jitter_deg).to_radians();
    let object = ObjectSpec::on_table(shape, ox, oy, yaw, ranges.table_height);
    let top = object.bounds().1.z;
    let ee = Vec3::new(
        ox + symmetric(&mut rng, ranges.ee_jitter),
        oy + symmetric(&mut rng, ranges.ee_jitter),
        top + ranges.ee_clearance + 0.06 + symmetric(&mut rng, ranges.ee_jitter),
    );
    let ee_initial = EePose::upright(ee, W_MAX);
    // Planar direction for push subgoals and scooping, near +y.
    let heading = std::f64::consts::FRAC_PI_2 + symmetric(&mut rng, ranges.yaw_jitter_deg).to_radians();
    let dir = Vec3::new(heading.cos(), heading.sin(), 0.0);
    let (subgoal, fixture) = match task {
        Task::Grasp => (None, None),
        Task::Push => (Some(object.center + dir * uniform(&mut rng, ranges.push_distance)), None),
        Task::Scoop => {
            let reach = support_extent(&object, &dir);
            let half = Vec3::new(0.04, 0.005, 0.02);
            let center = object.center + dir * (reach + 0.002 + half.y);
            let center = Vec3::new(center.x, center.y, ranges.table_height + half.z);
            let fyaw = heading - std::f64::consts::FRAC_PI_2;
            (None, Some(FixtureSpec { center, half_extents: half, yaw: fyaw, direction: dir }))
        }
    };
    Ok(TaskContext {
        task,
        object,
        material,
        ee_initial,
        action_noise: ranges.action_noise,
        subgoal,
        fixture,
        table_height: ranges.table_height,
        seed,
    })
}

/// Half-extent of the object's bounding box along horizontal `dir`.
fn support_extent(object: &ObjectSpec, dir: &Vec3) -> f64 {
    let h = object.shape.half_extents();
    let local = object.pose().rotation.inverse() * dir;
    h.x * local.x.abs() + h.y * local.y.abs()
}

/// Orientation whose finger axis points along `d` with the closure axis
/// horizontal.
fn pointing(d: &Vec3) -> UnitQuaternion<f64> {
    let f = d.normalize();
    let mut x = f.cross(&Vec3::z());
    if x.norm() < 1e-9 {
        x = Vec3::x();
    }
    let x = x.normalize();
    let z = -f;
    let y = z.cross(&x);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_basis_unchecked(&[x, y, z]))
}

/// Pusher gap kept in front of the object's rear surface.
pub const PUSH_OFFSET: f64 = 0.005;
/// Desired fingertip clearance above the table when scooping.
pub const SCOOP_TIP_HEIGHT: f64 = 0.003;
/// Downward tilt of the fingers when scooping (rad).
pub const SCOOP_TILT: f64 = 0.25;

impl TaskContext {
    pub fn object_width(&self) -> f64 {
        let (lo, hi) = self.object.bounds();
        (hi.x - lo.x).max(hi.y - lo.y)
    }

    pub fn scoop_direction(&self) -> Option<Vec3> {
        self.fixture.map(|f| f.direction)
    }

    pub fn pose_task(&self) -> PoseTask {
        match self.task {
            Task::Grasp => PoseTask::Grasp,
            Task::Push => PoseTask::Push {
                subgoal: self.subgoal.unwrap_or(self.object.center),
                offset: PUSH_OFFSET,
            },
            Task::Scoop => PoseTask::Scoop {
                direction: self.scoop_direction().unwrap_or(Vec3::y()),
                tip_height: self.table_height + SCOOP_TIP_HEIGHT,
            },
        }
    }

    /// Rigid surrogate of the scene for pose scoring.
    pub fn surrogate(&self, gripper: &Gripper, samples: usize, seed: u64) -> Result<SceneSurrogate, PoseError> {
        let mut s = SceneSurrogate::new(
            self.object.sdf(),
            Some(Sdf::floor(self.table_height)),
            self.fixture.iter().map(|f| f.sdf()).collect(),
            gripper.clone(),
            samples,
            seed,
        )?;
        s.near_support = self.task == Task::Scoop;
        Ok(s)
    }

    /// Task-specific nominal pre-contact pose, the center of the pose search.
    pub fn nominal_pose(&self, gripper: &Gripper) -> EePose {
        let fb = gripper.finger().bounds();
        let (len, thick, depth) = fb.map_or((0.06, 0.01, 0.01), |b| (-b.min.z, b.max.x - b.min.x, b.max.y));
        let c = self.object.center;
        let tip = self.table_height + 0.005;
        match self.task {
            Task::Grasp => EePose::upright(
                Vec3::new(c.x, c.y, tip + len),
                (self.object_width() + 0.02).min(W_MAX),
            ),
            Task::Push => {
                let goal = self.subgoal.unwrap_or(c + Vec3::y());
                let u = crate::posegen::push_direction(&c, &goal);
                let back = support_extent(&self.object, &u) + PUSH_OFFSET + depth;
                let p = c - u * back;
                // Closure axis perpendicular to the push so both fingers
                // form the pushing face.
                let yaw = u.y.atan2(u.x) - std::f64::consts::FRAC_PI_2;
                EePose::new(
                    Vec3::new(p.x, p.y, tip + len),
                    UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
                    0.2 * self.object_width(),
                )
            }
            Task::Scoop => {
                let s = self.scoop_direction().unwrap_or(Vec3::y());
                let d = s * SCOOP_TILT.cos() - Vec3::z() * SCOOP_TILT.sin();
                let tip_point = c - s * (support_extent(&self.object, &s) + 0.01);
                let tip_point = Vec3::new(tip_point.x, tip_point.y, self.table_height + SCOOP_TIP_HEIGHT + 0.5 * thick);
                EePose::new(tip_point - d * len, pointing(&d), 0.25 * self.object_width())
            }
        }
    }

    pub fn search_space(&self, gripper: &Gripper) -> Result<PoseSearchSpace, PoseError> {
        PoseSearchSpace::around(self.nominal_pose(gripper), self.object_width())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_schema() {
        let r = ContextRanges::default();
        for task in Task::ALL {
            let a = sample_context(task, &r, 11).unwrap();
            assert_eq!(a, sample_context(task, &r, 11).unwrap());
            assert_ne!(a, sample_context(task, &r, 12).unwrap());
            assert_eq!(a.subgoal.is_some(), task == Task::Push);
            assert_eq!(a.fixture.is_some(), task == Task::Scoop);
        }
    }

    #[test]
    fn material_coverage() {
        let r = ContextRanges::default();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..10_000 {
            let c = sample_context(Task::Grasp, &r, s).unwrap();
            let e = c.material.young_modulus;
            assert!((5e3..=5e4).contains(&e));
            assert!((0.30..=0.45).contains(&c.material.poisson));
            lo = lo.min(e);
            hi = hi.max(e);
        }
        assert!(lo <= 5e3 * 1.01 && hi >= 5e4 * 0.99, "{lo} {hi}");
    }

    #[test]
    fn pointing_frame() {
        let d = Vec3::new(0.0, 1.0, -0.3).normalize();
        let q = pointing(&d);
        let p = EePose::new(Vec3::zeros(), q, 0.0);
        assert!((p.finger_axis() - d).norm() < 1e-12);
        assert!(p.closure_axis().z.abs() < 1e-12);
    }

    #[test]
    fn bad_ranges_rejected() {
        let r = ContextRanges { young_modulus: (5e4, 5e3), ..Default::default() };
        assert!(sample_context(Task::Grasp, &r, 0).is_err());
    }
}
