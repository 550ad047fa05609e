use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use super::{ControlError, Task};
use crate::geom::Vec3;
use crate::gripper::{EePose, W_MAX};

/// Maximum end-effector translation per control step (m).
pub const MAX_POSITION_STEP: f64 = 0.01;
/// Maximum width change per control step (m).
pub const MAX_WIDTH_STEP: f64 = 0.005;

/// Primitive phases. Every task visits a subsequence of this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Grip,
    Push,
    Insert,
    Lift,
    Hold,
}

impl Phase {
    pub fn sequence(task: Task) -> &'static [Phase] {
        match task {
            Task::Grasp => &[Phase::Approach, Phase::Grip, Phase::Lift, Phase::Hold],
            Task::Push => &[Phase::Approach, Phase::Push, Phase::Hold],
            Task::Scoop => &[Phase::Approach, Phase::Insert, Phase::Lift, Phase::Hold],
        }
    }
}

/// Per-step command: translation, world-frame axis-angle rotation and width
/// change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub d_position: Vec3,
    pub d_rotation: Vec3,
    pub d_width: f64,
}

impl Action {
    pub fn zero() -> Self {
        Self { d_position: Vec3::zeros(), d_rotation: Vec3::zeros(), d_width: 0.0 }
    }

    /// The action taking `from` to `to`.
    pub fn between(from: &EePose, to: &EePose) -> Self {
        Self {
            d_position: to.position - from.position,
            d_rotation: (to.rotation * from.rotation.inverse()).scaled_axis(),
            d_width: to.width - from.width,
        }
    }

    /// Scales the translation and clamps the width change to the rate limits.
    pub fn rate_limited(mut self) -> Self {
        let n = self.d_position.norm();
        if n > MAX_POSITION_STEP {
            self.d_position *= MAX_POSITION_STEP / n;
            // Guard against rounding just above the limit.
            while self.d_position.norm() > MAX_POSITION_STEP {
                self.d_position *= 1.0 - 1e-12;
            }
        }
        self.d_width = self.d_width.clamp(-MAX_WIDTH_STEP, MAX_WIDTH_STEP);
        self
    }

    pub fn within_limits(&self) -> bool {
        self.d_position.norm() <= MAX_POSITION_STEP && self.d_width.abs() <= MAX_WIDTH_STEP
    }

    pub fn apply(&self, pose: &EePose) -> EePose {
        EePose {
            position: pose.position + self.d_position,
            rotation: UnitQuaternion::from_scaled_axis(self.d_rotation) * pose.rotation,
            width: pose.width + self.d_width,
        }
    }
}

/// Motion primitive parameters. Speeds are in SI units and converted to
/// per-step increments with the control period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub horizon_grasp: usize,
    pub horizon_push: usize,
    pub horizon_scoop: usize,
    /// Control steps simulated without the gripper before the episode.
    pub settle_steps: usize,
    /// Stop once the final hold completes instead of idling to the horizon.
    pub stop_when_done: bool,
    pub approach_speed: f64,
    pub rotation_speed: f64,
    pub width_speed: f64,
    /// Height of the waypoint above the pre-contact pose.
    pub hover_height: f64,
    pub position_tolerance: f64,
    pub angle_tolerance: f64,
    pub close_speed: f64,
    /// Grip stops when the stress rise reaches this fraction of `E * reference_strain`.
    pub stress_trigger_fraction: f64,
    pub reference_strain: f64,
    /// Percentile (top %) of particle stress used by the trigger.
    pub trigger_percentile: f64,
    pub w_min: f64,
    /// Optional grip stop on object centroid displacement (m).
    pub centroid_trigger: Option<f64>,
    pub lift_height: f64,
    pub lift_speed: f64,
    pub lift_accel: f64,
    pub hold_steps: usize,
    /// Proportional push gain (1/s) and speed cap (m/s).
    pub push_gain: f64,
    pub push_max_speed: f64,
    pub push_tolerance: f64,
    pub insertion_depth: f64,
    pub insertion_speed: f64,
    /// Action noise is clipped at this many standard deviations.
    pub noise_clip: f64,
    /// Period of the action noise: one Gaussian offset is drawn per period
    /// and spread evenly over the control steps inside it.
    pub noise_period: f64,
    /// Particle-stress percentiles recorded each step.
    pub stress_percentiles: Vec<f64>,
    /// Finger SDF spacing relative to the simulation cell.
    pub collider_cell_ratio: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            horizon_grasp: 360,
            horizon_push: 300,
            horizon_scoop: 420,
            settle_steps: 25,
            stop_when_done: true,
            approach_speed: 0.5,
            rotation_speed: 8.0,
            width_speed: 0.5,
            hover_height: 0.03,
            position_tolerance: 0.002,
            angle_tolerance: 0.02,
            close_speed: 0.2,
            stress_trigger_fraction: 0.6,
            reference_strain: 0.08,
            trigger_percentile: 50.0,
            w_min: 0.0,
            centroid_trigger: None,
            lift_height: 0.12,
            lift_speed: 0.4,
            lift_accel: 8.0,
            hold_steps: 5,
            push_gain: 25.0,
            push_max_speed: 0.25,
            push_tolerance: 0.005,
            insertion_depth: 0.06,
            insertion_speed: 0.3,
            noise_clip: 4.0,
            noise_period: 0.02,
            stress_percentiles: vec![2.5, 0.0],
            collider_cell_ratio: 0.5,
        }
    }
}

impl PlanConfig {
    pub fn horizon(&self, task: Task) -> usize {
        match task {
            Task::Grasp => self.horizon_grasp,
            Task::Push => self.horizon_push,
            Task::Scoop => self.horizon_scoop,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = [
            ("approach_speed", self.approach_speed),
            ("rotation_speed", self.rotation_speed),
            ("width_speed", self.width_speed),
            ("position_tolerance", self.position_tolerance),
            ("angle_tolerance", self.angle_tolerance),
            ("close_speed", self.close_speed),
            ("lift_speed", self.lift_speed),
            ("lift_accel", self.lift_accel),
            ("push_max_speed", self.push_max_speed),
            ("push_tolerance", self.push_tolerance),
            ("insertion_speed", self.insertion_speed),
            ("collider_cell_ratio", self.collider_cell_ratio),
            ("noise_period", self.noise_period),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::Invalid(format!("plan.{k} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("hover_height", self.hover_height),
            ("stress_trigger_fraction", self.stress_trigger_fraction),
            ("reference_strain", self.reference_strain),
            ("lift_height", self.lift_height),
            ("push_gain", self.push_gain),
            ("insertion_depth", self.insertion_depth),
            ("noise_clip", self.noise_clip),
        ];
        for (k, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ControlError::Invalid(format!("plan.{k} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=W_MAX).contains(&self.w_min) {
            return Err(ControlError::Invalid(format!("plan.w_min must lie in [0, {W_MAX}]")));
        }
        if self.stress_percentiles.is_empty()
            || self.stress_percentiles.iter().chain([&self.trigger_percentile]).any(|s| !(0.0..100.0).contains(s))
        {
            return Err(ControlError::Invalid("stress percentiles must lie in [0, 100)".into()));
        }
        if Task::ALL.iter().any(|&t| self.horizon(t) == 0) {
            return Err(ControlError::Invalid("horizons must be at least 1".into()));
        }
        Ok(())
    }

    /// Control steps per noise period (at least 1).
    pub fn noise_steps(&self, control_dt: f64) -> usize {
        ((self.noise_period / control_dt).round() as usize).max(1)
    }

    /// Grip stress threshold for a material.
    pub fn stress_trigger(&self, young_modulus: f64) -> f64 {
        self.stress_trigger_fraction * young_modulus * self.reference_strain
    }
}

/// What the primitives see each step.
#[derive(Debug, Clone, Copy)]
pub struct Observation {
    pub pose: EePose,
    pub centroid: Vec3,
    /// Particle stress at the trigger percentile.
    pub trigger_stress: f64,
    pub subgoal: Option<Vec3>,
}

/// State machine running a task's primitive sequence.
#[derive(Debug, Clone)]
pub struct PrimitiveController {
    task: Task,
    cfg: PlanConfig,
    dt: f64,
    p_star: EePose,
    scoop_dir: Vec3,
    trigger: f64,
    phase: Phase,
    hover_done: bool,
    entry_pose: EePose,
    entry_centroid: Vec3,
    entry_stress: f64,
    lift_velocity: f64,
    hold_count: usize,
}

impl PrimitiveController {
    pub fn new(task: Task, cfg: PlanConfig, control_dt: f64, p_star: EePose, young_modulus: f64, scoop_dir: Option<Vec3>) -> Self {
        let trigger = cfg.stress_trigger(young_modulus);
        Self {
            task,
            cfg,
            dt: control_dt,
            p_star,
            scoop_dir: scoop_dir.unwrap_or(Vec3::y()),
            trigger,
            phase: Phase::Approach,
            hover_done: false,
            entry_pose: p_star,
            entry_centroid: Vec3::zeros(),
            entry_stress: 0.0,
            lift_velocity: 0.0,
            hold_count: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Grip threshold on the stress rise.
    pub fn trigger(&self) -> f64 {
        self.trigger
    }

    /// The final hold has completed.
    pub fn finished(&self) -> bool {
        self.phase == Phase::Hold && self.hold_count >= self.cfg.hold_steps
    }

    fn enter(&mut self, phase: Phase, obs: &Observation) {
        self.phase = phase;
        self.entry_pose = obs.pose;
        self.entry_centroid = obs.centroid;
        self.entry_stress = obs.trigger_stress;
        self.lift_velocity = 0.0;
    }

    fn after_approach(&self) -> Phase {
        Phase::sequence(self.task)[1]
    }

    /// Updates the phase from the observation and returns the phase of this
    /// step with the desired (not yet rate-limited) pose.
    pub fn next(&mut self, obs: &Observation) -> (Phase, EePose) {
        let c = self.cfg.clone();
        let c = &c;
        let cur = obs.pose;
        // Transitions.
        match self.phase {
            Phase::Approach => {
                let angle = cur.rotation.angle_to(&self.p_star.rotation);
                if (cur.position - self.p_star.position).norm() <= c.position_tolerance
                    && angle <= c.angle_tolerance
                    && (cur.width - self.p_star.width).abs() <= 1e-3
                {
                    self.enter(self.after_approach(), obs);
                }
            }
            Phase::Grip => {
                let rise = obs.trigger_stress - self.entry_stress;
                let moved = c.centroid_trigger.is_some_and(|d| (obs.centroid - self.entry_centroid).norm() >= d);
                if rise >= self.trigger || cur.width <= c.w_min + 1e-12 || moved {
                    self.enter(Phase::Lift, obs);
                }
            }
            Phase::Push => {
                let l = obs.subgoal.map_or(0.0, |g| planar(&(g - obs.centroid)).norm());
                if l <= c.push_tolerance {
                    self.enter(Phase::Hold, obs);
                }
            }
            Phase::Insert => {
                if (cur.position - self.entry_pose.position).dot(&self.scoop_dir) >= c.insertion_depth {
                    self.enter(Phase::Lift, obs);
                }
            }
            Phase::Lift => {
                if cur.position.z - self.entry_pose.position.z >= c.lift_height {
                    self.enter(Phase::Hold, obs);
                }
            }
            Phase::Hold => {}
        }
        let dt = self.dt;
        let desired = match self.phase {
            Phase::Approach => {
                let hover = EePose { position: self.p_star.position + Vec3::z() * c.hover_height, ..self.p_star };
                if !self.hover_done && (cur.position - hover.position).norm() <= c.position_tolerance {
                    self.hover_done = true;
                }
                let target = if self.hover_done { self.p_star } else { hover };
                self.towards(&cur, &target)
            }
            Phase::Grip => EePose { width: (cur.width - c.close_speed * dt).max(c.w_min), ..cur },
            Phase::Push => {
                let (dir, l) = match obs.subgoal {
                    Some(g) => {
                        let e = planar(&(g - obs.centroid));
                        let n = e.norm();
                        (if n > 0.0 { e / n } else { Vec3::zeros() }, n)
                    }
                    None => (Vec3::zeros(), 0.0),
                };
                let v = (c.push_gain * l).min(c.push_max_speed);
                let mut p = cur.position + dir * v * dt;
                p.z = self.entry_pose.position.z;
                EePose { position: p, ..cur }
            }
            Phase::Insert => {
                let mut p = cur.position + self.scoop_dir * c.insertion_speed * dt;
                p.z = self.entry_pose.position.z;
                EePose { position: p, ..cur }
            }
            Phase::Lift => {
                self.lift_velocity = (self.lift_velocity + c.lift_accel * dt).min(c.lift_speed);
                EePose { position: cur.position + Vec3::z() * self.lift_velocity * dt, ..cur }
            }
            Phase::Hold => {
                self.hold_count += 1;
                self.entry_pose
            }
        };
        (self.phase, desired)
    }

    fn towards(&self, cur: &EePose, target: &EePose) -> EePose {
        let c = &self.cfg;
        let d = target.position - cur.position;
        let n = d.norm();
        let step = c.approach_speed * self.dt;
        let position = if n > step { cur.position + d * (step / n) } else { target.position };
        let angle = cur.rotation.angle_to(&target.rotation);
        let rot_step = c.rotation_speed * self.dt;
        let rotation = if angle > rot_step { cur.rotation.slerp(&target.rotation, rot_step / angle) } else { target.rotation };
        let dw = (target.width - cur.width).clamp(-c.width_speed * self.dt, c.width_speed * self.dt);
        EePose { position, rotation, width: (cur.width + dw).clamp(0.0, W_MAX) }
    }
}

fn planar(v: &Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_limit_is_exact() {
        let a = Action { d_position: Vec3::new(0.3, -0.2, 0.1), d_rotation: Vec3::zeros(), d_width: -0.02 }.rate_limited();
        assert!(a.within_limits());
        assert!((a.d_position.norm() - MAX_POSITION_STEP).abs() < 1e-12);
        assert_eq!(a.d_width, -MAX_WIDTH_STEP);
        let small = Action { d_position: Vec3::new(1e-3, 0.0, 0.0), d_rotation: Vec3::zeros(), d_width: 1e-3 };
        assert_eq!(small.rate_limited(), small);
    }

    #[test]
    fn between_then_apply() {
        let a = EePose::upright(Vec3::new(0.0, 0.0, 0.1), 0.05);
        let b = EePose::new(Vec3::new(0.01, 0.0, 0.09), UnitQuaternion::from_euler_angles(0.1, 0.0, 0.2), 0.04);
        let c = Action::between(&a, &b).apply(&a);
        assert!((c.position - b.position).norm() < 1e-15);
        assert!(c.rotation.angle_to(&b.rotation) < 1e-12);
        assert!((c.width - b.width).abs() < 1e-15);
    }

    #[test]
    fn phases_ordered() {
        for t in Task::ALL {
            assert!(Phase::sequence(t).windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn grip_trigger_latency() {
        let p = EePose::upright(Vec3::new(0.0, 0.0, 0.1), 0.05);
        let mut ctl = PrimitiveController::new(Task::Grasp, PlanConfig::default(), 0.002, p, 1e4, None);
        let mut obs = Observation { pose: p, centroid: Vec3::zeros(), trigger_stress: 0.0, subgoal: None };
        assert_eq!(ctl.next(&obs).0, Phase::Grip);
        obs.trigger_stress = ctl.trigger() * 0.5;
        assert_eq!(ctl.next(&obs).0, Phase::Grip);
        obs.trigger_stress = ctl.trigger();
        assert_eq!(ctl.next(&obs).0, Phase::Lift);
    }
}
