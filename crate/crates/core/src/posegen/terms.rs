use serde::{Deserialize, Serialize};

use super::scene::{PoseTask, SceneSurrogate};
use crate::geom::{Sdf, Vec3};
use crate::gripper::{EePose, Side};

/// Weights of the pose objective and its task terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseWeights {
    pub pen: f64,
    pub near: f64,
    pub task: f64,
    /// Penetration slack (m).
    pub slack: f64,
    /// Contact patch size per finger for normal estimation.
    pub patch: usize,
    pub grasp_antipodal: f64,
    pub grasp_closure: f64,
    pub push_align: f64,
    pub push_offset: f64,
    pub scoop_align: f64,
    pub scoop_lateral: f64,
    pub scoop_height: f64,
}

impl Default for PoseWeights {
    fn default() -> Self {
        Self {
            pen: 50.0,
            near: 5.0,
            task: 1.0,
            slack: 0.002,
            patch: 32,
            grasp_antipodal: 1.0,
            grasp_closure: 1.0,
            push_align: 1.0,
            push_offset: 10.0,
            scoop_align: 1.0,
            scoop_lateral: 10.0,
            scoop_height: 10.0,
        }
    }
}

/// `-sum max(0, delta - phi)` over all finger samples and scene SDFs.
pub fn score_pen(pose: &EePose, scene: &SceneSurrogate, slack: f64) -> f64 {
    let mut s = 0.0;
    for side in scene.placed(pose) {
        for p in &side {
            for sdf in scene.obstacles() {
                s -= (slack - sdf.eval(p)).max(0.0);
            }
        }
    }
    s
}

/// `-sum max(phi, 0)` over all finger samples, with `phi` the distance to
/// the object (or to the nearest support surface too, when enabled).
pub fn score_near(pose: &EePose, scene: &SceneSurrogate) -> f64 {
    let mut s = 0.0;
    for side in scene.placed(pose) {
        for p in &side {
            let mut phi = scene.object.eval(p);
            if scene.near_support {
                phi = scene.supports().map(|sdf| sdf.eval(p)).fold(phi, f64::min);
            }
            s -= phi.max(0.0);
        }
    }
    s
}

/// Mean outward object normal over the `k` samples of one finger nearest
/// the object. `None` if every gradient is degenerate.
fn patch_normal(object: &Sdf, samples: &[Vec3], k: usize) -> Option<Vec3> {
    let mut d: Vec<(f64, usize)> = samples.iter().enumerate().map(|(i, p)| (object.eval(p), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut n = Vec3::zeros();
    let mut used = 0;
    for &(_, i) in d.iter().take(k.max(1)) {
        if let Ok(g) = object.gradient(&samples[i]) {
            n += g;
            used += 1;
        }
    }
    let len = n.norm();
    (used > 0 && len > 1e-12).then(|| n / len)
}

/// `(antipodal, closure)` of a grasp given the two patch normals and the
/// closure axis: `-n_l . n_r` and the mean over fingers of `|n_f . c|`.
pub fn grasp_terms(n_left: &Vec3, n_right: &Vec3, closure: &Vec3) -> (f64, f64) {
    (-n_left.dot(n_right), 0.5 * (n_left.dot(closure).abs() + n_right.dot(closure).abs()))
}

/// Antipodality plus closure alignment; `-inf` when no contact normal can
/// be estimated.
pub fn score_grasp(pose: &EePose, scene: &SceneSurrogate, w: &PoseWeights) -> f64 {
    let nl = patch_normal(&scene.object, &scene.finger_samples(pose, Side::Left), w.patch);
    let nr = patch_normal(&scene.object, &scene.finger_samples(pose, Side::Right), w.patch);
    match (nl, nr) {
        (Some(a), Some(b)) => {
            let (anti, clo) = grasp_terms(&a, &b, &pose.closure_axis());
            w.grasp_antipodal * anti + w.grasp_closure * clo
        }
        _ => f64::NEG_INFINITY,
    }
}

/// `w1 (n . u) - w2 |offset - desired|`.
pub fn push_terms(normal: &Vec3, dir: &Vec3, offset: f64, desired: f64, w1: f64, w2: f64) -> f64 {
    w1 * normal.dot(dir) - w2 * (offset - desired).abs()
}

/// Distance from `center` to the surface of `sdf` along `dir` (bisection).
fn surface_distance(sdf: &Sdf, center: &Vec3, dir: &Vec3) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.01);
    while sdf.eval(&(center + dir * hi)) <= 0.0 && hi < 10.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sdf.eval(&(center + dir * mid)) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Horizontal unit direction from the object to the subgoal.
pub fn push_direction(object_center: &Vec3, subgoal: &Vec3) -> Vec3 {
    let mut u = subgoal - object_center;
    u.z = 0.0;
    let n = u.norm();
    if n > 1e-12 {
        u / n
    } else {
        Vec3::x()
    }
}

/// Pushing: the gripper closure axis (the pushing face normal) should point
/// along the object-to-subgoal direction, with the leading finger point
/// `offset` behind the object's rear surface.
pub fn score_push(pose: &EePose, scene: &SceneSurrogate, subgoal: &Vec3, offset: f64, w: &PoseWeights) -> f64 {
    let c = scene.object_center();
    let u = push_direction(&c, subgoal);
    let rear = c - u * surface_distance(&scene.object, &c, &-u);
    let front = scene.placed(pose).iter().flatten().map(|p| p.dot(&u)).fold(f64::NEG_INFINITY, f64::max);
    let gap = rear.dot(&u) - front;
    push_terms(&pose.closure_axis(), &u, gap, offset, w.push_align, w.push_offset)
}

/// `w_a |a . s| - w_l lateral - w_h |height error|`.
pub fn scoop_terms(alignment: f64, lateral: f64, height_error: f64, w: &PoseWeights) -> f64 {
    w.scoop_align * alignment.abs() - w.scoop_lateral * lateral.abs() - w.scoop_height * height_error.abs()
}

/// Scooping: finger axis along the scooping direction, fingertips centered
/// on the object laterally and at the insertion height above the table.
pub fn score_scoop(pose: &EePose, scene: &SceneSurrogate, direction: &Vec3, tip_height: f64, w: &PoseWeights) -> f64 {
    let s = direction.normalize();
    let a = pose.finger_axis();
    let tips: Vec<Vec3> = scene
        .placed(pose)
        .iter()
        .map(|side| {
            side.iter()
                .copied()
                .max_by(|p, q| p.dot(&a).total_cmp(&q.dot(&a)))
                .unwrap_or(pose.position)
        })
        .collect();
    let tip = (tips[0] + tips[1]) * 0.5;
    let side_dir = Vec3::z().cross(&s);
    let lateral = (tip - scene.object_center()).dot(&side_dir);
    let table = scene.table_height().unwrap_or(0.0);
    scoop_terms(a.dot(&s), lateral, tip.z - (table + tip_height), w)
}

/// Weighted sum of penetration, proximity and task terms. Terms with zero
/// weight are not evaluated.
pub fn pose_objective(pose: &EePose, scene: &SceneSurrogate, task: &PoseTask, w: &PoseWeights) -> f64 {
    let mut j = 0.0;
    if w.pen != 0.0 {
        j += w.pen * score_pen(pose, scene, w.slack);
    }
    if w.near != 0.0 {
        j += w.near * score_near(pose, scene);
    }
    if w.task != 0.0 {
        let t = match task {
            PoseTask::Grasp => score_grasp(pose, scene, w),
            PoseTask::Push { subgoal, offset } => score_push(pose, scene, subgoal, *offset, w),
            PoseTask::Scoop { direction, tip_height } => score_scoop(pose, scene, direction, *tip_height, w),
        };
        if t == f64::NEG_INFINITY {
            return t;
        }
        j += w.task * t;
    }
    j
}
