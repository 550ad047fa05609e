use codesign_core::geom::{Sdf, Vec3};
use codesign_core::gripper::{EePose, Gripper, Side};
use codesign_core::ldm::base_finger;
use codesign_core::posegen::*;
use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(object: Sdf, table: Option<Sdf>) -> SceneSurrogate {
    SceneSurrogate::new(object, table, vec![], Gripper::new(base_finger()).unwrap(), 256, 7).unwrap()
}

/// Scene whose finger is reduced to the single finger-frame point `p`.
fn single_sample(object: Sdf, p: Vec3) -> SceneSurrogate {
    let mut s = scene(object, None);
    s.samples = vec![p];
    s
}

#[test]
fn pen_single_sample_plug_in() {
    let pose = EePose::upright(Vec3::new(0.0, 0.0, 0.1), 0.08);
    let p = Vec3::new(0.005, 0.002, -0.03);
    let g = Gripper::new(base_finger()).unwrap();
    let left = g.finger_to_world(&pose, Side::Left, &p);
    // Left copy 1 cm deep inside a sphere; the right copy is far away.
    let s = single_sample(Sdf::sphere(left, 0.01), p);
    assert!((score_pen(&pose, &s, 0.005) - (-0.015)).abs() < 1e-15);
}

#[test]
fn near_single_sample_plug_in() {
    let pose = EePose::upright(Vec3::new(0.0, 0.0, 0.1), 0.08);
    let p = Vec3::new(0.005, 0.002, -0.03);
    let g = Gripper::new(base_finger()).unwrap();
    let left = g.finger_to_world(&pose, Side::Left, &p);
    let right = g.finger_to_world(&pose, Side::Right, &p);
    // Sphere around the right copy whose surface is 2 cm short of the left.
    let r = (left - right).norm() - 0.02;
    let s = single_sample(Sdf::sphere(right, r), p);
    assert!((score_near(&pose, &s) - (-0.02)).abs() < 1e-14);
}

#[test]
fn far_field_and_monotone_proximity() {
    let s = scene(Sdf::cylinder(Vec3::new(0.0, 0.0, 0.025), 0.02, 0.05), Some(Sdf::floor(0.0)));
    let pose = EePose::upright(Vec3::new(0.0, 0.0, 0.06), 0.05);
    let high = EePose { position: pose.position + Vec3::new(0.0, 0.0, 1.0), ..pose };
    assert_eq!(score_pen(&high, &s, 0.002), 0.0);
    let mut prev = score_near(&pose, &s);
    for k in 1..10 {
        let p = EePose { position: pose.position + Vec3::new(0.0, 0.0, 0.01 * k as f64), ..pose };
        let v = score_near(&p, &s);
        assert!(v < prev, "step {k}: {v} !< {prev}");
        prev = v;
    }
}

#[test]
fn pen_and_near_are_rigidly_equivariant() {
    let object = Sdf::cylinder(Vec3::new(0.01, -0.005, 0.025), 0.02, 0.05);
    let table = Sdf::floor(0.0);
    let pose = EePose::new(
        Vec3::new(0.004, 0.0, 0.05),
        UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3),
        0.035,
    );
    let base = scene(object.clone(), Some(table.clone()));
    let (pen0, near0) = (score_pen(&pose, &base, 0.002), score_near(&pose, &base));
    assert!(pen0 < 0.0 && near0 < 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let t = Isometry3::from_parts(
            Translation3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            UnitQuaternion::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            ),
        );
        let mut s = base.clone();
        s.object = object.clone().with_pose(t * object.pose);
        s.table = Some(table.clone().with_pose(t * table.pose));
        let moved = EePose { position: t.transform_point(&pose.position.into()).coords, rotation: t.rotation * pose.rotation, ..pose };
        assert!((score_pen(&moved, &s, 0.002) - pen0).abs() <= 1e-9);
        assert!((score_near(&moved, &s) - near0).abs() <= 1e-9);
    }
}

#[test]
fn slab_grasp_is_maximal() {
    // Slab 2 cm thick along x, large in y and z; fingers on both faces.
    let s = scene(Sdf::cuboid(Vec3::zeros(), Vec3::new(0.01, 0.2, 0.2)), None);
    let pose = EePose::upright(Vec3::new(0.0, 0.0, 0.03), 0.024);
    let w = PoseWeights { grasp_antipodal: 1.5, grasp_closure: 0.5, ..PoseWeights::default() };
    assert!((score_grasp(&pose, &s, &w) - 2.0).abs() < 1e-12);
    let n = Vec3::new(0.0, 1.0, 0.0);
    assert_eq!(grasp_terms(&n, &n, &Vec3::x()).0, -1.0);
}

#[test]
fn diametral_grasp_beats_chord() {
    let r = 0.02;
    let s = scene(Sdf::cylinder(Vec3::zeros(), r, 0.2), None);
    let w = PoseWeights::default();
    let diametral = EePose::upright(Vec3::new(0.0, 0.0, 0.03), 2.0 * r + 0.002);
    let off = r * std::f64::consts::FRAC_1_SQRT_2;
    let chord = EePose::upright(Vec3::new(0.0, off, 0.03), 2.0 * off + 0.002);
    let (a, b) = (score_grasp(&diametral, &s, &w), score_grasp(&chord, &s, &w));
    assert!(a > b, "diametral {a} vs chord {b}");
}

#[test]
fn push_and_scoop_plug_ins() {
    let w = PoseWeights::default();
    let u = Vec3::new(0.6, 0.8, 0.0);
    assert_eq!(push_terms(&u, &u, 0.02, 0.02, w.push_align, w.push_offset), w.push_align);
    let perp = Vec3::new(-0.8, 0.6, 0.0);
    assert!(push_terms(&perp, &u, 0.02, 0.02, 1.0, 0.0).abs() < 1e-15);
    let at_zero = push_terms(&u, &u, 0.0, 0.02, 0.0, w.push_offset);
    let at_goal = push_terms(&u, &u, 0.02, 0.02, 0.0, w.push_offset);
    assert!((at_goal - at_zero - w.push_offset * 0.02).abs() < 1e-15);
    assert_eq!(scoop_terms(1.0, 0.0, 0.0, &w), w.scoop_align);
    assert_eq!(scoop_terms(0.0, 0.0, 0.0, &w), 0.0);
    let lateral = scoop_terms(0.0, 0.01, 0.0, &w);
    assert!((lateral + 0.01 * w.scoop_lateral).abs() < 1e-15);
    assert_eq!(push_direction(&Vec3::zeros(), &Vec3::new(0.0, 0.05, 0.3)), Vec3::y());
}

#[test]
fn objective_composes_terms() {
    let s = scene(Sdf::cylinder(Vec3::new(0.0, 0.0, 0.025), 0.02, 0.05), Some(Sdf::floor(0.0)));
    let pose = EePose::upright(Vec3::new(0.0, 0.0, 0.07), 0.05);
    let zero = PoseWeights { pen: 0.0, near: 0.0, task: 0.0, ..PoseWeights::default() };
    assert_eq!(pose_objective(&pose, &s, &PoseTask::Grasp, &zero), 0.0);
    let w = PoseWeights { pen: 3.0, near: 0.7, task: 2.0, ..PoseWeights::default() };
    let want = 3.0 * score_pen(&pose, &s, w.slack) + 0.7 * score_near(&pose, &s) + 2.0 * score_grasp(&pose, &s, &w);
    assert!((pose_objective(&pose, &s, &PoseTask::Grasp, &w) - want).abs() < 1e-12);

    let d = PoseWeights::default();
    let clear = EePose::upright(Vec3::new(0.0, 0.0, 0.07), 0.046);
    let deep = EePose::upright(Vec3::new(0.0, 0.0, 0.05), 0.01);
    let (a, b) = (pose_objective(&clear, &s, &PoseTask::Grasp, &d), pose_objective(&deep, &s, &PoseTask::Grasp, &d));
    assert!(a > b, "collision-free {a} vs penetrating {b}");
    assert_eq!(pose_objective(&clear, &s, &PoseTask::Grasp, &d), a);
}

fn sphere_search() -> (SceneSurrogate, PoseSearchSpace) {
    let s = scene(Sdf::sphere(Vec3::new(0.0, 0.0, 0.03), 0.02), None);
    let space = PoseSearchSpace::around(EePose::upright(Vec3::new(0.0, 0.0, 0.06), 0.05), 0.04).unwrap();
    (s, space)
}

#[test]
fn optimizer_is_deterministic_and_diverse() {
    let (s, space) = sphere_search();
    let w = PoseWeights::default();
    let cfg = PoseOptConfig { generations: 12, candidates: 2, ..PoseOptConfig::default() };
    let a = optimize_pose(&s, &PoseTask::Grasp, &space, &w, &cfg, 5).unwrap();
    let b = optimize_pose(&s, &PoseTask::Grasp, &space, &w, &cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
    assert!(pose_distance(&a[0].pose, &a[1].pose) > 0.0);
    assert!(a[0].score >= a[1].score);
    for c in &a {
        assert_eq!(pose_objective(&c.pose, &s, &PoseTask::Grasp, &w), c.score);
    }
    let one = optimize_pose(&s, &PoseTask::Grasp, &space, &w, &PoseOptConfig { candidates: 1, ..cfg }, 5).unwrap();
    assert_eq!(one[0], a[0]);
}
