use codesign_core::codesign::{propose_poses, CodesignConfig};
use codesign_core::control::*;
use codesign_core::gripper::{EePose, Gripper};
use codesign_core::ldm::{primitive_design, PrimitiveKind};
use codesign_core::posegen::PoseOptConfig;
use codesign_core::softsim::{FloorMode, SimConfig};

fn cheap(task: Task) -> CodesignConfig {
    CodesignConfig {
        task,
        candidates: 1,
        pose: PoseOptConfig { generations: 6, ..PoseOptConfig::default() },
        sim: SimConfig { resolution: [24; 3], cell: 0.008, floor_mode: FloorMode::Separate, ..SimConfig::default() },
        plan: PlanConfig { horizon_grasp: 120, horizon_push: 120, horizon_scoop: 120, ..PlanConfig::default() },
        ..CodesignConfig::default()
    }
}

fn setup(task: Task, seed: u64) -> (Gripper, TaskContext, EePose, CodesignConfig) {
    let cfg = cheap(task);
    let g = Gripper::new(primitive_design(PrimitiveKind::Cubic, 0.03).unwrap()).unwrap();
    let (ctx, poses) = propose_poses(&g, &cfg, seed).unwrap();
    let p_star = poses.expect("pose search succeeds")[0].pose;
    (g, ctx, p_star, cfg)
}

#[test]
fn rollouts_follow_the_primitive_sequence() {
    for task in Task::ALL {
        let (g, ctx, p_star, cfg) = setup(task, 21);
        let r = execute_plan(&g, &ctx, &p_star, &cfg.sim, &cfg.plan).unwrap();
        assert!(!r.is_empty() && r.len() <= cfg.plan.horizon(task));
        let order = Phase::sequence(task);
        let rank = |p: Phase| order.iter().position(|&q| q == p).expect("phase belongs to the task");
        assert_eq!(r.steps[0].phase, Phase::Approach, "{task:?} starts rigidly");
        for (i, w) in r.steps.windows(2).enumerate() {
            assert!(rank(w[0].phase) <= rank(w[1].phase), "{task:?}: phase went back at step {}", i + 2);
            assert_eq!(w[1].k, w[0].k + 1);
        }
        for s in &r.steps {
            assert!(s.action.within_limits(), "{task:?} step {} exceeds the rate limits", s.k);
            assert_eq!(s.max_stress.len(), r.stress_percentiles.len());
        }
        assert_eq!(r.steps.iter().any(|s| s.subgoal_distance.is_some()), task == Task::Push);
        assert_eq!(r, execute_plan(&g, &ctx, &p_star, &cfg.sim, &cfg.plan).unwrap(), "{task:?} not deterministic");
    }
}

#[test]
fn jsonl_has_one_line_per_step_and_a_summary() {
    let (g, ctx, p_star, cfg) = setup(Task::Grasp, 4);
    let r = execute_plan(&g, &ctx, &p_star, &cfg.sim, &cfg.plan).unwrap();
    let text = r.to_jsonl().unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), r.len() + 1);
    assert_eq!(lines[0]["k"], 1);
    let q = lines[0]["pose"]["rotation"].as_array().unwrap();
    assert_eq!(q.len(), 4);
    assert_eq!(lines.last().unwrap()["summary"]["steps"], r.len());
}

#[test]
fn single_step_horizon_and_noise_free_execution() {
    let (g, mut ctx, p_star, mut cfg) = setup(Task::Grasp, 9);
    cfg.plan.horizon_grasp = 1;
    let r = execute_plan(&g, &ctx, &p_star, &cfg.sim, &cfg.plan).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r.termination, Termination::Horizon);

    // Without action noise the executed pose is the chain of actions.
    cfg.plan.horizon_grasp = 40;
    ctx.action_noise = 0.0;
    let r = execute_plan(&g, &ctx, &p_star, &cfg.sim, &cfg.plan).unwrap();
    let mut pose = ctx.ee_initial;
    for s in &r.steps {
        pose = s.action.apply(&pose);
        assert_eq!(pose, s.pose);
    }
}

#[test]
fn non_finite_target_pose_is_rejected() {
    let (g, ctx, mut p_star, cfg) = setup(Task::Push, 2);
    p_star.position.x = f64::NAN;
    assert!(matches!(execute_plan(&g, &ctx, &p_star, &cfg.sim, &cfg.plan), Err(ControlError::Invalid(_))));
}
