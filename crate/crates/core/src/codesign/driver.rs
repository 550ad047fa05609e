use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate_score, stress_metrics, task_metrics, CodesignError, DesignScore, EnvComponents, ScoreWeights, TaskThresholds};
use crate::cmaes::CmaState;
use crate::control::{
    execute_plan_from, sample_context, settle, ContextRanges, ControlError, PlanConfig, RolloutRecord, Task, TaskContext,
};
use crate::geom::TriMesh;
use crate::gripper::{EePose, Gripper};
use crate::ldm::{LatentModel, LdmSpace};
use crate::posegen::{optimize_pose, PoseCandidate, PoseError, PoseOptConfig, PoseWeights};
use crate::seed::{derive, tag};
use crate::softsim::{GripperCollider, SimConfig};

/// Settings of one co-design or baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodesignConfig {
    pub task: Task,
    /// Environments per design (E).
    pub envs: usize,
    /// Outer generations (B_d).
    pub generations: usize,
    /// Outer population; CMA-ES default when unset.
    pub population: Option<usize>,
    /// Pre-contact candidates rolled out per environment (I).
    pub candidates: usize,
    pub sigma0: f64,
    pub latent_box: f64,
    pub floor_penalty: f64,
    /// Roll the winning candidate out a second time instead of reusing its
    /// rollout.
    pub rerun_winner: bool,
    /// Finger surface samples used by the rigid surrogate.
    pub surface_samples: usize,
    /// Task default weights when unset.
    pub weights: Option<ScoreWeights>,
    pub thresholds: TaskThresholds,
    pub contexts: ContextRanges,
    pub plan: PlanConfig,
    pub sim: SimConfig,
    /// Inner pose search; `generations` is the inner budget B_p.
    pub pose: PoseOptConfig,
    pub pose_weights: PoseWeights,
    /// Held-out contexts used by [`evaluate_heldout`].
    pub heldout_contexts: usize,
    pub seed: u64,
}

impl Default for CodesignConfig {
    fn default() -> Self {
        Self {
            task: Task::Grasp,
            envs: 4,
            generations: 20,
            population: None,
            candidates: 3,
            sigma0: 1.0,
            latent_box: crate::ldm::LATENT_BOX,
            floor_penalty: -500.0,
            rerun_winner: false,
            surface_samples: 256,
            weights: None,
            thresholds: TaskThresholds::default(),
            contexts: ContextRanges::default(),
            plan: PlanConfig::default(),
            sim: SimConfig { floor_mode: crate::softsim::FloorMode::Separate, ..SimConfig::default() },
            pose: PoseOptConfig::default(),
            pose_weights: PoseWeights::default(),
            heldout_contexts: 20,
            seed: 0,
        }
    }
}

impl CodesignConfig {
    pub fn weights(&self) -> ScoreWeights {
        self.weights.unwrap_or_else(|| ScoreWeights::for_task(self.task))
    }

    pub fn validate(&self) -> Result<(), CodesignError> {
        if self.envs == 0 || self.generations == 0 || self.candidates == 0 || self.pose.generations == 0 {
            return Err(CodesignError::Invalid("envs, generations, candidates and pose.generations must be ≥ 1".into()));
        }
        if self.population.is_some_and(|p| p < 2) {
            return Err(CodesignError::Invalid("population must be at least 2".into()));
        }
        if !(self.sigma0 > 0.0 && self.latent_box > 0.0) {
            return Err(CodesignError::Invalid("sigma0 and latent_box must be positive".into()));
        }
        if !self.floor_penalty.is_finite() {
            return Err(CodesignError::Invalid("floor_penalty must be finite".into()));
        }
        self.weights().validate()?;
        self.contexts.validate()?;
        self.plan.validate()?;
        self.sim.validate().map_err(ControlError::from)?;
        Ok(())
    }
}

/// Seed of one environment evaluation.
pub fn env_seed(seed: u64, generation: u64, candidate: u64, env: u64) -> u64 {
    derive(seed, &[tag("env"), generation, candidate, env])
}

/// Result of evaluating one design in one environment.
#[derive(Debug, Clone)]
pub struct EnvOutcome {
    pub context: TaskContext,
    pub components: EnvComponents,
    /// Winning pre-contact pose and its rollout, when the environment could
    /// be evaluated.
    pub pose: Option<EePose>,
    pub record: Option<RolloutRecord>,
}

/// Scores one rollout.
pub fn score_record(record: &RolloutRecord, task: Task, th: &TaskThresholds, w: &ScoreWeights) -> EnvComponents {
    let (q_prog, q_succ) = task_metrics(record, task, th);
    let s = stress_metrics(record, &[2.5, 0.0]);
    EnvComponents::new(
        q_prog,
        q_succ,
        s.mean,
        s.max_at(2.5).unwrap_or(0.0),
        s.max_at(0.0).unwrap_or(0.0),
        w,
    )
}

fn is_numerical(e: &ControlError) -> bool {
    matches!(e, ControlError::Sim(s) if s.is_blowup())
}

/// Samples the context of one environment and searches pre-contact poses.
/// The inner result is `Err(reason)` when the environment cannot be
/// evaluated and scores the floor.
pub fn propose_poses(
    gripper: &Gripper,
    cfg: &CodesignConfig,
    seed: u64,
) -> Result<(TaskContext, Result<Vec<PoseCandidate>, String>), CodesignError> {
    let ctx = sample_context(cfg.task, &cfg.contexts, derive(seed, &[tag("context")]))?;
    let scene = match ctx.surrogate(gripper, cfg.surface_samples, derive(seed, &[tag("samples")])) {
        Ok(s) => s,
        Err(e) => return Ok((ctx, Err(e.to_string()))),
    };
    let space = match ctx.search_space(gripper) {
        Ok(s) => s,
        Err(e) => return Ok((ctx, Err(e.to_string()))),
    };
    let pose_cfg = PoseOptConfig { candidates: cfg.candidates, ..cfg.pose.clone() };
    match optimize_pose(&scene, &ctx.pose_task(), &space, &cfg.pose_weights, &pose_cfg, derive(seed, &[tag("pose")])) {
        Ok(c) => Ok((ctx, Ok(c))),
        Err(PoseError::SearchFailure) => Ok((ctx, Err("pose search failed".into()))),
        Err(e) => Err(CodesignError::Invalid(e.to_string())),
    }
}

/// Pose search plus soft-body rollouts of the candidates in one sampled
/// context; the best rollout is kept.
pub fn evaluate_env(gripper: &Gripper, cfg: &CodesignConfig, seed: u64) -> Result<EnvOutcome, CodesignError> {
    let w = cfg.weights();
    let floored = |ctx: TaskContext, why: String| {
        log::warn!("environment floored ({why})");
        Ok(EnvOutcome { context: ctx, components: EnvComponents::floored(cfg.floor_penalty), pose: None, record: None })
    };
    let (ctx, cands) = propose_poses(gripper, cfg, seed)?;
    let cands = match cands {
        Ok(c) => c,
        Err(why) => return floored(ctx, why),
    };
    let settled = match settle(&ctx, &cfg.sim, &cfg.plan) {
        Ok(s) => s,
        Err(e) if is_numerical(&e) => return floored(ctx, e.to_string()),
        Err(e) => return Err(e.into()),
    };
    let collider = GripperCollider::new(gripper.clone(), cfg.sim.cell * cfg.plan.collider_cell_ratio, ctx.ee_initial)
        .map_err(ControlError::from)?;
    let mut best: Option<(EnvComponents, EePose, RolloutRecord)> = None;
    for c in &cands {
        let record = execute_plan_from(&collider, &ctx, &c.pose, &cfg.sim, &cfg.plan, &settled)?;
        let comp = score_record(&record, cfg.task, &cfg.thresholds, &w);
        if best.as_ref().is_none_or(|(b, _, _)| comp.j_e > b.j_e) {
            best = Some((comp, c.pose, record));
        }
    }
    let (mut comp, pose, mut record) = best.expect("at least one candidate");
    if cfg.rerun_winner {
        record = execute_plan_from(&collider, &ctx, &pose, &cfg.sim, &cfg.plan, &settled)?;
        comp = score_record(&record, cfg.task, &cfg.thresholds, &w);
    }
    Ok(EnvOutcome { context: ctx, components: comp, pose: Some(pose), record: Some(record) })
}

/// Evaluates designs (meshes; `None` scores the floor everywhere) over
/// `envs` environments each. Environment `(i, e)` uses seed
/// `seed_of(i, e)`. All jobs run in parallel and are reduced in order.
pub fn evaluate_designs(
    designs: &[Option<TriMesh>],
    cfg: &CodesignConfig,
    envs: usize,
    seed_of: impl Fn(usize, usize) -> u64 + Sync,
) -> Result<Vec<(DesignScore, Vec<EnvOutcome>)>, CodesignError> {
    let w = cfg.weights();
    let grippers: Vec<Option<Gripper>> = designs
        .iter()
        .map(|d| d.as_ref().and_then(|m| Gripper::new(m.clone()).map_err(|e| log::warn!("invalid design: {e}")).ok()))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..designs.len()).flat_map(|i| (0..envs).map(move |e| (i, e))).collect();
    let outcomes: Vec<Result<Option<EnvOutcome>, CodesignError>> = jobs
        .par_iter()
        .map(|&(i, e)| match &grippers[i] {
            Some(g) => evaluate_env(g, cfg, seed_of(i, e)).map(Some),
            None => Ok(None),
        })
        .collect();
    let mut it = outcomes.into_iter();
    let mut out = Vec::with_capacity(designs.len());
    for _ in 0..designs.len() {
        let mut comps = Vec::with_capacity(envs);
        let mut outs = Vec::with_capacity(envs);
        for _ in 0..envs {
            match it.next().expect("one outcome per job")? {
                Some(o) => {
                    comps.push(o.components.clone());
                    outs.push(o);
                }
                None => comps.push(EnvComponents::floored(cfg.floor_penalty)),
            }
        }
        out.push((aggregate_score(comps, &w)?, outs));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub design: Vec<f64>,
    pub score: DesignScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub candidates: Vec<CandidateReport>,
    pub mean_j: f64,
    pub best_j: f64,
    pub best_design: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesignReport {
    pub version: String,
    /// `latent`, `cubic` or `spherical`.
    pub design_space: String,
    pub task: Task,
    pub seed: u64,
    pub config: serde_json::Value,
    pub generations: Vec<GenerationReport>,
    pub best_design: Vec<f64>,
    pub best_score: DesignScore,
}

impl CodesignReport {
    pub fn best_j(&self) -> f64 {
        self.best_score.j
    }

    pub fn to_json(&self) -> Result<String, CodesignError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn build_report(
    space_name: &str,
    cfg: &CodesignConfig,
    echo: serde_json::Value,
    generations: Vec<GenerationReport>,
) -> Result<CodesignReport, CodesignError> {
    let mut best: Option<&CandidateReport> = None;
    for g in &generations {
        for c in &g.candidates {
            if best.is_none_or(|b| c.score.j > b.score.j) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or_else(|| CodesignError::Invalid("no designs were evaluated".into()))?.clone();
    Ok(CodesignReport {
        version: VERSION.to_string(),
        design_space: space_name.to_string(),
        task: cfg.task,
        seed: cfg.seed,
        config: echo,
        generations,
        best_design: best.design,
        best_score: best.score,
    })
}

/// Decodes a latent design to a finger mesh.
pub fn decode_design(latent: &LatentModel, space: &LdmSpace, z: &[f64]) -> Result<TriMesh, CodesignError> {
    let raw = latent.decode(z)?;
    Ok(space.deform_mesh(&raw)?)
}

/// Bi-level co-design: outer CMA-ES over latent designs, inner pose search
/// and soft-body rollouts per environment. `echo` is stored verbatim in the
/// report; `progress` is called after every generation.
pub fn codesign_run(
    cfg: &CodesignConfig,
    latent: &LatentModel,
    space: &LdmSpace,
    echo: serde_json::Value,
    mut progress: impl FnMut(&GenerationReport),
) -> Result<CodesignReport, CodesignError> {
    cfg.validate()?;
    let dim = latent.latent_dim();
    let bounds = vec![(-cfg.latent_box, cfg.latent_box); dim];
    let mut cma = CmaState::with_population(&vec![0.0; dim], cfg.sigma0, Some(bounds), derive(cfg.seed, &[tag("outer")]), cfg.population)?;
    let mut generations = Vec::with_capacity(cfg.generations);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for g in 0..cfg.generations {
        let zs = cma.ask();
        let meshes: Vec<Option<TriMesh>> = zs
            .iter()
            .map(|z| decode_design(latent, space, z).map_err(|e| log::warn!("design decode failed: {e}")).ok())
            .collect();
        let scores = evaluate_designs(&meshes, cfg, cfg.envs, |i, e| env_seed(cfg.seed, g as u64, i as u64, e as u64))?;
        let fitness: Vec<f64> = scores.iter().map(|(s, _)| s.j).collect();
        cma.tell(&zs, &fitness)?;
        let candidates: Vec<CandidateReport> =
            zs.iter().zip(scores).map(|(z, (score, _))| CandidateReport { design: z.clone(), score }).collect();
        for c in &candidates {
            if best.as_ref().is_none_or(|(j, _)| c.score.j > *j) {
                best = Some((c.score.j, c.design.clone()));
            }
        }
        let (best_j, best_design) = best.clone().expect("non-empty generation");
        let report = GenerationReport {
            generation: g,
            mean_j: fitness.iter().sum::<f64>() / fitness.len() as f64,
            candidates,
            best_j,
            best_design,
        };
        progress(&report);
        generations.push(report);
    }
    build_report("latent", cfg, echo, generations)
}

/// Grid evaluation of primitive designs, reported with the co-design
/// schema as a single generation. All designs see the same contexts.
pub fn baseline_sweep(
    cfg: &CodesignConfig,
    kind: crate::ldm::PrimitiveKind,
    params: &[f64],
    echo: serde_json::Value,
) -> Result<CodesignReport, CodesignError> {
    cfg.validate()?;
    let meshes = params
        .iter()
        .map(|&p| crate::ldm::primitive_design(kind, p).map(Some))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = evaluate_designs(&meshes, cfg, cfg.envs, |_, e| env_seed(cfg.seed, 0, 0, e as u64))?;
    let candidates: Vec<CandidateReport> =
        params.iter().zip(scores).map(|(&p, (score, _))| CandidateReport { design: vec![p], score }).collect();
    let mut best: Option<&CandidateReport> = None;
    for c in &candidates {
        if best.is_none_or(|b| c.score.j > b.score.j) {
            best = Some(c);
        }
    }
    let best = best.ok_or_else(|| CodesignError::Invalid("empty parameter sweep".into()))?;
    let gen = GenerationReport {
        generation: 0,
        mean_j: candidates.iter().map(|c| c.score.j).sum::<f64>() / candidates.len() as f64,
        best_j: best.score.j,
        best_design: best.design.clone(),
        candidates,
    };
    let name = match kind {
        crate::ldm::PrimitiveKind::Cubic => "cubic",
        crate::ldm::PrimitiveKind::Spherical => "spherical",
    };
    build_report(name, cfg, echo, vec![gen])
}

/// Held-out evaluation of one design on `cfg.heldout_contexts` contexts
/// that depend only on `seed`.
pub fn evaluate_heldout(mesh: &TriMesh, cfg: &CodesignConfig, seed: u64) -> Result<(DesignScore, Vec<EnvOutcome>), CodesignError> {
    cfg.validate()?;
    let mut r = evaluate_designs(&[Some(mesh.clone())], cfg, cfg.heldout_contexts.max(1), |_, e| {
        derive(seed, &[tag("heldout"), e as u64])
    })?;
    Ok(r.remove(0))
}

/// Mean top-2.5% stress over successful environments, if any succeeded.
pub fn mean_success_stress(score: &DesignScore) -> Option<f64> {
    let s: Vec<f64> = score.envs.iter().filter(|c| c.success()).map(|c| c.max_stress_25).collect();
    (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
}
