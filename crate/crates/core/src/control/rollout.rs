use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Action, ControlError, Observation, Phase, PlanConfig, PrimitiveController, Task, TaskContext};
use crate::geom::Vec3;
use crate::gripper::{EePose, Gripper};
use crate::seed::{derive, tag};
use crate::softsim::{seed_particles, GripperCollider, ParticleState, SimConfig, SimError, Simulator};
use crate::stats::{mean, percentile_top};

/// Signals recorded at the end of one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based control step.
    pub k: usize,
    pub phase: Phase,
    pub pose: EePose,
    pub action: Action,
    pub centroid: Vec3,
    /// Planar distance from the object centroid to the push subgoal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoal_distance: Option<f64>,
    pub mean_stress: f64,
    /// Particle-stress percentile per configured `s`.
    pub max_stress: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Completed,
    Blowup { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub task: Task,
    pub stress_percentiles: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub particles: usize,
    pub clamp_events: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    summary: SummaryBody<'a>,
}

#[derive(Serialize)]
struct SummaryBody<'a> {
    task: Task,
    steps: usize,
    stress_percentiles: &'a [f64],
    termination: &'a Termination,
    particles: usize,
    clamp_events: usize,
}

impl RolloutRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self.termination, Termination::Blowup { .. })
    }

    pub fn z(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.centroid.z).collect()
    }

    /// One JSON object per step followed by a summary line.
    pub fn to_jsonl(&self) -> Result<String, ControlError> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Summary {
            summary: SummaryBody {
                task: self.task,
                steps: self.steps.len(),
                stress_percentiles: &self.stress_percentiles,
                termination: &self.termination,
                particles: self.particles,
                clamp_events: self.clamp_events,
            },
        })?);
        out.push('\n');
        Ok(out)
    }
}

/// Per-step stress summary: mean and top-`s` percentiles over particles.
pub fn step_stress(stress: &[f64], percentiles: &[f64]) -> (f64, Vec<f64>) {
    let m = mean(stress);
    let max = percentiles.iter().map(|&s| percentile_top(stress, s).unwrap_or(0.0)).collect();
    (m, max)
}

fn simulator(ctx: &TaskContext, sim: &SimConfig, particles: ParticleState) -> Result<Simulator, SimError> {
    let mut s = Simulator::new(particles, ctx.material, sim.clone())?;
    if let Some(f) = &ctx.fixture {
        s.add_obstacle(f.sdf());
    }
    Ok(s)
}

/// Seeds the context's object and lets it settle under gravity. Settling
/// uses kinetic damping: velocities are zeroed whenever the kinetic energy
/// passes a peak, which removes the drop oscillation without touching the
/// elastic state.
pub fn settle(ctx: &TaskContext, sim: &SimConfig, plan: &PlanConfig) -> Result<ParticleState, ControlError> {
    let particles = seed_particles(&ctx.object, sim, &ctx.material, derive(ctx.seed, &[tag("particles")]))?;
    let mut s = simulator(ctx, sim, particles)?;
    let mut last = 0.0;
    for _ in 0..plan.settle_steps * sim.substeps {
        s.step()?;
        let p = s.particles();
        let ke: f64 = p.v.iter().zip(&p.mass).map(|(v, m)| 0.5 * m * v.norm_squared()).sum();
        if ke < last {
            let p = s.particles_mut();
            p.v.iter_mut().for_each(|v| *v = Vec3::zeros());
            p.c.iter_mut().for_each(|c| *c = nalgebra::Matrix3::zeros());
            last = 0.0;
        } else {
            last = ke;
        }
    }
    let p = s.particles_mut();
    p.v.iter_mut().for_each(|v| *v = Vec3::zeros());
    p.c.iter_mut().for_each(|c| *c = nalgebra::Matrix3::zeros());
    Ok(s.particles().clone())
}

/// Settles the object and runs the task's primitives from `p_star`.
pub fn execute_plan(
    gripper: &Gripper,
    ctx: &TaskContext,
    p_star: &EePose,
    sim: &SimConfig,
    plan: &PlanConfig,
) -> Result<RolloutRecord, ControlError> {
    plan.validate()?;
    let settled = settle(ctx, sim, plan)?;
    let collider = GripperCollider::new(gripper.clone(), sim.cell * plan.collider_cell_ratio, ctx.ee_initial)?;
    execute_plan_from(&collider, ctx, p_star, sim, plan, &settled)
}

/// Runs the primitives from an already settled particle state with a
/// prebuilt finger collider.
pub fn execute_plan_from(
    collider: &GripperCollider,
    ctx: &TaskContext,
    p_star: &EePose,
    sim: &SimConfig,
    plan: &PlanConfig,
    settled: &ParticleState,
) -> Result<RolloutRecord, ControlError> {
    if !p_star.is_finite() {
        return Err(ControlError::Invalid("p_star is not finite".into()));
    }
    let percentiles = plan.stress_percentiles.clone();
    let mut simulator = simulator(ctx, sim, settled.clone())?;
    let mut collider = collider.clone();
    collider.state = crate::softsim::GripperState::at_rest(ctx.ee_initial);
    simulator.set_gripper(Some(collider));

    let mut ctl = PrimitiveController::new(
        ctx.task,
        plan.clone(),
        sim.control_dt(),
        *p_star,
        ctx.material.young_modulus,
        ctx.scoop_direction(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive(ctx.seed, &[tag("action-noise")]));
    let sigma = ctx.action_noise.max(0.0);
    let noise = Normal::new(0.0, sigma).map_err(|e| ControlError::Invalid(e.to_string()))?;
    let clip = plan.noise_clip * sigma;
    let per = plan.noise_steps(sim.control_dt());
    // Noise knots, linearly interpolated over each noise period.
    let (mut knot_prev, mut knot_next) = (Vec3::zeros(), Vec3::zeros());

    // The controller plans on the nominal pose; the gripper executes the
    // nominal pose plus a smooth noise offset.
    let mut nominal = ctx.ee_initial;
    let mut pose = ctx.ee_initial;
    let mut stress = simulator.stress();
    let mut centroid = simulator.centroid();
    let horizon = plan.horizon(ctx.task);
    let mut steps: Vec<StepRecord> = Vec::with_capacity(horizon);
    let mut termination = Termination::Horizon;
    let subgoal_distance =
        |c: &Vec3| ctx.subgoal.map(|g| ((g.x - c.x).powi(2) + (g.y - c.y).powi(2)).sqrt());

    for k in 1..=horizon {
        let obs = Observation {
            pose: nominal,
            centroid,
            trigger_stress: percentile_top(&stress, plan.trigger_percentile).unwrap_or(0.0),
            subgoal: ctx.subgoal,
        };
        let (phase, desired) = ctl.next(&obs);
        let action = Action::between(&nominal, &desired).rate_limited();
        let planned = action.apply(&nominal);
        let mut next = planned;
        if sigma > 0.0 {
            let j = (k - 1) % per;
            if j == 0 {
                knot_prev = knot_next;
                knot_next = Vec3::from_fn(|_, _| noise.sample(&mut rng).clamp(-clip, clip));
            }
            next.position += knot_prev + (knot_next - knot_prev) * ((j + 1) as f64 / per as f64);
        }
        match simulator.advance(Some(next)) {
            Ok(_) => {}
            Err(e) if e.is_blowup() => {
                log::warn!("rollout truncated at step {k}: {e}");
                if steps.is_empty() {
                    // Keep the record scoreable with the last valid state.
                    let (m, mx) = step_stress(&stress, &percentiles);
                    steps.push(StepRecord {
                        k,
                        phase,
                        pose,
                        action: Action::zero(),
                        centroid,
                        subgoal_distance: subgoal_distance(&centroid),
                        mean_stress: m,
                        max_stress: mx,
                    });
                }
                termination = Termination::Blowup { step: k, message: e.to_string() };
                break;
            }
            Err(e) => return Err(e.into()),
        }
        nominal = planned;
        pose = next;
        stress = simulator.stress();
        centroid = simulator.centroid();
        let (m, mx) = step_stress(&stress, &percentiles);
        steps.push(StepRecord {
            k,
            phase,
            pose,
            action,
            centroid,
            subgoal_distance: subgoal_distance(&centroid),
            mean_stress: m,
            max_stress: mx,
        });
        if plan.stop_when_done && ctl.finished() {
            termination = Termination::Completed;
            break;
        }
    }
    Ok(RolloutRecord {
        task: ctx.task,
        stress_percentiles: percentiles,
        steps,
        termination,
        particles: settled.len(),
        clamp_events: simulator.clamp_events(),
    })
}
