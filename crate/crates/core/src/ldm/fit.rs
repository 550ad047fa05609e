use serde::{Deserialize, Serialize};

use super::flow::chamfer_value_and_gradient;
use super::space::LdmSpace;
use super::LdmError;
use crate::geom::{surface_sample, PointCloud, TriMesh, Vec3};

const MAX_REJECTIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub learning_rate: f64,
    /// Surface samples drawn on the base mesh (the target is subsampled to
    /// the same count when larger).
    pub samples: usize,
    pub budget: usize,
    /// Iterations without improvement before stopping.
    pub patience: usize,
    /// Fraction of the budget during which early stopping is disabled.
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            samples: 4096,
            budget: 4000,
            patience: 320,
            warmup_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub initial_chamfer: f64,
    pub final_chamfer: f64,
    pub iterations: usize,
    pub stopped_early: bool,
    /// Best-so-far objective after each iteration.
    pub best_history: Vec<f64>,
}

/// Fits raw deformation parameters so the deformed base matches `target`,
/// starting from the identity deformation.
pub fn fit_deformation(
    target: &PointCloud,
    base: &TriMesh,
    mask: super::FreezeMask,
    budget: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64), LdmError> {
    let space = LdmSpace::with_lattice(base.clone(), mask, super::DEFAULT_STEPS)?;
    let cfg = FitConfig { budget, ..FitConfig::default() };
    let r = fit_deformation_with(&space, target, &cfg, None, seed)?;
    Ok((r.params, r.final_chamfer))
}

fn subsample(points: &[Vec3], n: usize) -> Vec<Vec3> {
    if points.len() <= n {
        return points.to_vec();
    }
    // Evenly strided, deterministic.
    (0..n).map(|i| points[i * points.len() / n]).collect()
}

/// Adam on the sampled Chamfer objective. `init` warm-starts from given raw
/// parameters. Returns the best iterate seen.
pub fn fit_deformation_with(
    space: &LdmSpace,
    target: &PointCloud,
    cfg: &FitConfig,
    init: Option<&[f64]>,
    seed: u64,
) -> Result<FitResult, LdmError> {
    if cfg.budget == 0 {
        return Err(LdmError::FitFailure("budget must be at least 1".into()));
    }
    if target.is_empty() {
        return Err(crate::geom::GeomError::EmptyCloud.into());
    }
    let base_samples = surface_sample(&space.base, cfg.samples.max(1), seed)?.points;
    let target_pts = subsample(&target.points, cfg.samples.max(1));

    let mut params = match init {
        Some(p) => {
            if p.len() != space.raw_dim() {
                return Err(LdmError::DimensionMismatch { expected: space.raw_dim(), got: p.len() });
            }
            p.to_vec()
        }
        None => space.zero_params(),
    };
    let n = params.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut lr = cfg.learning_rate;
    let mut t = 0i32;

    let mut prev = params.clone();
    let mut best = f64::INFINITY;
    let mut best_params = params.clone();
    let mut initial = None;
    let mut last_improve = 0usize;
    let mut rejections = 0usize;
    let mut history = Vec::with_capacity(cfg.budget);
    let warmup = (cfg.warmup_fraction * cfg.budget as f64).ceil() as usize;
    let mut stopped_early = false;
    let mut iterations = 0;

    for it in 0..cfg.budget {
        iterations = it + 1;
        let (value, grad) = match chamfer_value_and_gradient(space, &params, &base_samples, &target_pts) {
            Ok(r) if r.0.is_finite() && r.1.iter().all(|g| g.is_finite()) => r,
            Ok(_) | Err(LdmError::FlowDivergence { .. }) => {
                if initial.is_none() {
                    return Err(LdmError::FitFailure("initial parameters diverge".into()));
                }
                rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(LdmError::FitFailure(format!(
                        "{rejections} consecutive rejected steps"
                    )));
                }
                lr *= 0.5;
                log::debug!("fit step {it} rejected, learning rate now {lr}");
                params.clone_from(&prev);
                // Retake the step from the last good iterate with the
                // smaller rate, reusing the moment estimates.
                adam_apply(&mut params, &m, &v, t, lr, cfg);
                history.push(best);
                continue;
            }
            Err(e) => return Err(e),
        };
        rejections = 0;
        if initial.is_none() {
            initial = Some(value);
        }
        if value < best {
            best = value;
            best_params.clone_from(&params);
            last_improve = it;
        }
        history.push(best);
        if it >= warmup && it - last_improve >= cfg.patience {
            stopped_early = true;
            break;
        }
        prev.clone_from(&params);
        t += 1;
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        }
        adam_apply(&mut params, &m, &v, t, lr, cfg);
    }
    Ok(FitResult {
        params: best_params,
        initial_chamfer: initial.unwrap_or(best),
        final_chamfer: best,
        iterations,
        stopped_early,
        best_history: history,
    })
}

fn adam_apply(params: &mut [f64], m: &[f64], v: &[f64], t: i32, lr: f64, cfg: &FitConfig) {
    if t == 0 {
        return;
    }
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
    }
}
