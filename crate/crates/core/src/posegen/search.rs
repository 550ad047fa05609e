use serde::{Deserialize, Serialize};

use super::scene::{PoseSearchSpace, PoseTask, SceneSurrogate};
use super::terms::{pose_objective, PoseWeights};
use super::PoseError;
use crate::cmaes::CmaState;
use crate::gripper::EePose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseOptConfig {
    /// CMA-ES generations.
    pub generations: usize,
    /// Number of diverse candidates returned.
    pub candidates: usize,
    /// Initial step size in normalized coordinates.
    pub sigma0: f64,
    /// Archive poses scoring below this percentile are discarded before
    /// diversity selection.
    pub keep_percentile: f64,
}

impl Default for PoseOptConfig {
    fn default() -> Self {
        Self { generations: 24, candidates: 5, sigma0: 0.3, keep_percentile: 80.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseCandidate {
    pub pose: EePose,
    pub score: f64,
}

/// Position distance plus 0.05 x geodesic angle plus width difference.
pub fn pose_distance(a: &EePose, b: &EePose) -> f64 {
    (a.position - b.position).norm() + 0.05 * a.rotation.angle_to(&b.rotation) + (a.width - b.width).abs()
}

/// CMA-ES over the normalized pose box, then a percentile filter on the
/// archive and farthest-point selection of `candidates` poses (padded with
/// the best pose when fewer are distinct). The first candidate is the best.
pub fn optimize_pose(
    scene: &SceneSurrogate,
    task: &PoseTask,
    space: &PoseSearchSpace,
    weights: &PoseWeights,
    cfg: &PoseOptConfig,
    seed: u64,
) -> Result<Vec<PoseCandidate>, PoseError> {
    if cfg.candidates == 0 {
        return Err(PoseError::Invalid("at least one candidate must be requested".into()));
    }
    let dim = PoseSearchSpace::DIM;
    let mut cma = CmaState::new(&vec![0.0; dim], cfg.sigma0, Some(vec![(-1.0, 1.0); dim]), seed)?;
    let mut archive: Vec<PoseCandidate> = Vec::new();
    for _ in 0..cfg.generations.max(1) {
        let xs = cma.ask();
        let fs: Vec<f64> = xs
            .iter()
            .map(|u| {
                let pose = space.decode(u);
                let f = pose_objective(&pose, scene, task, weights);
                archive.push(PoseCandidate { pose, score: f });
                if f.is_finite() {
                    f
                } else {
                    f64::NAN
                }
            })
            .collect();
        cma.tell(&xs, &fs)?;
    }
    select_diverse(&archive, cfg.candidates, cfg.keep_percentile)
}

fn select_diverse(archive: &[PoseCandidate], count: usize, percentile: f64) -> Result<Vec<PoseCandidate>, PoseError> {
    let mut valid: Vec<&PoseCandidate> = archive.iter().filter(|c| c.score.is_finite()).collect();
    if valid.is_empty() {
        return Err(PoseError::SearchFailure);
    }
    let mut sorted: Vec<f64> = valid.iter().map(|c| c.score).collect();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let threshold = sorted[rank - 1];
    valid.retain(|c| c.score >= threshold);

    let best = *valid.iter().copied().max_by(|a, b| a.score.total_cmp(&b.score)).expect("non-empty");
    let mut chosen = vec![best];
    let mut min_dist: Vec<f64> = valid.iter().map(|c| pose_distance(&c.pose, &best.pose)).collect();
    while chosen.len() < count {
        let mut pick: Option<usize> = None;
        for (i, d) in min_dist.iter().enumerate() {
            if *d <= 0.0 {
                continue;
            }
            let better = match pick {
                None => true,
                Some(j) => *d > min_dist[j] || (*d == min_dist[j] && valid[i].score > valid[j].score),
            };
            if better {
                pick = Some(i);
            }
        }
        let Some(i) = pick else {
            break;
        };
        let c = *valid[i];
        chosen.push(c);
        for (k, d) in min_dist.iter_mut().enumerate() {
            *d = d.min(pose_distance(&valid[k].pose, &c.pose));
        }
    }
    while chosen.len() < count {
        chosen.push(best);
    }
    Ok(chosen)
}
