use serde::{Deserialize, Serialize};

use super::CodesignError;
use crate::control::Task;

/// Weights of the per-environment design objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub prog: f64,
    pub succ: f64,
    /// Top-2.5% stress.
    pub max25: f64,
    /// Peak stress.
    pub max0: f64,
    pub mean: f64,
}

impl ScoreWeights {
    pub fn for_task(task: Task) -> Self {
        let (prog, succ) = match task {
            Task::Grasp | Task::Scoop => (1e2, 2e2),
            Task::Push => (3e2, 5e2),
        };
        Self { prog, succ, max25: 2e-3, max0: 8e-4, mean: 1e-2 }
    }

    pub fn validate(&self) -> Result<(), CodesignError> {
        let all = [self.prog, self.succ, self.max25, self.max0, self.mean];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(CodesignError::Invalid(format!("score weights must be non-negative: {self:?}")))
        }
    }

    fn task_term(&self, q_prog: f64, q_succ: f64) -> f64 {
        self.prog * q_prog + self.succ * q_succ
    }

    fn stress_term(&self, mean: f64, max25: f64, max0: f64) -> f64 {
        self.max25 * max25 + self.max0 * max0 + self.mean * mean
    }
}

pub fn env_score(q_prog: f64, q_succ: f64, mean: f64, max25: f64, max0: f64, w: &ScoreWeights) -> f64 {
    w.task_term(q_prog, q_succ) - w.stress_term(mean, max25, max0)
}

/// Scored components of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvComponents {
    pub q_prog: f64,
    pub q_succ: f64,
    pub mean_stress: f64,
    pub max_stress_25: f64,
    pub max_stress_0: f64,
    pub j_e: f64,
    /// Set when the environment could not be evaluated; it then contributes
    /// this value instead of its task and stress terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
}

impl EnvComponents {
    pub fn new(q_prog: f64, q_succ: f64, mean: f64, max25: f64, max0: f64, w: &ScoreWeights) -> Self {
        Self {
            q_prog,
            q_succ,
            mean_stress: mean,
            max_stress_25: max25,
            max_stress_0: max0,
            j_e: env_score(q_prog, q_succ, mean, max25, max0, w),
            floor: None,
        }
    }

    pub fn floored(penalty: f64) -> Self {
        Self {
            q_prog: 0.0,
            q_succ: 0.0,
            mean_stress: 0.0,
            max_stress_25: 0.0,
            max_stress_0: 0.0,
            j_e: penalty,
            floor: Some(penalty),
        }
    }

    pub fn success(&self) -> bool {
        self.floor.is_none() && self.q_succ >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignScore {
    pub j: f64,
    pub envs: Vec<EnvComponents>,
    pub successes: usize,
}

impl DesignScore {
    pub fn env_count(&self) -> usize {
        self.envs.len()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.envs.len().max(1) as f64
    }

    /// Recomputes `j` from the stored components.
    pub fn recompute(&self, w: &ScoreWeights) -> f64 {
        aggregate_j(&self.envs, w)
    }
}

fn aggregate_j(envs: &[EnvComponents], w: &ScoreWeights) -> f64 {
    let e = envs.len() as f64;
    let task: f64 = envs.iter().map(|c| c.floor.unwrap_or_else(|| w.task_term(c.q_prog, c.q_succ))).sum();
    let stress: f64 = envs
        .iter()
        .filter(|c| c.success())
        .map(|c| w.stress_term(c.mean_stress, c.max_stress_25, c.max_stress_0))
        .sum();
    task / e - stress / e
}

/// Mean task terms over all environments minus the stress penalties of the
/// successful ones, divided by the environment count.
pub fn aggregate_score(envs: Vec<EnvComponents>, w: &ScoreWeights) -> Result<DesignScore, CodesignError> {
    if envs.is_empty() {
        return Err(CodesignError::Invalid("aggregate_score needs at least one environment".into()));
    }
    let j = aggregate_j(&envs, w);
    let successes = envs.iter().filter(|c| c.success()).count();
    Ok(DesignScore { j, envs, successes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_plug_ins() {
        let g = ScoreWeights::for_task(Task::Grasp);
        let j = env_score(0.12, 1.0, 500.0, 9000.0, 12000.0, &g);
        assert!((j - 179.4).abs() < 1e-9, "{j}");
        let p = ScoreWeights::for_task(Task::Push);
        assert!((env_score(0.08, 1.0, 0.0, 0.0, 0.0, &p) - 524.0).abs() < 1e-9);
        assert_eq!(env_score(0.0, 0.0, 0.0, 0.0, 0.0, &g), 0.0);
    }

    #[test]
    fn success_conditioned_stress() {
        let w = ScoreWeights::for_task(Task::Grasp);
        let ok = EnvComponents::new(0.12, 1.0, 500.0, 9000.0, 12000.0, &w);
        let bad = EnvComponents::new(0.02, 0.0, 800.0, 20000.0, 30000.0, &w);
        let s = aggregate_score(vec![ok.clone(), bad.clone()], &w).unwrap();
        let penalty = 18.0 + 9.6 + 5.0;
        let want = (212.0 + 2.0) / 2.0 - penalty / 2.0;
        assert!((s.j - want).abs() < 1e-9);
        assert_eq!(s.successes, 1);
        assert_eq!(s.j.to_bits(), s.recompute(&w).to_bits());
        let fail = aggregate_score(vec![bad.clone(), bad], &w).unwrap();
        assert!((fail.j - 2.0).abs() < 1e-12);
        let one = aggregate_score(vec![ok.clone()], &w).unwrap();
        assert!((one.j - ok.j_e).abs() < 1e-12);
        assert!(aggregate_score(vec![], &w).is_err());
    }

    #[test]
    fn floor_environments() {
        let w = ScoreWeights::for_task(Task::Grasp);
        let s = aggregate_score(vec![EnvComponents::floored(-500.0), EnvComponents::new(0.0, 0.0, 1.0, 1.0, 1.0, &w)], &w)
            .unwrap();
        assert_eq!(s.j, -250.0);
        assert_eq!(s.successes, 0);
    }
}
