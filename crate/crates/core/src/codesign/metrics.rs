use serde::{Deserialize, Serialize};

use crate::control::{RolloutRecord, Task};
use crate::stats::{mean, percentile_top};

/// Temporal percentile used to aggregate per-step stress values.
pub const TEMPORAL_PERCENTILE: f64 = 2.5;

/// Temporally aggregated stress of one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressMetrics {
    pub mean: f64,
    /// `(s, value)` per requested particle percentile.
    pub max: Vec<(f64, f64)>,
}

impl StressMetrics {
    pub fn max_at(&self, s: f64) -> Option<f64> {
        self.max.iter().find(|(p, _)| *p == s).map(|(_, v)| *v)
    }
}

/// Stress metrics from a full `steps x particles` stress tensor: per step
/// the particle mean and top-`s` percentiles, then the top-2.5% over time.
pub fn stress_metrics_from_tensor(stress: &[Vec<f64>], s_values: &[f64]) -> StressMetrics {
    let means: Vec<f64> = stress.iter().map(|row| mean(row)).collect();
    let max = s_values
        .iter()
        .map(|&s| {
            let per_step: Vec<f64> = stress.iter().map(|row| percentile_top(row, s).unwrap_or(0.0)).collect();
            (s, percentile_top(&per_step, TEMPORAL_PERCENTILE).unwrap_or(0.0))
        })
        .collect();
    StressMetrics { mean: percentile_top(&means, TEMPORAL_PERCENTILE).unwrap_or(0.0), max }
}

/// Stress metrics from the per-step values stored in a record. Percentiles
/// not recorded are skipped with a warning.
pub fn stress_metrics(record: &RolloutRecord, s_values: &[f64]) -> StressMetrics {
    let means: Vec<f64> = record.steps.iter().map(|s| s.mean_stress).collect();
    let mut max = Vec::new();
    for &s in s_values {
        let Some(col) = record.stress_percentiles.iter().position(|&p| p == s) else {
            log::warn!("stress percentile {s} was not recorded");
            continue;
        };
        let per_step: Vec<f64> = record.steps.iter().map(|st| st.max_stress[col]).collect();
        max.push((s, percentile_top(&per_step, TEMPORAL_PERCENTILE).unwrap_or(0.0)));
    }
    StressMetrics { mean: percentile_top(&means, TEMPORAL_PERCENTILE).unwrap_or(0.0), max }
}

/// Success thresholds per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskThresholds {
    pub grasp_lift: f64,
    pub grasp_window: usize,
    pub scoop_lift: f64,
    pub scoop_window: usize,
    pub push_radius: f64,
    pub push_window: usize,
}

impl Default for TaskThresholds {
    fn default() -> Self {
        Self {
            grasp_lift: 0.10,
            grasp_window: 5,
            scoop_lift: 0.08,
            scoop_window: 3,
            push_radius: 0.01,
            push_window: 5,
        }
    }
}

impl TaskThresholds {
    pub fn window(&self, task: Task) -> usize {
        match task {
            Task::Grasp => self.grasp_window,
            Task::Push => self.push_window,
            Task::Scoop => self.scoop_window,
        }
    }
}

/// Progress and success from centroid heights `z` (grasp, scoop) or
/// subgoal distances `l` (push).
pub fn task_metrics_from_series(series: &[f64], task: Task, th: &TaskThresholds) -> (f64, f64) {
    if series.is_empty() {
        return (0.0, 0.0);
    }
    let first = series[0];
    let last = series[series.len() - 1];
    let window = th.window(task);
    let q_prog = match task {
        Task::Grasp | Task::Scoop => series.iter().copied().fold(f64::NEG_INFINITY, f64::max) - first,
        Task::Push => first - last,
    };
    if series.len() < window {
        log::warn!("record has {} steps, fewer than the success window {window}", series.len());
        return (q_prog, 0.0);
    }
    let tail = &series[series.len() - window..];
    let ok = match task {
        Task::Grasp => tail.iter().all(|z| z - first >= th.grasp_lift),
        Task::Scoop => tail.iter().all(|z| z - first >= th.scoop_lift),
        Task::Push => tail.iter().all(|l| *l <= th.push_radius),
    };
    (q_prog, if ok { 1.0 } else { 0.0 })
}

pub fn task_metrics(record: &RolloutRecord, task: Task, th: &TaskThresholds) -> (f64, f64) {
    let series: Vec<f64> = match task {
        Task::Grasp | Task::Scoop => record.z(),
        Task::Push => record.steps.iter().map(|s| s.subgoal_distance.unwrap_or(f64::INFINITY)).collect(),
    };
    task_metrics_from_series(&series, task, th)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_zero_fields() {
        let z = vec![vec![0.0; 5]; 4];
        let m = stress_metrics_from_tensor(&z, &[2.5, 0.0]);
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.max_at(0.0), Some(0.0));
        let c = vec![vec![3.5; 7]; 6];
        let m = stress_metrics_from_tensor(&c, &[2.5, 0.0, 50.0]);
        assert_eq!(m.mean, 3.5);
        assert!(m.max.iter().all(|(_, v)| *v == 3.5));
    }

    #[test]
    fn task_metric_examples() {
        let th = TaskThresholds::default();
        assert_eq!(task_metrics_from_series(&[0.02; 30], Task::Grasp, &th), (0.0, 0.0));
        let mut z = vec![0.02; 60];
        for (k, v) in z.iter_mut().enumerate() {
            if k >= 49 {
                *v = 0.14;
            }
        }
        let (p, s) = task_metrics_from_series(&z, Task::Grasp, &th);
        assert!((p - 0.12).abs() < 1e-12);
        assert_eq!(s, 1.0);
        let l = [0.10, 0.07, 0.04, 0.03, 0.02, 0.02, 0.02];
        let (p, s) = task_metrics_from_series(&l, Task::Push, &th);
        assert!((p - 0.08).abs() < 1e-12);
        assert_eq!(s, 0.0);
        assert_eq!(task_metrics_from_series(&[0.0, 0.2], Task::Grasp, &th).1, 0.0);
    }
}
