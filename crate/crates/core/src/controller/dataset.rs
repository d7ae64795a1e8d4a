//! Synthetic supervision: uniformly sampled states and tasks labelled with
//! an axis-aligned step toward the goal half-plane.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::{sample_state_with, Action, EnvState, TaskRelation, WorkspaceConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub state: EnvState,
    pub task: TaskRelation,
    /// Clamped to `±max_step` per axis.
    pub target: Action,
}

/// The step toward the goal before clamping: `alpha` times the signed gap
/// along the relation's axis, zero once the relation holds.
pub fn raw_target_displacement(
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    alpha: f64,
) -> Action {
    let m = ws.margin;
    let s = state;
    match task {
        TaskRelation::RightOf => {
            Action::new(alpha * ((s.reference_x + m) - s.target_x).max(0.0), 0.0)
        }
        TaskRelation::LeftOf => {
            Action::new(-alpha * (s.target_x - (s.reference_x - m)).max(0.0), 0.0)
        }
        TaskRelation::Above => {
            Action::new(0.0, -alpha * (s.target_y - (s.reference_y - m)).max(0.0))
        }
        TaskRelation::Below => {
            Action::new(0.0, alpha * ((s.reference_y + m) - s.target_y).max(0.0))
        }
    }
}

/// [`raw_target_displacement`] clamped per axis to `±ws.max_step`, the
/// range the bounded controller can actually produce.
pub fn target_displacement(
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    alpha: f64,
) -> Action {
    let raw = raw_target_displacement(state, task, ws, alpha);
    let b = ws.max_step;
    Action::new(raw.dx.clamp(-b, b), raw.dy.clamp(-b, b))
}

pub fn generate_dataset(cfg: &TrainConfig, ws: &WorkspaceConfig) -> Vec<TrainingSample> {
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::stream::DATASET));
    (0..cfg.sample_count)
        .map(|_| {
            let state = sample_state_with(&mut rng, ws);
            let task = TaskRelation::ALL[rng.random_range(0..TaskRelation::ALL.len())];
            TrainingSample {
                state,
                task,
                target: target_displacement(&state, task, ws, cfg.step_scale),
            }
        })
        .collect()
}

/// One CSV row of the dataset file.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    x_r: f64,
    y_r: f64,
    x_b: f64,
    y_b: f64,
    task_index: usize,
    dx_target: f64,
    dy_target: f64,
}

/// Writes `x_r,y_r,x_b,y_b,task_index,dx_target,dy_target` rows.
pub fn write_dataset(path: &Path, samples: &[TrainingSample]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for s in samples {
        w.serialize(DatasetRow {
            x_r: s.state.target_x,
            y_r: s.state.target_y,
            x_b: s.state.reference_x,
            y_b: s.state.reference_y,
            task_index: s.task.index(),
            dx_target: s.target.dx,
            dy_target: s.target.dy,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<TrainingSample>> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize::<DatasetRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            let task = TaskRelation::from_index(row.task_index).ok_or_else(|| {
                Error::Config(format!(
                    "{}: task_index {} out of range",
                    path.display(),
                    row.task_index
                ))
            })?;
            Ok(TrainingSample {
                state: EnvState::new(row.x_r, row.y_r, row.x_b, row.y_b),
                task,
                target: Action::new(row.dx_target, row.dy_target),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_action, distance_to_goal, is_satisfied};

    fn ws() -> WorkspaceConfig {
        WorkspaceConfig::default()
    }

    #[test]
    fn target_examples() {
        let s = EnvState::new(100.0, 0.0, 200.0, 0.0);
        let raw = raw_target_displacement(&s, TaskRelation::RightOf, &ws(), 1.0);
        assert_eq!(raw, Action::new(150.0, 0.0));
        assert_eq!(
            target_displacement(&s, TaskRelation::RightOf, &ws(), 1.0),
            Action::new(40.0, 0.0)
        );
        let done = EnvState::new(400.0, 0.0, 200.0, 0.0);
        assert_eq!(
            target_displacement(&done, TaskRelation::RightOf, &ws(), 1.0),
            Action::ZERO
        );
        let s = EnvState::new(0.0, 300.0, 0.0, 100.0);
        let raw = raw_target_displacement(&s, TaskRelation::Above, &ws(), 0.1);
        assert!((raw.dy + 25.0).abs() < 1e-12);
        assert_eq!(raw.dx, 0.0);
    }

    #[test]
    fn dataset_is_deterministic_and_balanced() {
        let cfg = TrainConfig {
            sample_count: 1000,
            ..TrainConfig::default()
        };
        let a = generate_dataset(&cfg, &ws());
        assert_eq!(a.len(), 1000);
        assert_eq!(a, generate_dataset(&cfg, &ws()));
        // Binomial(1000, 1/4): mean 250, sd ~13.7.
        for t in TaskRelation::ALL {
            let n = a.iter().filter(|s| s.task == t).count() as f64;
            assert!((n - 250.0).abs() < 3.0 * (1000.0f64 * 0.25 * 0.75).sqrt(), "{t}: {n}");
        }
        for s in &a {
            assert!(s.target.dx == 0.0 || s.target.dy == 0.0);
            assert!(s.target.dx.abs() <= ws().max_step && s.target.dy.abs() <= ws().max_step);
        }
    }

    #[test]
    fn unclamped_targets_reach_the_goal_or_the_wall() {
        let cfg = TrainConfig {
            sample_count: 5000,
            seed: 11,
            ..TrainConfig::default()
        };
        for s in generate_dataset(&cfg, &ws()) {
            let raw = raw_target_displacement(&s.state, s.task, &ws(), 1.0);
            let unclipped = crate::geometry::EnvState {
                target_x: s.state.target_x + raw.dx,
                target_y: s.state.target_y + raw.dy,
                ..s.state
            };
            let next = apply_action(&s.state, raw, &ws());
            let clipped = next != unclipped;
            // Landing exactly on the boundary is subject to rounding.
            let reached = is_satisfied(&next, s.task, &ws())
                || distance_to_goal(&next, s.task, &ws()) < 1e-9;
            assert!(reached || clipped);
            assert!(distance_to_goal(&next, s.task, &ws()) <= distance_to_goal(&s.state, s.task, &ws()));
        }
    }

    #[test]
    fn csv_round_trip() {
        let cfg = TrainConfig {
            sample_count: 50,
            ..TrainConfig::default()
        };
        let data = generate_dataset(&cfg, &ws());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &data).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x_r,y_r,x_b,y_b,task_index,dx_target,dy_target\n"));
        assert_eq!(read_dataset(&path).unwrap(), data);
    }
}
