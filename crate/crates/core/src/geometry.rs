//! The planar two-marker workspace.
//!
//! Coordinates are in pixels with the screen convention: `y` grows downward,
//! so "above" means a *smaller* `y`. The red (target) marker is the one that
//! moves; the blue (reference) marker is fixed for the whole episode.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Workspace size, goal margin, per-step displacement bound and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkspaceConfig {
    /// Side length `C` of the square workspace `[0, C]²`.
    pub side_length: f64,
    /// Margin `m` inside the relation predicates.
    pub margin: f64,
    /// Per-axis bound on controller displacements.
    pub max_step: f64,
    /// Maximum number of control steps per episode.
    pub horizon: usize,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            side_length: 800.0,
            margin: 50.0,
            max_step: 40.0,
            horizon: 60,
        }
    }
}

impl WorkspaceConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.side_length;
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("side_length must be positive, got {c}")));
        }
        if !(self.margin > 0.0 && self.margin < c) {
            return Err(Error::Config(format!(
                "margin must lie in (0, {c}), got {}",
                self.margin
            )));
        }
        if !(self.max_step > 0.0 && self.max_step <= c) {
            return Err(Error::Config(format!(
                "max_step must lie in (0, {c}], got {}",
                self.max_step
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(0.0, self.side_length)
    }
}

/// Positions of the red (target) and blue (reference) markers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub target_x: f64,
    pub target_y: f64,
    pub reference_x: f64,
    pub reference_y: f64,
}

impl EnvState {
    pub fn new(target_x: f64, target_y: f64, reference_x: f64, reference_y: f64) -> Self {
        Self {
            target_x,
            target_y,
            reference_x,
            reference_y,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.target_x, self.target_y, self.reference_x, self.reference_y]
    }

    pub fn in_workspace(&self, ws: &WorkspaceConfig) -> bool {
        self.as_array()
            .iter()
            .all(|v| (0.0..=ws.side_length).contains(v))
    }
}

/// One of the four canonical spatial relations.
///
/// The discriminant is the canonical index used by the symbolic label space
/// and the task encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskRelation {
    RightOf = 0,
    LeftOf = 1,
    Above = 2,
    Below = 3,
}

impl TaskRelation {
    /// All relations in canonical index order.
    pub const ALL: [TaskRelation; 4] = [
        TaskRelation::RightOf,
        TaskRelation::LeftOf,
        TaskRelation::Above,
        TaskRelation::Below,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskRelation::RightOf => "right_of",
            TaskRelation::LeftOf => "left_of",
            TaskRelation::Above => "above",
            TaskRelation::Below => "below",
        }
    }

    /// The natural-language instruction handed to a reasoner.
    pub fn instruction(self) -> &'static str {
        match self {
            TaskRelation::RightOf => "Move the red marker to the right of the blue marker.",
            TaskRelation::LeftOf => "Move the red marker to the left of the blue marker.",
            TaskRelation::Above => "Move the red marker above the blue marker.",
            TaskRelation::Below => "Move the red marker below the blue marker.",
        }
    }
}

impl fmt::Display for TaskRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task relation `{s}`")))
    }
}

/// A displacement of the red marker, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
}

impl Action {
    pub const ZERO: Action = Action { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Draws all four coordinates independently and uniformly from `[0, C]`.
///
/// The generator is ChaCha8 keyed by `rng_seed`, so the result is identical
/// on every platform.
pub fn sample_initial_state(rng_seed: u64, ws: &WorkspaceConfig) -> EnvState {
    let mut rng = seed::rng(rng_seed);
    sample_state_with(&mut rng, ws)
}

pub(crate) fn sample_state_with<R: Rng + ?Sized>(rng: &mut R, ws: &WorkspaceConfig) -> EnvState {
    let c = ws.side_length;
    let mut coord = || rng.random_range(0.0..=c);
    EnvState::new(coord(), coord(), coord(), coord())
}

/// The goal predicate. All comparisons are inclusive.
pub fn is_satisfied(state: &EnvState, task: TaskRelation, ws: &WorkspaceConfig) -> bool {
    let m = ws.margin;
    let s = state;
    match task {
        TaskRelation::RightOf => s.target_x >= s.reference_x + m,
        TaskRelation::LeftOf => s.target_x <= s.reference_x - m,
        TaskRelation::Above => s.target_y <= s.reference_y - m,
        TaskRelation::Below => s.target_y >= s.reference_y + m,
    }
}

/// Moves the red marker by `action` and clips it to the workspace.
pub fn apply_action(state: &EnvState, action: Action, ws: &WorkspaceConfig) -> EnvState {
    EnvState {
        target_x: ws.clip(state.target_x + action.dx),
        target_y: ws.clip(state.target_y + action.dy),
        ..*state
    }
}

/// Hinge distance from the red marker to the goal half-plane.
///
/// Zero exactly when [`is_satisfied`] holds.
pub fn distance_to_goal(state: &EnvState, task: TaskRelation, ws: &WorkspaceConfig) -> f64 {
    let m = ws.margin;
    let s = state;
    let gap = match task {
        TaskRelation::RightOf => (s.reference_x + m) - s.target_x,
        TaskRelation::LeftOf => s.target_x - (s.reference_x - m),
        TaskRelation::Above => s.target_y - (s.reference_y - m),
        TaskRelation::Below => (s.reference_y + m) - s.target_y,
    };
    gap.max(0.0)
}

/// Distance at step `t` relative to the initial distance.
pub fn normalized_distance(d_t: f64, d_0: f64, eps: f64) -> f64 {
    d_t / (d_0 + eps)
}

/// Whether the goal half-plane of `task` intersects the workspace at all.
///
/// With uniform sampling the reference marker lands within `m` of the far
/// wall with probability `m / C`, and those episodes cannot be solved by any
/// policy.
pub fn is_feasible(state: &EnvState, task: TaskRelation, ws: &WorkspaceConfig) -> bool {
    let (c, m) = (ws.side_length, ws.margin);
    match task {
        TaskRelation::RightOf => state.reference_x + m <= c,
        TaskRelation::LeftOf => state.reference_x - m >= 0.0,
        TaskRelation::Above => state.reference_y - m >= 0.0,
        TaskRelation::Below => state.reference_y + m <= c,
    }
}
