//! The three control paradigms and the closed-loop episode runner.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::DeltaController;
use crate::error::{BackendError, Error, Result};
use crate::geometry::{
    apply_action, distance_to_goal, is_satisfied, normalized_distance, sample_initial_state,
    Action, EnvState, TaskRelation, WorkspaceConfig,
};
use crate::reasoner::{
    build_coordinate_prompt, build_symbolic_prompt, parse_coordinate_response,
    parse_symbolic_response, PromptContext, Query, QueryKind, Reasoner,
};
use crate::seed;

/// Stabilizer in the normalized distance trace.
pub const TRACE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// The reasoner predicts absolute coordinates; no controller.
    LlmOnly,
    /// The controller with the ground-truth label; no reasoner.
    DlOnly,
    /// The reasoner picks the label, the controller acts on it.
    LlmDl,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::LlmOnly, PolicyKind::DlOnly, PolicyKind::LlmDl];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LlmOnly => "llm_only",
            PolicyKind::DlOnly => "dl_only",
            PolicyKind::LlmDl => "llm_dl",
        }
    }

    pub fn uses_reasoner(self) -> bool {
        self != PolicyKind::DlOnly
    }

    pub fn uses_controller(self) -> bool {
        self != PolicyKind::LlmOnly
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))
    }
}

/// Everything observed during one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub task: TaskRelation,
    pub initial_state: EnvState,
    pub final_state: EnvState,
    pub success: bool,
    pub steps: usize,
    /// Distance to goal at `t = 0..=steps`.
    pub distance_trace: Vec<f64>,
    pub normalized_trace: Vec<f64>,
    /// Wall-clock latency of every reasoner call, in milliseconds.
    pub reasoner_latencies: Vec<f64>,
    pub parse_failures: usize,
    /// Set when a backend error ended the episode early.
    pub failure: Option<String>,
}

impl EpisodeRecord {
    /// Checks the record's internal invariants.
    pub fn is_consistent(&self) -> bool {
        let last = self.distance_trace.last().copied();
        self.steps + 1 == self.distance_trace.len()
            && self.normalized_trace.len() == self.distance_trace.len()
            && self.success == (last == Some(0.0))
    }

    /// Trajectory-level equality, ignoring wall-clock latencies.
    pub fn same_trajectory(&self, other: &EpisodeRecord) -> bool {
        self.initial_state == other.initial_state
            && self.final_state == other.final_state
            && self.success == other.success
            && self.steps == other.steps
            && self.distance_trace == other.distance_trace
            && self.parse_failures == other.parse_failures
    }
}

/// Per-episode reasoner bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct ReasonerLog {
    pub latencies: Vec<f64>,
    pub parse_failures: usize,
    /// Last label that parsed, reused when a later reply does not.
    pub last_label: Option<TaskRelation>,
}

fn ask(
    backend: &mut dyn Reasoner,
    kind: QueryKind,
    prompt: &str,
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    log: &mut ReasonerLog,
) -> std::result::Result<String, BackendError> {
    let reply = backend.query(&Query {
        kind,
        prompt,
        task,
        state,
        ws,
    })?;
    log.latencies.push(reply.latency_ms);
    Ok(reply.text)
}

/// The reasoner predicts where the red marker should go; the displacement
/// to that point is applied as is, without the controller's step bound.
/// An unparseable reply yields the zero action.
pub fn llm_only_step(
    backend: &mut dyn Reasoner,
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    log: &mut ReasonerLog,
) -> std::result::Result<Action, BackendError> {
    let ctx = PromptContext::new(task.instruction(), state);
    let prompt = build_coordinate_prompt(&ctx, ws);
    let text = ask(backend, QueryKind::Coordinate, &prompt, state, task, ws, log)?;
    Ok(match parse_coordinate_response(&text, ws.side_length) {
        Ok((x, y)) => Action::new(x - state.target_x, y - state.target_y),
        Err(_) => {
            log.parse_failures += 1;
            Action::ZERO
        }
    })
}

/// The controller conditioned on the true label.
pub fn dl_only_step(
    controller: &DeltaController,
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
) -> Result<Action> {
    controller.act(state, task, ws)
}

/// Reasoner label, then controller. On an unparseable reply the last good
/// label of the episode is reused; before any label exists the marker holds
/// still.
pub fn hybrid_step(
    backend: &mut dyn Reasoner,
    controller: &DeltaController,
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    log: &mut ReasonerLog,
) -> Result<Action> {
    let ctx = PromptContext::new(task.instruction(), state);
    let prompt = build_symbolic_prompt(&ctx);
    let text = ask(backend, QueryKind::Symbolic, &prompt, state, task, ws, log)?;
    let label = match parse_symbolic_response(&text) {
        Ok(label) => {
            log.last_label = Some(label);
            Some(label)
        }
        Err(_) => {
            log.parse_failures += 1;
            log.last_label
        }
    };
    match label {
        Some(label) => controller.act(state, label, ws),
        None => Ok(Action::ZERO),
    }
}

/// What an episode needs besides the task and initial state.
pub struct EpisodeSetup<'a> {
    pub policy: PolicyKind,
    pub reasoner: Option<&'a mut dyn Reasoner>,
    pub controller: Option<&'a DeltaController>,
    pub ws: &'a WorkspaceConfig,
    /// Reuse the first parsed label for the rest of the episode.
    pub label_cache: bool,
}

/// Runs one episode from an initial state drawn with `episode_seed`.
pub fn run_episode(setup: EpisodeSetup<'_>, task: TaskRelation, episode_seed: u64) -> Result<EpisodeRecord> {
    let initial = sample_initial_state(
        seed::derive(episode_seed, seed::stream::INITIAL_STATE),
        setup.ws,
    );
    let mut record = run_episode_from(setup, task, initial)?;
    record.seed = episode_seed;
    Ok(record)
}

/// The closed loop: check the goal, then reason, act and move until the
/// goal holds or the horizon is spent. A state that already satisfies the
/// goal finishes with zero steps and no reasoner or controller call.
///
/// Only configuration problems are returned as errors; a failing backend
/// ends the episode as unsuccessful with `failure` set.
pub fn run_episode_from(
    setup: EpisodeSetup<'_>,
    task: TaskRelation,
    initial: EnvState,
) -> Result<EpisodeRecord> {
    let EpisodeSetup {
        policy,
        mut reasoner,
        controller,
        ws,
        label_cache,
    } = setup;
    if policy.uses_reasoner() && reasoner.is_none() {
        return Err(Error::Config(format!("policy {policy} needs a reasoner backend")));
    }
    if policy.uses_controller() && controller.is_none() {
        return Err(Error::Config(format!("policy {policy} needs a trained controller")));
    }

    let mut state = initial;
    let d0 = distance_to_goal(&state, task, ws);
    let mut trace = vec![d0];
    let mut log = ReasonerLog::default();
    let mut failure = None;
    let mut t = 0;

    while t < ws.horizon && !is_satisfied(&state, task, ws) {
        let action = match policy {
            PolicyKind::DlOnly => dl_only_step(controller.expect("checked above"), &state, task, ws),
            PolicyKind::LlmOnly => {
                let backend = reasoner.as_deref_mut().expect("checked above");
                llm_only_step(backend, &state, task, ws, &mut log).map_err(Error::from)
            }
            PolicyKind::LlmDl => {
                let ctrl = controller.expect("checked above");
                match (label_cache, log.last_label) {
                    (true, Some(label)) => ctrl.act(&state, label, ws),
                    _ => {
                        let backend = reasoner.as_deref_mut().expect("checked above");
                        hybrid_step(backend, ctrl, &state, task, ws, &mut log)
                    }
                }
            }
        };
        let action = match action {
            Ok(a) => a,
            Err(Error::Backend(e)) => {
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        state = apply_action(&state, action, ws);
        t += 1;
        trace.push(distance_to_goal(&state, task, ws));
    }

    let success = failure.is_none() && is_satisfied(&state, task, ws);
    let normalized_trace = trace
        .iter()
        .map(|&d| normalized_distance(d, d0, TRACE_EPS))
        .collect();
    Ok(EpisodeRecord {
        seed: 0,
        task,
        initial_state: initial,
        final_state: state,
        success,
        steps: t,
        distance_trace: trace,
        normalized_trace,
        reasoner_latencies: log.latencies,
        parse_failures: log.parse_failures,
        failure,
    })
}
