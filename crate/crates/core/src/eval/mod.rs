//! Batch experiments, metrics and reports.
//!
//! Episode `i` of a batch uses seed `derive(batch_seed, i)`. The seed does
//! not depend on the policy or model, so every cell of an experiment matrix
//! starts from the same initial states.

mod compare;
mod metrics;
mod report;

pub use compare::{compare_runs, AblationRow, AblationSummary, Comparison};
pub use metrics::{
    ablation_deltas, aggregate_across, relative_improvement, summarize, AggregateRow,
    ImprovementRow, MeanStd, MetricsSummary,
};
pub use report::{
    cell_stem, read_summary, write_cell, write_comparison, write_summary, CellSummary, RunSummary,
    SUMMARY_FILE, SUMMARY_FORMAT_VERSION,
};

use rayon::prelude::*;

use crate::controller::DeltaController;
use crate::error::{Error, Result};
use crate::geometry::{TaskRelation, WorkspaceConfig};
use crate::policy::{run_episode, EpisodeRecord, EpisodeSetup, PolicyKind};
use crate::reasoner::{InFlightLimiter, ReasonerBackendConfig};
use crate::seed;

/// Model name used for cells that involve no reasoner.
pub const NO_MODEL: &str = "none";

/// One cell of an experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub policy: PolicyKind,
    pub model: String,
    pub backend: ReasonerBackendConfig,
    pub task: TaskRelation,
    pub episodes: usize,
    pub batch_seed: u64,
    pub workspace: WorkspaceConfig,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("a batch needs at least one episode".into()));
        }
        self.workspace.validate()?;
        if self.policy.uses_reasoner() {
            self.backend.validate()?;
        }
        Ok(())
    }

    pub fn episode_seed(&self, index: usize) -> u64 {
        seed::derive(self.batch_seed, index as u64)
    }
}

/// Runs every episode of `spec`, on up to `workers` threads. Records come
/// back in episode order whatever the worker count.
pub fn run_batch(
    spec: &BatchSpec,
    controller: Option<&DeltaController>,
    workers: usize,
) -> Result<Vec<EpisodeRecord>> {
    spec.validate()?;
    if spec.policy.uses_controller() {
        let ctrl = controller
            .ok_or_else(|| Error::Config(format!("policy {} needs a trained controller", spec.policy)))?;
        if ctrl.max_step != spec.workspace.max_step {
            return Err(Error::Config(format!(
                "controller was trained with max_step {} but the workspace uses {}",
                ctrl.max_step, spec.workspace.max_step
            )));
        }
    }
    let limiter = InFlightLimiter::new(spec.backend.max_in_flight);
    let one = |i: usize| -> Result<EpisodeRecord> {
        let episode_seed = spec.episode_seed(i);
        let mut backend = spec
            .policy
            .uses_reasoner()
            .then(|| spec.backend.build(&spec.model, episode_seed, Some(&limiter)));
        let setup = EpisodeSetup {
            policy: spec.policy,
            reasoner: backend.as_deref_mut().map(|b| b as &mut dyn crate::reasoner::Reasoner),
            controller: if spec.policy.uses_controller() { controller } else { None },
            ws: &spec.workspace,
            label_cache: spec.backend.label_cache,
        };
        run_episode(setup, spec.task, episode_seed)
    };
    if workers <= 1 {
        return (0..spec.episodes).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| (0..spec.episodes).into_par_iter().map(one).collect())
}
