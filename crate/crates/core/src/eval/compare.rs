//! Comparing two runs: improvement rows and the ablation deltas.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::{
    ablation_deltas, aggregate_across, relative_improvement, AggregateRow, ImprovementRow, MeanStd,
};
use super::report::{CellSummary, RunSummary};
use super::NO_MODEL;
use crate::error::{Error, Result};
use crate::geometry::TaskRelation;
use crate::policy::PolicyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub task: TaskRelation,
    pub model: String,
    /// Hybrid minus controller-only success rate.
    pub delta_symbolic: f64,
    /// Hybrid minus reasoner-only success rate.
    pub delta_neural: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rows: Vec<AblationRow>,
    pub delta_symbolic: MeanStd,
    pub delta_neural: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub base_policy: PolicyKind,
    pub hybrid_policy: PolicyKind,
    pub rows: Vec<ImprovementRow>,
    /// Mean ± sample std per task across models.
    pub aggregate: Vec<AggregateRow>,
    pub ablation: Option<AblationSummary>,
    pub notices: Vec<String>,
}

fn policies(run: &RunSummary) -> BTreeSet<PolicyKind> {
    run.cells.iter().map(|c| c.policy).collect()
}

/// A run holding a single policy stands for that policy; otherwise the
/// preferred one is taken.
fn select_policy(run: &RunSummary, preferred: PolicyKind, side: &str) -> Result<PolicyKind> {
    let present = policies(run);
    if present.len() == 1 {
        return Ok(*present.first().expect("one element"));
    }
    if present.contains(&preferred) {
        return Ok(preferred);
    }
    Err(Error::Argument(format!(
        "{side} run `{}` holds {} but no {preferred} results",
        run.experiment_id,
        present.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")
    )))
}

fn models_match(a: &str, b: &str) -> bool {
    a == b || a == NO_MODEL || b == NO_MODEL
}

/// Compares `base` against `hybrid`.
///
/// Unless overridden, a single-policy run stands for its policy and a
/// multi-policy run contributes `llm_only` (base side) or `llm_dl` (hybrid
/// side). Cells are matched on task and model; a cell without a model
/// matches any model. Both sides must cover the same tasks.
pub fn compare_runs(
    base: &RunSummary,
    hybrid: &RunSummary,
    base_policy: Option<PolicyKind>,
    hybrid_policy: Option<PolicyKind>,
) -> Result<Comparison> {
    let base_policy = match base_policy {
        Some(p) => p,
        None => select_policy(base, PolicyKind::LlmOnly, "base")?,
    };
    let hybrid_policy = match hybrid_policy {
        Some(p) => p,
        None => select_policy(hybrid, PolicyKind::LlmDl, "hybrid")?,
    };
    let base_cells: Vec<&CellSummary> = base.cells.iter().filter(|c| c.policy == base_policy).collect();
    let hybrid_cells: Vec<&CellSummary> = hybrid.cells.iter().filter(|c| c.policy == hybrid_policy).collect();
    let tasks = |cells: &[&CellSummary]| cells.iter().map(|c| c.metrics.task).collect::<BTreeSet<_>>();
    let (base_tasks, hybrid_tasks) = (tasks(&base_cells), tasks(&hybrid_cells));
    if base_tasks.is_empty() || base_tasks != hybrid_tasks {
        return Err(Error::Argument(format!(
            "incompatible tasks: {base_policy} covers {:?}, {hybrid_policy} covers {:?}",
            base_tasks.iter().map(|t| t.name()).collect::<Vec<_>>(),
            hybrid_tasks.iter().map(|t| t.name()).collect::<Vec<_>>()
        )));
    }

    let mut rows = Vec::new();
    for h in &hybrid_cells {
        let Some(b) = base_cells
            .iter()
            .find(|b| b.metrics.task == h.metrics.task && models_match(&b.model, &h.model))
        else {
            continue;
        };
        let mut row = relative_improvement(&b.metrics, &h.metrics)?;
        row.model = if h.model == NO_MODEL { b.model.clone() } else { h.model.clone() };
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Argument("no cells share a task and model".into()));
    }
    rows.sort_by(|a, b| (a.task, &a.model).cmp(&(b.task, &b.model)));
    let aggregate = aggregate_across(&rows)?;

    let mut notices = Vec::new();
    let ablation = ablation(base, hybrid, &mut notices)?;
    Ok(Comparison {
        base_policy,
        hybrid_policy,
        rows,
        aggregate,
        ablation,
        notices,
    })
}

fn ablation(a: &RunSummary, b: &RunSummary, notices: &mut Vec<String>) -> Result<Option<AblationSummary>> {
    let all: Vec<&CellSummary> = b.cells.iter().chain(&a.cells).collect();
    let missing: Vec<&str> = PolicyKind::ALL
        .into_iter()
        .filter(|p| !all.iter().any(|c| c.policy == *p))
        .map(PolicyKind::name)
        .collect();
    if !missing.is_empty() {
        notices.push(format!("ablation omitted: no {} results", missing.join(" or ")));
        return Ok(None);
    }
    let find = |policy: PolicyKind, task: TaskRelation, model: &str| {
        all.iter()
            .find(|c| c.policy == policy && c.metrics.task == task && models_match(&c.model, model))
    };
    let mut rows = Vec::new();
    for h in all.iter().filter(|c| c.policy == PolicyKind::LlmDl) {
        let task = h.metrics.task;
        if rows.iter().any(|r: &AblationRow| r.task == task && r.model == h.model) {
            continue;
        }
        let (Some(dl), Some(llm)) = (find(PolicyKind::DlOnly, task, &h.model), find(PolicyKind::LlmOnly, task, &h.model))
        else {
            continue;
        };
        let (delta_symbolic, delta_neural) = ablation_deltas(&h.metrics, &dl.metrics, &llm.metrics)?;
        rows.push(AblationRow {
            task,
            model: h.model.clone(),
            delta_symbolic,
            delta_neural,
        });
    }
    if rows.is_empty() {
        notices.push("ablation omitted: no task has results for all three policies".into());
        return Ok(None);
    }
    rows.sort_by(|a, b| (a.task, &a.model).cmp(&(b.task, &b.model)));
    let pick = |f: fn(&AblationRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(Some(AblationSummary {
        delta_symbolic: pick(|r| r.delta_symbolic)?,
        delta_neural: pick(|r| r.delta_neural)?,
        rows,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::report::SUMMARY_FORMAT_VERSION;
    use crate::eval::MetricsSummary;
    use crate::geometry::WorkspaceConfig;

    fn cell(policy: PolicyKind, model: &str, task: TaskRelation, sr: f64, avg: Option<f64>) -> CellSummary {
        CellSummary {
            policy,
            model: model.into(),
            metrics: MetricsSummary {
                task,
                episodes: 20,
                successes: (sr * 20.0).round() as usize,
                success_rate: sr,
                success_rate_std: 0.0,
                avg_steps: avg,
                steps_std: avg.map(|_| 0.0),
                parse_failures: 0,
                backend_failures: 0,
            },
        }
    }

    fn run(cells: Vec<CellSummary>) -> RunSummary {
        RunSummary {
            format_version: SUMMARY_FORMAT_VERSION,
            experiment_id: "x".into(),
            backend: "oracle".into(),
            reproducible: true,
            prompt_version: "v1".into(),
            prompt_hash: String::new(),
            batch_seed: 0,
            workspace: WorkspaceConfig::default(),
            cells,
        }
    }

    #[test]
    fn self_comparison_is_identity() {
        let a = run(TaskRelation::ALL
            .into_iter()
            .map(|t| cell(PolicyKind::LlmOnly, "phi", t, 0.5, Some(3.0)))
            .collect());
        let c = compare_runs(&a, &a, None, None).unwrap();
        assert_eq!(c.rows.len(), 4);
        for r in &c.rows {
            assert_eq!((r.delta_sr, r.step_reduction, r.speedup), (0.0, Some(0.0), Some(1.0)));
        }
        assert!(c.ablation.is_none());
        assert!(c.notices[0].contains("dl_only"));
    }

    #[test]
    fn four_task_rows_and_ablation() {
        let mut cells = Vec::new();
        for t in TaskRelation::ALL {
            cells.push(cell(PolicyKind::LlmOnly, "phi", t, 0.6, Some(4.0)));
            cells.push(cell(PolicyKind::LlmDl, "phi", t, 1.0, Some(1.0)));
            cells.push(cell(PolicyKind::DlOnly, NO_MODEL, t, 0.9, Some(5.0)));
        }
        let a = run(cells);
        let c = compare_runs(&a, &a, None, None).unwrap();
        assert_eq!(c.rows.len(), 4);
        assert!(c.rows.iter().all(|r| r.speedup == Some(4.0) && r.step_reduction == Some(75.0)));
        let ab = c.ablation.unwrap();
        assert_eq!(ab.rows.len(), 4);
        assert!((ab.delta_symbolic.mean - 0.1).abs() < 1e-12);
        assert!((ab.delta_neural.mean - 0.4).abs() < 1e-12);
    }

    #[test]
    fn incompatible_tasks_are_rejected() {
        let a = run(vec![cell(PolicyKind::LlmOnly, "phi", TaskRelation::Above, 0.5, Some(1.0))]);
        let b = run(vec![cell(PolicyKind::LlmDl, "phi", TaskRelation::Below, 0.5, Some(1.0))]);
        assert!(matches!(compare_runs(&a, &b, None, None), Err(Error::Argument(_))));
    }

    #[test]
    fn dl_only_base_matches_every_model() {
        let a = run(vec![cell(PolicyKind::DlOnly, NO_MODEL, TaskRelation::Above, 0.9, Some(6.0))]);
        let b = run(vec![
            cell(PolicyKind::LlmDl, "phi", TaskRelation::Above, 0.8, Some(3.0)),
            cell(PolicyKind::LlmDl, "mistral", TaskRelation::Above, 1.0, Some(2.0)),
        ]);
        let c = compare_runs(&a, &b, None, None).unwrap();
        assert_eq!(c.rows.len(), 2);
        assert_eq!(c.rows[0].model, "mistral");
        assert_eq!(c.aggregate[0].rows, 2);
    }
}
