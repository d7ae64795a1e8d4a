//! Success rate, average steps and the comparisons built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TaskRelation;
use crate::policy::EpisodeRecord;

/// Per-cell metrics.
///
/// `avg_steps` averages termination steps over *successful* episodes only,
/// zero-step successes included. It is `None` when nothing succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub task: TaskRelation,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Sample (n-1) standard deviation of the per-episode success indicator.
    pub success_rate_std: f64,
    pub avg_steps: Option<f64>,
    /// Sample (n-1) standard deviation of successful step counts; 0 for a
    /// single success.
    pub steps_std: Option<f64>,
    pub parse_failures: usize,
    pub backend_failures: usize,
}

/// Mean and sample standard deviation of a group of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    /// Sample (n-1) standard deviation. Reported as 0 when `n == 1`, with
    /// `single_sample` set.
    pub std: f64,
    pub single_sample: bool,
}

impl MeanStd {
    /// Values are sorted before summation, so the result does not depend on
    /// input order down to the last bit.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("mean/std of an empty group".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            n,
            mean,
            std,
            single_sample: n == 1,
        })
    }
}

pub fn summarize(records: &[EpisodeRecord]) -> Result<MetricsSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Argument("cannot summarize zero episodes".into()))?;
    if let Some(r) = records.iter().find(|r| r.task != first.task) {
        return Err(Error::Argument(format!(
            "records mix tasks {} and {}",
            first.task, r.task
        )));
    }
    let n = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let indicators: Vec<f64> = records
        .iter()
        .map(|r| if r.success { 1.0 } else { 0.0 })
        .collect();
    let steps: Vec<f64> = records
        .iter()
        .filter(|r| r.success)
        .map(|r| r.steps as f64)
        .collect();
    let step_stats = MeanStd::of(&steps).ok();
    Ok(MetricsSummary {
        task: first.task,
        episodes: n,
        successes,
        success_rate: successes as f64 / n as f64,
        success_rate_std: MeanStd::of(&indicators)?.std,
        avg_steps: step_stats.map(|s| s.mean),
        steps_std: step_stats.map(|s| s.std),
        parse_failures: records.iter().map(|r| r.parse_failures).sum(),
        backend_failures: records.iter().filter(|r| r.failure.is_some()).count(),
    })
}

/// Improvement of a hybrid run over a baseline on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub task: TaskRelation,
    pub model: String,
    pub delta_sr: f64,
    /// Percent fewer steps than the baseline; `None` when either average is
    /// undefined or the baseline average is 0.
    pub step_reduction: Option<f64>,
    /// Baseline average steps over hybrid average steps; `None` when either
    /// is undefined or the hybrid average is 0.
    pub speedup: Option<f64>,
    /// Why a component is undefined, if one is.
    pub note: Option<String>,
}

pub fn relative_improvement(base: &MetricsSummary, hybrid: &MetricsSummary) -> Result<ImprovementRow> {
    if base.task != hybrid.task {
        return Err(Error::Argument(format!(
            "cannot compare {} against {}",
            base.task, hybrid.task
        )));
    }
    let delta_sr = hybrid.success_rate - base.success_rate;
    let (step_reduction, speedup, note) = match (base.avg_steps, hybrid.avg_steps) {
        (None, _) => (None, None, Some("baseline has no successful episodes".to_string())),
        (_, None) => (None, None, Some("hybrid has no successful episodes".to_string())),
        (Some(b), Some(h)) => {
            let rho = (b > 0.0).then(|| (b - h) / b * 100.0);
            let sigma = (h > 0.0).then(|| b / h);
            let note = match (rho, sigma) {
                (None, _) => Some("baseline averages zero steps".to_string()),
                (_, None) => Some("hybrid averages zero steps".to_string()),
                _ => None,
            };
            (rho, sigma, note)
        }
    };
    Ok(ImprovementRow {
        task: hybrid.task,
        model: String::new(),
        delta_sr,
        step_reduction,
        speedup,
        note,
    })
}

/// `(hybrid - dl_only, hybrid - llm_only)` in success rate.
pub fn ablation_deltas(
    hybrid: &MetricsSummary,
    dl_only: &MetricsSummary,
    llm_only: &MetricsSummary,
) -> Result<(f64, f64)> {
    if hybrid.task != dl_only.task || hybrid.task != llm_only.task {
        return Err(Error::Argument(format!(
            "ablation over mismatched tasks {}, {}, {}",
            hybrid.task, dl_only.task, llm_only.task
        )));
    }
    Ok((
        hybrid.success_rate - dl_only.success_rate,
        hybrid.success_rate - llm_only.success_rate,
    ))
}

/// Per-task mean ± std of improvement rows (typically one row per model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: TaskRelation,
    pub rows: usize,
    pub delta_sr: MeanStd,
    /// Over rows where the component is defined; `None` if it never is.
    pub step_reduction: Option<MeanStd>,
    pub speedup: Option<MeanStd>,
}

/// Groups rows by task, in canonical task order.
pub fn aggregate_across(rows: &[ImprovementRow]) -> Result<Vec<AggregateRow>> {
    if rows.is_empty() {
        return Err(Error::Argument("nothing to aggregate".into()));
    }
    let mut out = Vec::new();
    for task in TaskRelation::ALL {
        let group: Vec<&ImprovementRow> = rows.iter().filter(|r| r.task == task).collect();
        if group.is_empty() {
            continue;
        }
        let pick = |f: fn(&ImprovementRow) -> Option<f64>| -> Option<MeanStd> {
            let v: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
            MeanStd::of(&v).ok()
        };
        out.push(AggregateRow {
            task,
            rows: group.len(),
            delta_sr: MeanStd::of(&group.iter().map(|r| r.delta_sr).collect::<Vec<_>>())?,
            step_reduction: pick(|r| r.step_reduction),
            speedup: pick(|r| r.speedup),
        });
    }
    Ok(out)
}
