//! CSV and JSON artifacts of an experiment run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::compare::Comparison;
use super::metrics::MetricsSummary;
use crate::error::{Error, Result};
use crate::geometry::{TaskRelation, WorkspaceConfig};
use crate::policy::{EpisodeRecord, PolicyKind};

pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_FORMAT_VERSION: u32 = 1;

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: PolicyKind,
    pub model: String,
    pub metrics: MetricsSummary,
}

/// Everything `summary.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub experiment_id: String,
    pub backend: String,
    /// False for runs against a live model server, whose replies cannot be
    /// replayed.
    pub reproducible: bool,
    pub prompt_version: String,
    pub prompt_hash: String,
    pub batch_seed: u64,
    pub workspace: WorkspaceConfig,
    pub cells: Vec<CellSummary>,
}

/// `{policy}_{model}_{task}`
pub fn cell_stem(policy: PolicyKind, model: &str, task: TaskRelation) -> String {
    format!("{policy}_{model}_{task}")
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    episode: usize,
    task: &'a str,
    policy: &'a str,
    model: &'a str,
    success: bool,
    steps: usize,
    parse_failures: usize,
}

#[derive(Serialize)]
struct TraceRow {
    episode: usize,
    step: usize,
    d: f64,
    d_norm: f64,
}

#[derive(Serialize)]
struct LatencyRow {
    episode: usize,
    call: usize,
    latency_ms: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_owned(),
        source,
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|source| Error::Csv {
            path: path.to_owned(),
            source,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the episode table and the distance traces of one cell into `dir`,
/// plus per-call latencies when `with_latency` is set. Returns the paths
/// written.
pub fn write_cell(
    dir: &Path,
    policy: PolicyKind,
    model: &str,
    records: &[EpisodeRecord],
    with_latency: bool,
) -> Result<Vec<PathBuf>> {
    let Some(first) = records.first() else {
        return Err(Error::Argument("no episodes to write".into()));
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = cell_stem(policy, model, first.task);
    let episodes = dir.join(format!("{stem}.csv"));
    write_rows(
        &episodes,
        records.iter().enumerate().map(|(i, r)| EpisodeRow {
            episode: i,
            task: r.task.name(),
            policy: policy.name(),
            model,
            success: r.success,
            steps: r.steps,
            parse_failures: r.parse_failures,
        }),
    )?;
    let traces = dir.join(format!("{stem}_trace.csv"));
    write_rows(
        &traces,
        records.iter().enumerate().flat_map(|(i, r)| {
            r.distance_trace
                .iter()
                .zip(&r.normalized_trace)
                .enumerate()
                .map(move |(step, (&d, &d_norm))| TraceRow {
                    episode: i,
                    step,
                    d,
                    d_norm,
                })
        }),
    )?;
    let mut written = vec![episodes, traces];
    if with_latency {
        let latency = dir.join(format!("{stem}_latency.csv"));
        write_rows(
            &latency,
            records.iter().enumerate().flat_map(|(i, r)| {
                r.reasoner_latencies
                    .iter()
                    .enumerate()
                    .map(move |(call, &latency_ms)| LatencyRow {
                        episode: i,
                        call,
                        latency_ms,
                    })
            }),
        )?;
        written.push(latency);
    }
    Ok(written)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SUMMARY_FILE);
    write_json(&path, summary)?;
    Ok(path)
}

/// Reads `summary.json` from a run directory, or from `path` itself if it
/// names a file.
pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let file = if path.is_dir() {
        path.join(SUMMARY_FILE)
    } else {
        path.to_owned()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let summary: RunSummary = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: file.clone(),
        source,
    })?;
    if summary.format_version != SUMMARY_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "{}: unsupported summary format version {}",
            file.display(),
            summary.format_version
        )));
    }
    Ok(summary)
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    task: &'a str,
    model: &'a str,
    delta_sr: f64,
    step_reduction_pct: Option<f64>,
    speedup: Option<f64>,
    note: Option<&'a str>,
}

/// Writes `comparison.json` and the per-row `comparison.csv`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("comparison.json");
    write_json(&json, cmp)?;
    let csv = dir.join("comparison.csv");
    write_rows(
        &csv,
        cmp.rows.iter().map(|r| ComparisonRow {
            task: r.task.name(),
            model: &r.model,
            delta_sr: r.delta_sr,
            step_reduction_pct: r.step_reduction,
            speedup: r.speedup,
            note: r.note.as_deref(),
        }),
    )?;
    Ok(vec![json, csv])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{run_batch, summarize, BatchSpec};
    use crate::reasoner::{BackendKind, ReasonerBackendConfig};

    fn records(episodes: usize) -> Vec<EpisodeRecord> {
        let spec = BatchSpec {
            policy: PolicyKind::LlmOnly,
            model: "phi".into(),
            backend: ReasonerBackendConfig {
                backend: BackendKind::Noisy,
                ..Default::default()
            },
            task: TaskRelation::Above,
            episodes,
            batch_seed: 3,
            workspace: WorkspaceConfig::default(),
        };
        run_batch(&spec, None, 1).unwrap()
    }

    #[test]
    fn episode_and_trace_files() {
        let recs = records(20);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_cell(dir.path(), PolicyKind::LlmOnly, "phi", &recs, false).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[0].ends_with("llm_only_phi_above.csv"));
        let episodes = fs::read_to_string(&paths[0]).unwrap();
        let mut lines = episodes.lines();
        assert_eq!(lines.next(), Some("episode,task,policy,model,success,steps,parse_failures"));
        assert_eq!(lines.count(), 20);

        let mut r = csv::Reader::from_path(&paths[1]).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["episode", "step", "d", "d_norm"]);
        let mut per_episode = vec![0usize; 20];
        for row in r.records() {
            per_episode[row.unwrap()[0].parse::<usize>().unwrap()] += 1;
        }
        for (rec, n) in recs.iter().zip(per_episode) {
            assert_eq!(n, rec.steps + 1);
        }
    }

    #[test]
    fn latency_file_only_on_request() {
        let recs = records(3);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_cell(dir.path(), PolicyKind::LlmOnly, "phi", &recs, true).unwrap();
        let text = fs::read_to_string(&paths[2]).unwrap();
        assert!(text.starts_with("episode,call,latency_ms\n"));
        let calls: usize = recs.iter().map(|r| r.reasoner_latencies.len()).sum();
        assert_eq!(text.lines().count(), calls + 1);
    }

    #[test]
    fn summary_round_trip() {
        let recs = records(20);
        let summary = RunSummary {
            format_version: SUMMARY_FORMAT_VERSION,
            experiment_id: "t".into(),
            backend: "noisy".into(),
            reproducible: true,
            prompt_version: "v1".into(),
            prompt_hash: crate::reasoner::prompt_hash(),
            batch_seed: 3,
            workspace: WorkspaceConfig::default(),
            cells: vec![
                CellSummary {
                    policy: PolicyKind::LlmOnly,
                    model: "phi".into(),
                    metrics: summarize(&recs).unwrap(),
                },
                CellSummary {
                    policy: PolicyKind::LlmOnly,
                    model: "phi".into(),
                    metrics: MetricsSummary {
                        avg_steps: None,
                        steps_std: None,
                        success_rate: 0.1 + 0.2,
                        ..summarize(&recs).unwrap()
                    },
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        write_summary(dir.path(), &summary).unwrap();
        assert_eq!(read_summary(dir.path()).unwrap(), summary);
        assert!(read_summary(&dir.path().join("missing.json")).is_err());
    }
}
