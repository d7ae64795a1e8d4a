use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nesy_control::controller::{
    generate_dataset, load_model, read_dataset, save_model, train_on, write_dataset,
    write_loss_curve, DeltaController,
};
use nesy_control::eval::{
    compare_runs, read_summary, run_batch, summarize, write_cell, write_comparison, write_summary,
    BatchSpec, CellSummary, Comparison, RunSummary, NO_MODEL, SUMMARY_FORMAT_VERSION,
};
use nesy_control::policy::PolicyKind;
use nesy_control::reasoner::{prompt_hash, BackendKind, LiveBackend, PROMPT_VERSION};
use nesy_control::{Error, Result};

use crate::config::ExperimentConfig;
use crate::Overrides;

/// Resolves the config, prints it to stderr and saves it in the run
/// directory.
fn load(o: &Overrides) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::resolve(o.config.as_deref(), |k| std::env::var(k).ok(), o)?;
    let text = cfg.to_toml()?;
    eprintln!("# effective config\n{text}");
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join("effective_config.toml");
    fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(cfg)
}

pub fn gen_data(o: &Overrides) -> Result<()> {
    let cfg = load(o)?;
    let data = generate_dataset(&cfg.training, &cfg.workspace);
    let path = cfg.run_dir().join("dataset.csv");
    write_dataset(&path, &data)?;
    println!(
        "wrote {} samples (seed {}) to {}",
        data.len(),
        cfg.training.seed,
        path.display()
    );
    Ok(())
}

pub fn train(o: &Overrides) -> Result<()> {
    let cfg = load(o)?;
    let data = match &cfg.dataset {
        Some(p) => read_dataset(p)?,
        None => generate_dataset(&cfg.training, &cfg.workspace),
    };
    let outcome = train_on(&cfg.training, &cfg.workspace, &data)?;
    let model = cfg.model_file();
    if let Some(parent) = model.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Config(format!("cannot create {}: {e}", parent.display())))?;
    }
    save_model(&model, &outcome.controller)?;
    let curve = cfg.run_dir().join("loss_curve.csv");
    write_loss_curve(&curve, &outcome.loss_curve)?;
    println!("trained on {} samples for {} epochs", data.len(), outcome.loss_curve.len());
    println!("final loss: {}", outcome.final_loss());
    println!("model: {}", model.display());
    println!("loss curve: {}", curve.display());
    Ok(())
}

/// `(policy, model)` pairs of the matrix; controller-only cells get
/// [`NO_MODEL`].
fn matrix(cfg: &ExperimentConfig) -> Vec<(PolicyKind, String)> {
    let mut cells = Vec::new();
    for &policy in &cfg.evaluation.policies {
        if policy.uses_reasoner() {
            cells.extend(cfg.evaluation.models.iter().map(|m| (policy, m.clone())));
        } else {
            cells.push((policy, NO_MODEL.to_string()));
        }
    }
    cells
}

fn load_controller(cfg: &ExperimentConfig) -> Result<Option<DeltaController>> {
    if !cfg.evaluation.policies.iter().any(|p| p.uses_controller()) {
        return Ok(None);
    }
    let path = cfg.model_file();
    if !path.exists() {
        return Err(Error::Config(format!(
            "no trained model at {}; run `nesy-bench train` first",
            path.display()
        )));
    }
    load_model(&path).map(Some)
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

pub fn eval(o: &Overrides) -> Result<()> {
    let cfg = load(o)?;
    let live = cfg.reasoner.backend == BackendKind::Live
        && cfg.evaluation.policies.iter().any(|p| p.uses_reasoner());
    if live {
        LiveBackend::probe(&cfg.reasoner.endpoint, Duration::from_millis(cfg.reasoner.timeout_ms))?;
    }
    let controller = load_controller(&cfg)?;
    let dir = cfg.run_dir();
    let mut cells = Vec::new();
    for (policy, model) in matrix(&cfg) {
        for &task in &cfg.evaluation.tasks {
            let spec = BatchSpec {
                policy,
                model: model.clone(),
                backend: cfg.reasoner.clone(),
                task,
                episodes: cfg.evaluation.episodes,
                batch_seed: cfg.evaluation.batch_seed,
                workspace: cfg.workspace,
            };
            let records = run_batch(&spec, controller.as_ref(), cfg.evaluation.workers)?;
            write_cell(&dir, policy, &model, &records, live && policy.uses_reasoner())?;
            let failed = records.iter().filter(|r| r.failure.is_some()).count();
            if failed > 0 {
                eprintln!("warning: {failed} {policy}/{model}/{task} episodes ended on backend errors");
            }
            cells.push(CellSummary {
                policy,
                model: model.clone(),
                metrics: summarize(&records)?,
            });
        }
    }
    let summary = RunSummary {
        format_version: SUMMARY_FORMAT_VERSION,
        experiment_id: cfg.experiment_id.clone(),
        backend: cfg.reasoner.backend.name().to_string(),
        reproducible: !live,
        prompt_version: PROMPT_VERSION.to_string(),
        prompt_hash: prompt_hash(),
        batch_seed: cfg.evaluation.batch_seed,
        workspace: cfg.workspace,
        cells,
    };
    let path = write_summary(&dir, &summary)?;
    print_summary(&summary);
    println!("summary: {}", path.display());
    Ok(())
}

fn print_summary(s: &RunSummary) {
    println!(
        "{:<12} {:<9} {:<9} {:>6} {:>7} {:>7}",
        "model", "policy", "task", "SR", "AS", "AS std"
    );
    for c in &s.cells {
        let m = &c.metrics;
        println!(
            "{:<12} {:<9} {:<9} {:>6.2} {:>7} {:>7}",
            c.model,
            c.policy.name(),
            m.task.name(),
            m.success_rate,
            fmt_opt(m.avg_steps, 2),
            fmt_opt(m.steps_std, 2)
        );
    }
    if !s.reproducible {
        println!("(live backend: results are not bit-reproducible)");
    }
}

pub fn compare(
    base: &Path,
    hybrid: &Path,
    base_policy: Option<String>,
    hybrid_policy: Option<String>,
    o: &Overrides,
) -> Result<()> {
    let a = read_summary(base)?;
    let b = read_summary(hybrid)?;
    let parse = |p: Option<String>| p.map(|s| s.parse::<PolicyKind>()).transpose();
    let cmp = compare_runs(&a, &b, parse(base_policy)?, parse(hybrid_policy)?)?;
    let out = o.out.clone().unwrap_or_else(|| default_compare_dir(hybrid));
    let paths = write_comparison(&out, &cmp)?;
    print_comparison(&cmp);
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn default_compare_dir(hybrid: &Path) -> PathBuf {
    if hybrid.is_dir() {
        hybrid.to_owned()
    } else {
        hybrid.parent().map_or_else(|| PathBuf::from("."), Path::to_owned)
    }
}

fn print_comparison(c: &Comparison) {
    println!("{} vs {}", c.base_policy, c.hybrid_policy);
    println!("{:<12} {:<9} {:>7} {:>9} {:>8}", "model", "task", "dSR", "rho %", "speedup");
    for r in &c.rows {
        println!(
            "{:<12} {:<9} {:>+7.2} {:>9} {:>8}",
            r.model,
            r.task.name(),
            r.delta_sr,
            fmt_opt(r.step_reduction, 1),
            fmt_opt(r.speedup, 2)
        );
    }
    println!("mean ± sample std across models");
    for a in &c.aggregate {
        let ms = |m: Option<nesy_control::eval::MeanStd>, p: usize| {
            m.map_or_else(|| "-".to_string(), |m| format!("{:.p$} ± {:.p$}", m.mean, m.std))
        };
        println!(
            "{:<9} n={} dSR {}  rho {}  speedup {}",
            a.task.name(),
            a.rows,
            ms(Some(a.delta_sr), 2),
            ms(a.step_reduction, 1),
            ms(a.speedup, 2)
        );
    }
    if let Some(ab) = &c.ablation {
        println!(
            "ablation: delta_symbolic {:.2} ± {:.2}, delta_neural {:.2} ± {:.2} (n={})",
            ab.delta_symbolic.mean, ab.delta_symbolic.std, ab.delta_neural.mean, ab.delta_neural.std, ab.rows.len()
        );
    }
    for n in &c.notices {
        println!("note: {n}");
    }
}
