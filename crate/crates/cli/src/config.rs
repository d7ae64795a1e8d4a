//! Experiment configuration: TOML file, environment and flag overrides.
//!
//! Precedence, highest first: command-line flags, the `NESY_ENDPOINT`
//! environment variable, the config file, built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use nesy_control::controller::TrainConfig;
use nesy_control::policy::PolicyKind;
use nesy_control::reasoner::{BackendKind, ReasonerBackendConfig, ENDPOINT_ENV};
use nesy_control::{Error, Result, TaskRelation, WorkspaceConfig};
use serde::{Deserialize, Serialize};

use crate::Overrides;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub episodes: usize,
    pub batch_seed: u64,
    pub tasks: Vec<TaskRelation>,
    pub policies: Vec<PolicyKind>,
    pub models: Vec<String>,
    /// Concurrent episodes per batch. Results do not depend on it.
    pub workers: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            episodes: 20,
            batch_seed: 0,
            tasks: TaskRelation::ALL.to_vec(),
            policies: PolicyKind::ALL.to_vec(),
            models: vec!["mistral".into(), "phi".into(), "llama3.2".into()],
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub output_dir: PathBuf,
    /// Train on this dataset file instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Model file to write (train) or read (eval). Defaults to
    /// `model.json` in the run directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub workspace: WorkspaceConfig,
    pub training: TrainConfig,
    pub reasoner: ReasonerBackendConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment_id: "default".into(),
            output_dir: PathBuf::from("runs"),
            dataset: None,
            model_path: None,
            workspace: WorkspaceConfig::default(),
            training: TrainConfig::default(),
            reasoner: ReasonerBackendConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Letters, digits, `-`, `_` and `.`, not starting with a dot.
pub fn is_filesystem_safe(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the file, then `env`, then flags.
    pub fn resolve(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: &Overrides,
    ) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(endpoint) = env(ENDPOINT_ENV).filter(|s| !s.is_empty()) {
            cfg.reasoner.endpoint = endpoint;
        }
        cfg.apply(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if !o.policy.is_empty() {
            self.evaluation.policies = o.policy.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if !o.model.is_empty() {
            self.evaluation.models = o.model.clone();
        }
        if !o.task.is_empty() {
            self.evaluation.tasks = o.task.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(n) = o.episodes {
            self.evaluation.episodes = n;
        }
        if let Some(seed) = o.seed {
            self.training.seed = seed;
            self.evaluation.batch_seed = seed;
        }
        if let Some(b) = &o.backend {
            self.reasoner.backend = b.parse::<BackendKind>()?;
        }
        if let Some(p) = o.error_rate {
            self.reasoner.error_rate = p;
        }
        if let Some(e) = &o.endpoint {
            self.reasoner.endpoint = e.clone();
        }
        if let Some(w) = o.workers {
            self.evaluation.workers = w;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !is_filesystem_safe(&self.experiment_id) {
            return Err(Error::Config(format!(
                "experiment_id `{}` must use only letters, digits, '-', '_' and '.'",
                self.experiment_id
            )));
        }
        self.workspace.validate()?;
        self.training.validate()?;
        self.reasoner.validate()?;
        let ev = &self.evaluation;
        if ev.episodes == 0 {
            return Err(Error::Config("evaluation.episodes must be at least 1".into()));
        }
        if ev.workers == 0 {
            return Err(Error::Config("evaluation.workers must be at least 1".into()));
        }
        if ev.tasks.is_empty() || ev.policies.is_empty() {
            return Err(Error::Config("evaluation needs at least one task and one policy".into()));
        }
        if ev.policies.iter().any(|p| p.uses_reasoner()) && ev.models.is_empty() {
            return Err(Error::Config("reasoner policies need at least one model".into()));
        }
        if let Some(m) = ev.models.iter().find(|m| !is_filesystem_safe(m)) {
            return Err(Error::Config(format!("model name `{m}` is not filesystem-safe")));
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.experiment_id)
    }

    pub fn model_file(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.run_dir().join("model.json"))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("c.toml");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn defaults_without_file() {
        let cfg = ExperimentConfig::resolve(None, no_env, &Overrides::default()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.workspace.side_length, 800.0);
        assert_eq!(cfg.evaluation.episodes, 20);
        assert_eq!(cfg.reasoner.backend, BackendKind::Oracle);
    }

    #[test]
    fn precedence_flags_env_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "experiment_id = \"x\"\n[reasoner]\nendpoint = \"http://file:1\"\nerror_rate = 0.2\n[evaluation]\nepisodes = 5\n",
        );
        let env = |k: &str| (k == ENDPOINT_ENV).then(|| "http://env:2".to_string());

        let cfg = ExperimentConfig::resolve(Some(&p), no_env, &Overrides::default()).unwrap();
        assert_eq!(cfg.reasoner.endpoint, "http://file:1");
        assert_eq!(cfg.evaluation.episodes, 5);
        assert_eq!(cfg.training.seed, 42);

        let cfg = ExperimentConfig::resolve(Some(&p), env, &Overrides::default()).unwrap();
        assert_eq!(cfg.reasoner.endpoint, "http://env:2");

        let flags = Overrides {
            endpoint: Some("http://flag:3".into()),
            episodes: Some(7),
            error_rate: Some(0.3),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(Some(&p), env, &flags).unwrap();
        assert_eq!(cfg.reasoner.endpoint, "http://flag:3");
        assert_eq!((cfg.evaluation.episodes, cfg.reasoner.error_rate), (7, 0.3));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for text in [
            "experiment_id = \"../escape\"\n",
            "[workspace]\nmargin = -1.0\n",
            "[evaluation]\ntasks = [\"inside\"]\n",
            "unknown_key = 1\n",
            "[training\n",
        ] {
            let p = write(dir.path(), text);
            assert!(
                matches!(ExperimentConfig::resolve(Some(&p), no_env, &Overrides::default()), Err(Error::Config(_))),
                "{text}"
            );
        }
        let flags = Overrides {
            task: vec!["diagonal".into()],
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(None, no_env, &flags).is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = Some("d.csv".into());
        cfg.evaluation.tasks = vec![TaskRelation::Below];
        let text = cfg.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn filesystem_safe_ids() {
        assert!(is_filesystem_safe("run-1_a.b"));
        for bad in ["", ".hidden", "a/b", "a b", "..", "é"] {
            assert!(!is_filesystem_safe(bad), "{bad}");
        }
    }
}
