//! The symbolic layer: prompts, response parsing and reasoner backends.
//!
//! A backend answers a [`Query`] with raw text, exactly as a language model
//! would. Three implementations exist:
//!
//! - [`LiveBackend`] talks HTTP to a local model server.
//! - [`OracleBackend`] answers with the ground truth.
//! - [`NoisyBackend`] answers with the ground truth corrupted at a configured
//!   rate, for studying weak reasoners without a model server.
//!
//! The simulated backends emit JSON text and go through the same parsers as
//! live replies.

mod live;
mod parse;
mod prompt;
mod simulated;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use live::{InFlightLimiter, LiveBackend};
pub use parse::{parse_coordinate_response, parse_symbolic_response};
pub use prompt::{
    build_coordinate_prompt, build_symbolic_prompt, prompt_hash, serialize_state, PromptContext,
    COORDINATE_TEMPLATE, PROMPT_VERSION, SYMBOLIC_TEMPLATE,
};
pub use simulated::{ideal_coordinates, NoisyBackend, OracleBackend};

use crate::error::{BackendError, Error, Result};
use crate::geometry::{EnvState, TaskRelation, WorkspaceConfig};
use crate::seed;

/// Environment variable that overrides the live endpoint URL.
pub const ENDPOINT_ENV: &str = "NESY_ENDPOINT";

/// What the caller expects back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    /// `{"relation": <0-3>}`
    Symbolic,
    /// `{"x": .., "y": ..}`
    Coordinate,
}

/// One request to a reasoner. Simulated backends read the ground truth from
/// `task` and `state`; the live backend only sees `prompt`.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub kind: QueryKind,
    pub prompt: &'a str,
    pub task: TaskRelation,
    pub state: &'a EnvState,
    pub ws: &'a WorkspaceConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    pub latency_ms: f64,
}

/// A parsed reasoner output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReasonerResponse {
    SymbolicLabel(TaskRelation),
    CoordinatePrediction { x: f64, y: f64 },
}

pub trait Reasoner: Send {
    fn query(&mut self, query: &Query<'_>) -> Result<Reply, BackendError>;

    /// Live backends make a run non-reproducible.
    fn is_live(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    #[default]
    Oracle,
    Noisy,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Live => "live",
            BackendKind::Oracle => "oracle",
            BackendKind::Noisy => "noisy",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(BackendKind::Live),
            "oracle" => Ok(BackendKind::Oracle),
            "noisy" => Ok(BackendKind::Noisy),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

/// How requests to the model server are shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStyle {
    /// `{"model": .., "prompt": .., ..extra}`
    #[default]
    Generate,
    /// `{"model": .., "messages": [{"role": "user", "content": ..}], ..extra}`
    Chat,
}

/// Maps the wire protocol onto a particular local server dialect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    pub path: String,
    pub style: RequestStyle,
    pub model_field: String,
    /// Field holding the prompt (generate) or the messages array (chat).
    pub prompt_field: String,
    /// JSON pointer to the reply text inside the response body.
    pub response_pointer: String,
    /// Extra fields copied verbatim into each request body.
    pub extra: BTreeMap<String, serde_json::Value>,
    /// Model name → server-side model tag. Names not listed pass through.
    pub model_tags: BTreeMap<String, String>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            path: "/api/generate".into(),
            style: RequestStyle::Generate,
            model_field: "model".into(),
            prompt_field: "prompt".into(),
            response_pointer: "/response".into(),
            extra: BTreeMap::from([
                ("format".to_string(), serde_json::Value::from("json")),
                ("stream".to_string(), serde_json::Value::from(false)),
            ]),
            model_tags: BTreeMap::new(),
        }
    }
}

impl AdapterConfig {
    /// Dialect for servers exposing an OpenAI-style chat completion route.
    pub fn chat_completions() -> Self {
        Self {
            path: "/v1/chat/completions".into(),
            style: RequestStyle::Chat,
            prompt_field: "messages".into(),
            response_pointer: "/choices/0/message/content".into(),
            extra: BTreeMap::from([("stream".to_string(), serde_json::Value::from(false))]),
            ..Self::default()
        }
    }

    pub fn model_tag<'a>(&'a self, model: &'a str) -> &'a str {
        self.model_tags.get(model).map_or(model, String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReasonerBackendConfig {
    pub backend: BackendKind,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Probability that the noisy backend returns a wrong label.
    pub error_rate: f64,
    /// Standard deviation of the noisy backend's coordinate predictions.
    pub coord_noise_std: f64,
    /// Probability that a noisy coordinate prediction is uniform over the
    /// workspace instead.
    pub hallucination_rate: f64,
    pub seed: u64,
    /// Query the reasoner once per episode instead of every step.
    pub label_cache: bool,
    /// Upper bound on concurrent live requests.
    pub max_in_flight: usize,
    pub adapter: AdapterConfig,
}

impl Default for ReasonerBackendConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Oracle,
            endpoint: "http://127.0.0.1:11434".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            error_rate: 0.0,
            coord_noise_std: 150.0,
            hallucination_rate: 0.15,
            seed: 0,
            label_cache: false,
            max_in_flight: 1,
            adapter: AdapterConfig::default(),
        }
    }
}

impl ReasonerBackendConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("error_rate", self.error_rate),
            ("hallucination_rate", self.hallucination_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.coord_noise_std >= 0.0 && self.coord_noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "coord_noise_std must be non-negative, got {}",
                self.coord_noise_std
            )));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if self.backend == BackendKind::Live && !self.endpoint.starts_with("http://") {
            return Err(Error::Config(format!(
                "live endpoint must be an http:// URL, got `{}`",
                self.endpoint
            )));
        }
        Ok(())
    }

    /// Builds the backend for one episode. Simulated backends draw from a
    /// stream keyed by the episode seed, the model name and `self.seed`.
    pub fn build(
        &self,
        model: &str,
        episode_seed: u64,
        limiter: Option<&InFlightLimiter>,
    ) -> Box<dyn Reasoner> {
        match self.backend {
            BackendKind::Oracle => Box::new(OracleBackend),
            BackendKind::Noisy => {
                let s = seed::derive(
                    seed::derive(episode_seed, seed::stream::REASONER),
                    seed::hash_str(model) ^ self.seed,
                );
                Box::new(NoisyBackend::new(
                    self.error_rate,
                    self.coord_noise_std,
                    self.hallucination_rate,
                    s,
                ))
            }
            BackendKind::Live => Box::new(LiveBackend::new(
                self,
                model,
                limiter.cloned().unwrap_or_else(|| InFlightLimiter::new(self.max_in_flight)),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ReasonerBackendConfig::default().validate().is_ok());
        let bad = [
            ReasonerBackendConfig { error_rate: 1.5, ..Default::default() },
            ReasonerBackendConfig { timeout_ms: 0, ..Default::default() },
            ReasonerBackendConfig { hallucination_rate: -0.1, ..Default::default() },
            ReasonerBackendConfig {
                backend: BackendKind::Live,
                endpoint: "localhost:11434".into(),
                ..Default::default()
            },
        ];
        for b in bad {
            assert!(b.validate().is_err(), "{b:?}");
        }
    }

    #[test]
    fn adapter_model_tags() {
        let mut a = AdapterConfig::default();
        a.model_tags.insert("llama3.2".into(), "llama3.2:3b".into());
        assert_eq!(a.model_tag("llama3.2"), "llama3.2:3b");
        assert_eq!(a.model_tag("phi"), "phi");
    }
}
