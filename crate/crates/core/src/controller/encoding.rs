use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{EnvState, TaskRelation, WorkspaceConfig};

/// How the task label is appended to the normalized state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// A single feature `index / 3`.
    Scalar,
    /// A 4-way indicator vector.
    #[default]
    OneHot,
}

impl EncodingMode {
    pub fn input_dim(self) -> usize {
        match self {
            EncodingMode::Scalar => 5,
            EncodingMode::OneHot => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EncodingMode::Scalar => "scalar",
            EncodingMode::OneHot => "one_hot",
        }
    }
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncodingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "scalar" => Ok(EncodingMode::Scalar),
            "one_hot" => Ok(EncodingMode::OneHot),
            other => Err(Error::Config(format!("unknown encoding `{other}`"))),
        }
    }
}

/// The task part of the controller input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskEncoding {
    Scalar(f64),
    OneHot([f64; 4]),
}

impl TaskEncoding {
    pub fn new(task: TaskRelation, mode: EncodingMode) -> Self {
        let n = TaskRelation::ALL.len();
        match mode {
            EncodingMode::Scalar => TaskEncoding::Scalar(task.index() as f64 / (n - 1) as f64),
            EncodingMode::OneHot => {
                let mut e = [0.0; 4];
                e[task.index()] = 1.0;
                TaskEncoding::OneHot(e)
            }
        }
    }

    fn as_slice(&self) -> &[f64] {
        match self {
            TaskEncoding::Scalar(v) => std::slice::from_ref(v),
            TaskEncoding::OneHot(e) => e,
        }
    }
}

/// Controller input: the four coordinates divided by `C`, then the task.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerInput(pub Vec<f64>);

impl ControllerInput {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode_input(
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    mode: EncodingMode,
) -> ControllerInput {
    let mut u = Vec::with_capacity(mode.input_dim());
    encode_into(state, task, ws, mode, &mut u);
    ControllerInput(u)
}

pub(crate) fn encode_into(
    state: &EnvState,
    task: TaskRelation,
    ws: &WorkspaceConfig,
    mode: EncodingMode,
    out: &mut Vec<f64>,
) {
    let c = ws.side_length;
    out.extend(state.as_array().iter().map(|v| v / c));
    out.extend_from_slice(TaskEncoding::new(task, mode).as_slice());
}
