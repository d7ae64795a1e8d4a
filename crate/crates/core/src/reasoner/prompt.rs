//! Prompt construction. The templates live in `prompts/*.txt` and are
//! versioned by file name; [`prompt_hash`] pins the exact wording a run used.

use sha2::{Digest, Sha256};

use crate::geometry::{EnvState, WorkspaceConfig};

pub const SYMBOLIC_TEMPLATE: &str = include_str!("../../prompts/symbolic_v1.txt");
pub const COORDINATE_TEMPLATE: &str = include_str!("../../prompts/coordinate_v1.txt");
pub const PROMPT_VERSION: &str = "v1";

/// Natural-language instruction plus the serialized state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    pub task_nl: String,
    state_text: String,
}

impl PromptContext {
    pub fn new(task_nl: impl Into<String>, state: &EnvState) -> Self {
        Self {
            task_nl: task_nl.into(),
            state_text: serialize_state(state),
        }
    }

    pub fn state_text(&self) -> &str {
        &self.state_text
    }
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// `red=(x,y) blue=(x,y)` with coordinates rounded half-up to integers.
pub fn serialize_state(state: &EnvState) -> String {
    format!(
        "red=({},{}) blue=({},{})",
        round_half_up(state.target_x),
        round_half_up(state.target_y),
        round_half_up(state.reference_x),
        round_half_up(state.reference_y)
    )
}

pub fn build_symbolic_prompt(ctx: &PromptContext) -> String {
    SYMBOLIC_TEMPLATE
        .replace("{instruction}", &ctx.task_nl)
        .replace("{state}", &ctx.state_text)
}

/// Prompt for the coordinate-predicting baseline.
pub fn build_coordinate_prompt(ctx: &PromptContext, ws: &WorkspaceConfig) -> String {
    COORDINATE_TEMPLATE
        .replace("{side_length}", &round_half_up(ws.side_length).to_string())
        .replace("{instruction}", &ctx.task_nl)
        .replace("{state}", &ctx.state_text)
}

/// Hex SHA-256 over both templates.
pub fn prompt_hash() -> String {
    let mut h = Sha256::new();
    h.update(SYMBOLIC_TEMPLATE.as_bytes());
    h.update([0u8]);
    h.update(COORDINATE_TEMPLATE.as_bytes());
    format!("{:x}", h.finalize())
}
