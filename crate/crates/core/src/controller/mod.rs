//! The neural delta controller: a small MLP whose raw output is squashed by
//! `tanh` and scaled to a bounded per-axis displacement.

mod dataset;
mod encoding;
mod mlp;
mod persist;
mod train;

pub use dataset::{
    generate_dataset, raw_target_displacement, read_dataset, target_displacement, write_dataset,
    TrainingSample,
};
pub use encoding::{encode_input, ControllerInput, EncodingMode, TaskEncoding};
pub use mlp::{DenseLayer, MlpParams, OUTPUT_DIM};
pub use persist::{load_model, save_model, write_loss_curve, MODEL_FORMAT_VERSION};
pub use train::{
    adam_step, gradients, loss, train, train_on, AdamState, EpochLoss, TrainConfig, TrainOutcome,
};

use crate::error::Result;
use crate::geometry::{Action, EnvState, TaskRelation, WorkspaceConfig};

/// Scales a raw network output into `[-max_step, max_step]²`.
pub fn bounded_action(raw: [f64; 2], max_step: f64) -> Action {
    Action::new(max_step * raw[0].tanh(), max_step * raw[1].tanh())
}

/// Trained parameters together with the settings they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaController {
    pub params: MlpParams,
    pub encoding: EncodingMode,
    pub max_step: f64,
}

impl DeltaController {
    /// The bounded displacement for `state` conditioned on `task`.
    pub fn act(&self, state: &EnvState, task: TaskRelation, ws: &WorkspaceConfig) -> Result<Action> {
        let u = encode_input(state, task, ws, self.encoding);
        let raw = self.params.forward(u.as_slice())?;
        Ok(bounded_action(raw, self.max_step))
    }
}
