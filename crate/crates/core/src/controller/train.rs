//! Loss, backpropagation and Adam.
//!
//! The loss is measured on the *bounded* action, in pixels:
//!
//! ```text
//! a_i  = max_step * tanh(f(u_i))
//! L    = mean_i |a_i - t_i|^2  +  lambda * mean_i |a_i|^2
//! ```
//!
//! so the tanh stage is part of the differentiated graph.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_dataset, TrainingSample};
use super::encoding::{encode_into, EncodingMode};
use super::mlp::{Activations, MlpParams};
use super::DeltaController;
use crate::error::{Error, Result};
use crate::geometry::WorkspaceConfig;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub sample_count: usize,
    /// Fraction `alpha` of the gap covered by a target step.
    pub step_scale: f64,
    pub reg_coefficient: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub encoding: EncodingMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sample_count: 50_000,
            step_scale: 1.0,
            reg_coefficient: 0.0,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 20,
            batch_size: 256,
            seed: 42,
            hidden_layers: vec![64, 64],
            encoding: EncodingMode::OneHot,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sample_count == 0 {
            return fail("sample_count must be at least 1".into());
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return fail(format!("step_scale must lie in (0, 1], got {}", self.step_scale));
        }
        if !(self.reg_coefficient >= 0.0 && self.reg_coefficient.is_finite()) {
            return fail(format!(
                "reg_coefficient must be non-negative, got {}",
                self.reg_coefficient
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be at least 1".into());
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.encoding.input_dim())
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(2))
            .collect()
    }
}

/// Inputs encoded once up front, flat.
struct EncodedSet {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<[f64; 2]>,
}

impl EncodedSet {
    fn new(samples: &[TrainingSample], ws: &WorkspaceConfig, mode: EncodingMode) -> Self {
        let mut inputs = Vec::with_capacity(samples.len() * mode.input_dim());
        for s in samples {
            encode_into(&s.state, s.task, ws, mode, &mut inputs);
        }
        Self {
            dim: mode.input_dim(),
            inputs,
            targets: samples.iter().map(|s| [s.target.dx, s.target.dy]).collect(),
        }
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Reusable buffers for one loss/gradient evaluation.
struct Workspace {
    acts: Activations,
    deltas: Activations,
}

/// Mean loss over `indices`; when `grads` is given, the gradient of that
/// loss is *added* to it.
fn loss_and_grad(
    params: &MlpParams,
    max_step: f64,
    lambda: f64,
    set: &EncodedSet,
    indices: &[usize],
    mut grads: Option<&mut MlpParams>,
    buf: &mut Workspace,
) -> f64 {
    let scale = 1.0 / indices.len() as f64;
    let mut total = 0.0;
    for &i in indices {
        let raw = params.forward_cached(set.input(i), &mut buf.acts);
        let target = set.targets[i];
        let mut d_raw = [0.0; 2];
        for k in 0..2 {
            let th = raw[k].tanh();
            let a = max_step * th;
            let err = a - target[k];
            total += err * err + lambda * a * a;
            let d_a = 2.0 * scale * (err + lambda * a);
            d_raw[k] = d_a * max_step * (1.0 - th * th);
        }
        if let Some(g) = grads.as_deref_mut() {
            params.backward(&buf.acts, d_raw, g, &mut buf.deltas);
        }
    }
    total * scale
}

fn check_controller(ctrl: &DeltaController, batch: &[TrainingSample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Argument("loss needs a non-empty batch".into()));
    }
    let want = ctrl.encoding.input_dim();
    if ctrl.params.input_dim() != want {
        return Err(Error::Shape(format!(
            "network takes {} inputs but {} encoding produces {want}",
            ctrl.params.input_dim(),
            ctrl.encoding
        )));
    }
    Ok(())
}

/// Mean squared pixel error of the bounded action plus the `lambda`
/// penalty on its squared norm.
pub fn loss(
    ctrl: &DeltaController,
    batch: &[TrainingSample],
    lambda: f64,
    ws: &WorkspaceConfig,
) -> Result<f64> {
    check_controller(ctrl, batch)?;
    let set = EncodedSet::new(batch, ws, ctrl.encoding);
    let idx: Vec<usize> = (0..batch.len()).collect();
    let mut buf = Workspace {
        acts: Activations::for_params(&ctrl.params),
        deltas: Activations::for_params(&ctrl.params),
    };
    Ok(loss_and_grad(&ctrl.params, ctrl.max_step, lambda, &set, &idx, None, &mut buf))
}

/// Exact gradient of [`loss`] with respect to every weight and bias.
pub fn gradients(
    ctrl: &DeltaController,
    batch: &[TrainingSample],
    lambda: f64,
    ws: &WorkspaceConfig,
) -> Result<MlpParams> {
    check_controller(ctrl, batch)?;
    let set = EncodedSet::new(batch, ws, ctrl.encoding);
    let idx: Vec<usize> = (0..batch.len()).collect();
    let mut grads = ctrl.params.zeros_like();
    let mut buf = Workspace {
        acts: Activations::for_params(&ctrl.params),
        deltas: Activations::for_params(&ctrl.params),
    };
    loss_and_grad(
        &ctrl.params,
        ctrl.max_step,
        lambda,
        &set,
        &idx,
        Some(&mut grads),
        &mut buf,
    );
    Ok(grads)
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: MlpParams,
    v: MlpParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::Shape(
            "parameters, gradients and optimizer state differ in shape".into(),
        ));
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = cfg.adam_eps;
    for (((p, g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub controller: DeltaController,
    /// Sample-weighted mean minibatch loss for each epoch.
    pub loss_curve: Vec<EpochLoss>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// Generates the synthetic dataset for `cfg` and fits a controller to it.
pub fn train(cfg: &TrainConfig, ws: &WorkspaceConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ws.validate()?;
    let data = generate_dataset(cfg, ws);
    train_on(cfg, ws, &data)
}

/// Minibatch Adam over a given dataset. Single-threaded and deterministic
/// for a fixed `cfg.seed`.
pub fn train_on(
    cfg: &TrainConfig,
    ws: &WorkspaceConfig,
    data: &[TrainingSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ws.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let mut params = MlpParams::init(
        &cfg.layer_sizes(),
        seed::derive(cfg.seed, seed::stream::INIT_WEIGHTS),
    )?;
    let set = EncodedSet::new(data, ws, cfg.encoding);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = seed::rng(seed::derive(cfg.seed, seed::stream::SHUFFLE));
    let mut adam = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut buf = Workspace {
        acts: Activations::for_params(&params),
        deltas: Activations::for_params(&params),
    };
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill(0.0);
            let l = loss_and_grad(
                &params,
                ws.max_step,
                cfg.reg_coefficient,
                &set,
                batch,
                Some(&mut grads),
                &mut buf,
            );
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, loss: l });
            }
            weighted += l * batch.len() as f64;
            adam_step(&mut params, &grads, &mut adam, cfg)?;
        }
        curve.push(EpochLoss {
            epoch,
            loss: weighted / data.len() as f64,
        });
    }

    Ok(TrainOutcome {
        controller: DeltaController {
            params,
            encoding: cfg.encoding,
            max_step: ws.max_step,
        },
        loss_curve: curve,
    })
}
