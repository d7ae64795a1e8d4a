//! A small fully-connected network with ReLU hidden layers and an affine
//! output layer. Weights are `f64`, stored row-major as `outputs × inputs`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Number of raw outputs (one per axis).
pub const OUTPUT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn check(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::Shape("layer with zero width".into()));
        }
        if self.weights.len() != self.inputs * self.outputs {
            return Err(Error::Shape(format!(
                "weights hold {} values, expected {}x{}",
                self.weights.len(),
                self.outputs,
                self.inputs
            )));
        }
        if self.biases.len() != self.outputs {
            return Err(Error::Shape(format!(
                "biases hold {} values, expected {}",
                self.biases.len(),
                self.outputs
            )));
        }
        Ok(())
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Layer weights and biases. Also used as the shape of a gradient and of
/// the optimizer moment buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// Wraps existing layers after checking that their shapes chain and end
    /// in a two-unit output.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for l in &layers {
            l.check()?;
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer of width {} feeds a layer expecting {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        let last = layers.last().map(|l| l.outputs).unwrap_or_default();
        if last != OUTPUT_DIM {
            return Err(Error::Shape(format!(
                "output layer has {last} units, expected {OUTPUT_DIM}"
            )));
        }
        Ok(Self { layers })
    }

    /// All-zero parameters for the given `[input, hidden.., 2]` sizes.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape(
                "layer_sizes needs an input and an output width".into(),
            ));
        }
        Self::new(
            layer_sizes
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
        )
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        let mut rng = seed::rng(seed);
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Every parameter, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub(crate) fn fill(&mut self, v: f64) {
        self.values_mut().for_each(|x| *x = v);
    }

    /// Raw (pre-tanh) network output.
    pub fn forward(&self, input: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut acts = Activations::for_params(self);
        Ok(self.forward_cached(input, &mut acts))
    }

    /// Forward pass that keeps every layer's post-activation output for
    /// backpropagation. `input` must already have the right length.
    pub(crate) fn forward_cached(&self, input: &[f64], acts: &mut Activations) -> [f64; 2] {
        acts.values[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = acts.values.split_at_mut(l + 1);
            let out = &mut after[0];
            layer.affine(&before[l], out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let out = &acts.values[last + 1];
        [out[0], out[1]]
    }

    /// Accumulates `d_output` (gradient w.r.t. the raw output) into `grads`.
    pub(crate) fn backward(
        &self,
        acts: &Activations,
        d_output: [f64; 2],
        grads: &mut MlpParams,
        scratch: &mut Activations,
    ) {
        let last = self.layers.len() - 1;
        scratch.values[last + 1].copy_from_slice(&d_output);
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let input = &acts.values[l];
            let (lower, upper) = scratch.values.split_at_mut(l + 1);
            let delta = &upper[0];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if l == 0 {
                break;
            }
            // Gradient w.r.t. this layer's input, masked by the ReLU below it.
            let d_in = &mut lower[l];
            d_in.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (di, w) in d_in.iter_mut().zip(row) {
                    *di += d * w;
                }
            }
            for (di, a) in d_in.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *di = 0.0;
                }
            }
        }
    }
}

/// Per-layer buffers sized for one network.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    values: Vec<Vec<f64>>,
}

impl Activations {
    pub(crate) fn for_params(params: &MlpParams) -> Self {
        Self {
            values: params
                .layer_sizes()
                .into_iter()
                .map(|n| vec![0.0; n])
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straightforward matrix arithmetic, kept separate from the cached path.
    fn reference_forward(p: &MlpParams, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let n = p.layers().len();
        for (l, layer) in p.layers().iter().enumerate() {
            let mut y = vec![0.0; layer.outputs];
            for i in 0..layer.outputs {
                let mut acc = layer.biases[i];
                for j in 0..layer.inputs {
                    acc += layer.weights[i * layer.inputs + j] * x[j];
                }
                y[i] = if l + 1 < n { acc.max(0.0) } else { acc };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[8, 16, 2]).unwrap();
        assert_eq!(p.forward(&[0.3; 8]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn single_identity_layer_passes_first_two_inputs() {
        let mut layer = DenseLayer::zeros(5, 2);
        layer.weights[0] = 1.0;
        layer.weights[5 + 1] = 1.0;
        let p = MlpParams::new(vec![layer]).unwrap();
        assert_eq!(p.forward(&[0.5, 0.125, 0.3, 0.2, 1.0]).unwrap(), [0.5, 0.125]);
    }

    #[test]
    fn forward_matches_reference_on_random_params() {
        for seed in 0..20 {
            let p = MlpParams::init(&[8, 12, 7, 2], seed).unwrap();
            let mut rng = crate::seed::rng(seed + 1000);
            let input: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = p.forward(&input).unwrap();
            let want = reference_forward(&p, &input);
            for k in 0..2 {
                let scale = want[k].abs().max(1e-12);
                assert!((got[k] - want[k]).abs() / scale < 1e-10, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(MlpParams::zeros(&[8]), Err(Error::Shape(_))));
        assert!(matches!(MlpParams::zeros(&[8, 3]), Err(Error::Shape(_))));
        let p = MlpParams::zeros(&[8, 4, 2]).unwrap();
        assert!(matches!(p.forward(&[0.0; 5]), Err(Error::Shape(_))));
        let bad = vec![DenseLayer::zeros(8, 4), DenseLayer::zeros(5, 2)];
        assert!(MlpParams::new(bad).is_err());
        let mut broken = DenseLayer::zeros(3, 2);
        broken.weights.pop();
        assert!(MlpParams::new(vec![broken]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpParams::init(&[8, 64, 64, 2], 3).unwrap();
        assert_eq!(a, MlpParams::init(&[8, 64, 64, 2], 3).unwrap());
        assert_ne!(a, MlpParams::init(&[8, 64, 64, 2], 4).unwrap());
        assert_eq!(a.layer_sizes(), vec![8, 64, 64, 2]);
        assert_eq!(a.num_params(), 8 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    }
}
