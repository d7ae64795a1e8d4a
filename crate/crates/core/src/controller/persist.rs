//! Model file: a versioned JSON document.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "layer_sizes": [8, 64, 64, 2],
//!   "encoding": "one_hot",
//!   "delta_max": 40.0,
//!   "layers": [{ "weights": [...], "biases": [...] }, ...]
//! }
//! ```
//!
//! Weights are flattened row-major (`outputs × inputs`). Floats are written
//! in shortest round-trip form, so load(save(x)) == x bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoding::EncodingMode;
use super::mlp::{DenseLayer, MlpParams};
use super::train::EpochLoss;
use super::DeltaController;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    encoding: EncodingMode,
    delta_max: f64,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

pub fn save_model(path: &Path, ctrl: &DeltaController) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        layer_sizes: ctrl.params.layer_sizes(),
        encoding: ctrl.encoding,
        delta_max: ctrl.max_step,
        layers: ctrl
            .params
            .layers()
            .iter()
            .map(|l| LayerFile {
                weights: l.weights.clone(),
                biases: l.biases.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<DeltaController> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format_version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.layer_sizes.len() != file.layers.len() + 1 {
        return Err(Error::ModelFormat(format!(
            "{} layer sizes do not describe {} layers",
            file.layer_sizes.len(),
            file.layers.len()
        )));
    }
    if !(file.delta_max > 0.0 && file.delta_max.is_finite()) {
        return Err(Error::ModelFormat(format!("invalid delta_max {}", file.delta_max)));
    }
    let layers = file
        .layers
        .into_iter()
        .zip(file.layer_sizes.windows(2))
        .map(|(l, w)| DenseLayer {
            inputs: w[0],
            outputs: w[1],
            weights: l.weights,
            biases: l.biases,
        })
        .collect();
    let params = MlpParams::new(layers).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if params.input_dim() != file.encoding.input_dim() {
        return Err(Error::ModelFormat(format!(
            "input width {} does not match {} encoding",
            params.input_dim(),
            file.encoding
        )));
    }
    Ok(DeltaController {
        params,
        encoding: file.encoding,
        max_step: file.delta_max,
    })
}

/// `epoch,loss` rows, one per epoch.
pub fn write_loss_curve(path: &Path, curve: &[EpochLoss]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in curve {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctrl(seed: u64) -> DeltaController {
        DeltaController {
            params: MlpParams::init(&[8, 16, 2], seed).unwrap(),
            encoding: EncodingMode::OneHot,
            max_step: 40.0,
        }
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let c = ctrl(3);
        save_model(&path, &c).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, c);
        let bits = |c: &DeltaController| c.params.values().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&c));
        // Saving the reloaded model reproduces the file byte for byte.
        let again = dir.path().join("again.json");
        save_model(&again, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &ctrl(1)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let v2 = text.replace("\"format_version\": 1", "\"format_version\": 2");
        std::fs::write(&path, v2).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));

        let scalar = text.replace("one_hot", "scalar");
        std::fs::write(&path, scalar).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));

        std::fs::write(&path, "{").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Json { .. })));
        assert!(matches!(
            load_model(&dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }
}
