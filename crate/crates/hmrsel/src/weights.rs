//! JSON model files:
//! `{"version":1,"layers":[{"w":[[..]],"b":[..],"act":"relu","dropout":0.25}]}`
//! with `w` one row per output neuron.

use std::fs;
use std::path::Path;

use hmrsel_core::model::{Activation, DenseLayer};
use hmrsel_core::MlpModel;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Act,
    #[serde(default)]
    dropout: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Act {
    Relu,
    Softmax,
}

pub fn to_json(model: &MlpModel) -> String {
    let layers = model
        .layers()
        .iter()
        .map(|l| LayerFile {
            w: (0..l.outputs()).map(|o| l.row(o).to_vec()).collect(),
            b: l.bias().to_vec(),
            act: match l.activation() {
                Activation::Relu => Act::Relu,
                Activation::Softmax => Act::Softmax,
            },
            dropout: l.dropout(),
        })
        .collect();
    serde_json::to_string(&ModelFile {
        version: VERSION,
        layers,
    })
    .expect("model serialises")
}

pub fn from_json(text: &str, path: &Path) -> Result<MlpModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| HarnessError::malformed(path, e.to_string()))?;
    if file.version != VERSION {
        return Err(HarnessError::malformed(path, format!("unsupported version {}", file.version)));
    }
    let shape = |reason: String| HarnessError::ShapeMismatch {
        path: path.to_path_buf(),
        reason,
    };
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        let act = match l.act {
            Act::Relu => Activation::Relu,
            Act::Softmax => Activation::Softmax,
        };
        let layer = DenseLayer::from_rows(l.w, l.b, act, l.dropout).map_err(|e| shape(format!("layer {i}: {e}")))?;
        layers.push(layer);
    }
    MlpModel::new(layers).map_err(|e| shape(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    from_json(&text, path)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)).map_err(|e| HarnessError::io(path, e))
}
