use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{Activation, ClassifierModel, Layer};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT_NAME: &str = "fisens-model";

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    activation: String,
    /// Row-major, `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// JSON document with shortest round-trip decimal floats.
pub fn model_to_json(model: &ClassifierModel) -> Result<String> {
    let doc = ModelDoc {
        format: MODEL_FORMAT_NAME.into(),
        version: MODEL_FORMAT_VERSION,
        layers: model
            .layers()
            .iter()
            .map(|l| LayerDoc {
                inputs: l.inputs(),
                outputs: l.outputs(),
                activation: l.activation().to_string(),
                weights: l.weights().as_slice().to_vec(),
                bias: l.bias().to_vec(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn model_from_json(text: &str) -> Result<ClassifierModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT_NAME) {
        return Err(Error::Format(format!("not a {MODEL_FORMAT_NAME} document")));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("model document has no version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let doc: ModelDoc = serde_json::from_value(value)?;
    let layers = doc
        .layers
        .into_iter()
        .map(|l| {
            let activation: Activation = l.activation.parse()?;
            let weights = DenseMatrix::new(l.outputs, l.inputs, l.weights)
                .map_err(|e| Error::InvalidModel(format!("layer weights: {e}")))?;
            Layer::new(weights, l.bias, activation)
        })
        .collect::<Result<Vec<_>>>()?;
    ClassifierModel::new(layers)
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
