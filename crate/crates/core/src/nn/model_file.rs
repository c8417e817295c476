//! Versioned JSON model file.
//!
//! Floats are written in shortest round-trip decimal form and parsed with
//! correct rounding, so a save/load cycle reproduces every parameter bit for
//! bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{EncodingSchema, Scaler};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;

use super::mlp::{Activation, Dense, Mlp};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    /// Row-major, `out x in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    version: u32,
    input_dim: usize,
    widths: Vec<usize>,
    activations: Vec<Activation>,
    layers: Vec<LayerRecord>,
    freeze_mask: Vec<bool>,
    schema: EncodingSchema,
    scaler: Scaler,
    seed: u64,
    config_fingerprint: String,
}

/// A network with everything needed to score raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub mlp: Mlp,
    pub schema: EncodingSchema,
    pub scaler: Scaler,
    pub seed: u64,
    pub config_fingerprint: String,
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("plain data serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn model_to_json(bundle: &ModelBundle) -> Result<String> {
    let mlp = &bundle.mlp;
    let doc = ModelDocument {
        version: MODEL_FORMAT_VERSION,
        input_dim: mlp.input_dim(),
        widths: mlp.widths(),
        activations: mlp.layers().iter().map(|l| l.activation).collect(),
        layers: mlp
            .layers()
            .iter()
            .map(|l| LayerRecord {
                weights: l.weights.as_slice().to_vec(),
                bias: l.bias.clone(),
            })
            .collect(),
        freeze_mask: mlp.freeze_mask().to_vec(),
        schema: bundle.schema.clone(),
        scaler: bundle.scaler.clone(),
        seed: bundle.seed,
        config_fingerprint: bundle.config_fingerprint.clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<ModelBundle> {
    // read the version first so an old file reports a version error, not a field error
    let probe: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    match probe.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Format(format!(
                "unsupported model version {v}, expected {MODEL_FORMAT_VERSION}"
            )))
        }
        None => return Err(Error::Format("missing model version".into())),
    }
    let doc: ModelDocument =
        serde_json::from_value(probe).map_err(|e| Error::Format(e.to_string()))?;

    let depth = doc.widths.len();
    if doc.activations.len() != depth || doc.layers.len() != depth {
        return Err(Error::Format(format!(
            "{} widths, {} activations, {} layers",
            depth,
            doc.activations.len(),
            doc.layers.len()
        )));
    }
    let mut fan_in = doc.input_dim;
    let mut layers = Vec::with_capacity(depth);
    for ((rec, &width), &activation) in doc
        .layers
        .into_iter()
        .zip(&doc.widths)
        .zip(&doc.activations)
    {
        let weights = Matrix::from_vec(width, fan_in, rec.weights)
            .map_err(|e| Error::Format(e.to_string()))?;
        layers.push(Dense {
            weights,
            bias: rec.bias,
            activation,
        });
        fan_in = width;
    }
    let mut mlp =
        Mlp::from_layers(doc.input_dim, layers).map_err(|e| Error::Format(e.to_string()))?;
    mlp.set_freeze_mask(doc.freeze_mask)
        .map_err(|e| Error::Format(e.to_string()))?;
    if doc.scaler.n_features() != doc.input_dim || doc.scaler.max.len() != doc.input_dim {
        return Err(Error::Format(format!(
            "scaler covers {} features, network takes {}",
            doc.scaler.n_features(),
            doc.input_dim
        )));
    }
    if doc.schema.n_features() != doc.input_dim {
        return Err(Error::Format(format!(
            "schema emits {} features, network takes {}",
            doc.schema.n_features(),
            doc.input_dim
        )));
    }
    Ok(ModelBundle {
        mlp,
        schema: doc.schema,
        scaler: doc.scaler,
        seed: doc.seed,
        config_fingerprint: doc.config_fingerprint,
    })
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    write_atomic(path, model_to_json(bundle)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    model_from_json(&fs::read_to_string(path)?)
}
