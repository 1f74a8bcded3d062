//! Versioned JSON checkpoints.
//!
//! ```json
//! {"format_version": 1, "layer_sizes": [32, 128, 128, 2], "activation": "relu",
//!  "head": "linear", "layers": [{"weights": [...], "biases": [...]}, ...],
//!  "adam": {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8, "step": 35000,
//!           "first_moment": [...], "second_moment": [...]}}
//! ```
//!
//! Weights are row-major `[out × in]`. Floats are written with shortest
//! round-trip formatting, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, AdamState, LayerParams, Mlp};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// How the raw network output is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Raw outputs are Q-values, one per action.
    #[default]
    Linear,
    /// Single logit squashed to a fraud probability.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub adam: Option<AdamState>,
    pub head: Head,
    /// Decision threshold on the sigmoid score, for classifier checkpoints.
    pub threshold: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamDoc {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    first_moment: Vec<LayerDoc>,
    second_moment: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    layer_sizes: Vec<usize>,
    activation: Activation,
    #[serde(default)]
    head: Head,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adam: Option<AdamDoc>,
}

fn to_docs(layers: &[LayerParams]) -> Vec<LayerDoc> {
    layers
        .iter()
        .map(|l| LayerDoc {
            weights: l.weights.iter().copied().collect(),
            biases: l.biases.to_vec(),
        })
        .collect()
}

fn from_docs(docs: Vec<LayerDoc>, layer_sizes: &[usize], what: &str) -> Result<Vec<LayerParams>> {
    if docs.len() + 1 != layer_sizes.len() {
        return Err(Error::Checkpoint(format!(
            "{what}: {} layers stored for layer_sizes {layer_sizes:?}",
            docs.len()
        )));
    }
    docs.into_iter()
        .enumerate()
        .map(|(i, doc)| {
            let (inp, out) = (layer_sizes[i], layer_sizes[i + 1]);
            if doc.biases.len() != out {
                return Err(Error::Checkpoint(format!(
                    "{what}: layer {i} has {} biases, expected {out}",
                    doc.biases.len()
                )));
            }
            let weights = Array2::from_shape_vec((out, inp), doc.weights).map_err(|_| {
                Error::Checkpoint(format!("{what}: layer {i} weights are not {out}x{inp}"))
            })?;
            Ok(LayerParams {
                weights,
                biases: Array1::from(doc.biases),
            })
        })
        .collect()
}

impl Checkpoint {
    pub fn new(net: Mlp) -> Self {
        Self {
            net,
            adam: None,
            head: Head::Linear,
            threshold: None,
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let doc = CheckpointDoc {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_sizes: self.net.layer_sizes().to_vec(),
            activation: self.net.activation(),
            head: self.head,
            threshold: self.threshold,
            layers: to_docs(self.net.layers()),
            adam: self.adam.as_ref().map(|a| AdamDoc {
                beta1: a.beta1,
                beta2: a.beta2,
                epsilon: a.epsilon,
                step: a.step_count(),
                first_moment: to_docs(a.first_moment()),
                second_moment: to_docs(a.second_moment()),
            }),
        };
        Ok(serde_json::to_vec(&doc)?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "unsupported format_version {v}, expected {CHECKPOINT_FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Checkpoint("missing format_version".into())),
        }
        let doc: CheckpointDoc = serde_json::from_value(value)
            .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;

        let layers = from_docs(doc.layers, &doc.layer_sizes, "network")?;
        let net = Mlp::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let adam = doc
            .adam
            .map(|a| {
                let m = from_docs(a.first_moment, &doc.layer_sizes, "adam first moment")?;
                let v = from_docs(a.second_moment, &doc.layer_sizes, "adam second moment")?;
                AdamState::from_parts(&net, a.beta1, a.beta2, a.epsilon, a.step, m, v)
                    .map_err(|e| Error::Checkpoint(e.to_string()))
            })
            .transpose()?;
        if let Some(t) = doc.threshold {
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("threshold {t} is not finite")));
            }
        }
        Ok(Self {
            net,
            adam,
            head: doc.head,
            threshold: doc.threshold,
        })
    }

    /// Writes via a sibling temp file and rename, so readers never see a partial file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_json_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_bytes(&bytes)
    }

    /// Loads and checks the stored layer sizes against what the caller needs.
    pub fn load_expecting(path: impl AsRef<Path>, layer_sizes: &[usize]) -> Result<Self> {
        let ckpt = Self::load(path)?;
        ckpt.ensure_layer_sizes(layer_sizes)?;
        Ok(ckpt)
    }

    pub fn ensure_layer_sizes(&self, layer_sizes: &[usize]) -> Result<()> {
        if self.net.layer_sizes() != layer_sizes {
            return Err(Error::Shape(format!(
                "checkpoint has layer_sizes {:?}, run expects {layer_sizes:?}",
                self.net.layer_sizes()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;
    use crate::neuralnet::Gradients;

    fn trained_pair() -> (Mlp, AdamState) {
        let mut net = Mlp::new(&[4, 6, 2], 3).unwrap();
        let mut adam = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        for (i, v) in g.layers[0].weights.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        for _ in 0..3 {
            adam.step(&mut net, &g, 0.01).unwrap();
        }
        (net, adam)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        let (net, adam) = trained_pair();
        let ckpt = Checkpoint {
            net: net.clone(),
            adam: Some(adam.clone()),
            head: Head::Linear,
            threshold: None,
        };
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        let probe = Array2::from_shape_fn((3, 4), |(r, c)| r as f64 * 0.3 - c as f64 * 0.7);
        let a = net.predict(probe.view()).unwrap();
        let b = loaded.net.predict(probe.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(loaded.to_json_bytes().unwrap(), ckpt.to_json_bytes().unwrap());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        let (net, _) = trained_pair();
        let bytes = Checkpoint::new(net).to_json_bytes().unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let (net, _) = trained_pair();
        let bytes = Checkpoint::new(net).to_json_bytes().unwrap();
        let text = String::from_utf8(bytes).unwrap().replace("\"format_version\":1", "\"format_version\":2");
        let err = Checkpoint::from_json_bytes(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("format_version 2"));
    }

    #[test]
    fn inconsistent_shapes_are_rejected() {
        let (net, _) = trained_pair();
        let bytes = Checkpoint::new(net).to_json_bytes().unwrap();
        let text = String::from_utf8(bytes).unwrap().replace("\"layer_sizes\":[4,6,2]", "\"layer_sizes\":[5,6,2]");
        assert!(matches!(Checkpoint::from_json_bytes(text.as_bytes()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn expected_layer_sizes_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        Checkpoint::new(Mlp::new(&[30, 128, 128, 2], 7).unwrap()).save(&path).unwrap();
        assert!(Checkpoint::load_expecting(&path, &[30, 128, 128, 2]).is_ok());
        assert!(matches!(
            Checkpoint::load_expecting(&path, &[32, 128, 128, 2]),
            Err(Error::Shape(_))
        ));
    }
}
