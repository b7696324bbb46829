//! JSON model checkpoints.
//!
//! Layout (version 1):
//!
//! ```json
//! {
//!   "format": "dean-mlp",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "layers": [ { "rows": 784, "cols": 128, "weights": [...], "bias": [...] }, ... ],
//!   "channel": null | { "k": 10, "entries": [...] }
//! }
//! ```
//!
//! `weights` is row-major with `rows = fan_in`, `cols = fan_out`;
//! channel `entries` are row-major with entry `(i, j) = p(y' = i | y = j)`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ChannelMatrix, Layer, Mlp, ModelConfig, TrainedModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dean-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub layers: Vec<LayerRecord>,
    pub channel: Option<ChannelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub k: usize,
    pub entries: Vec<f64>,
}

impl Checkpoint {
    pub fn from_trained(trained: &TrainedModel) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            config: trained.model.config().clone(),
            layers: trained
                .model
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    rows: l.fan_in(),
                    cols: l.fan_out(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            channel: trained.channel.as_ref().map(|c| ChannelRecord {
                k: c.num_classes(),
                entries: c.rows().to_vec(),
            }),
        }
    }

    pub fn into_trained(self) -> Result<TrainedModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::domain(format!("unknown checkpoint format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::domain(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let layers = self
            .layers
            .into_iter()
            .map(|r| {
                let weights = Array2::from_shape_vec((r.rows, r.cols), r.weights)
                    .map_err(|e| Error::domain(format!("bad layer shape: {e}")))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(r.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Mlp::from_parts(self.config, layers)?;
        let channel = self
            .channel
            .map(|c| ChannelMatrix::from_rows(c.k, c.entries))
            .transpose()?;
        Ok(TrainedModel { model, channel })
    }
}

pub fn save_checkpoint(trained: &TrainedModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_trained(trained))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_trained()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_model;

    #[test]
    fn round_trip_preserves_parameters() {
        let config = ModelConfig {
            hidden_dims: vec![5, 4],
            seed: 11,
            ..ModelConfig::new(3, 3)
        };
        let trained = TrainedModel {
            model: init_model(&config).unwrap(),
            channel: Some(ChannelMatrix::symmetric(3, 0.2).unwrap()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&trained, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, trained);
    }

    #[test]
    fn rejects_wrong_header() {
        let trained = TrainedModel {
            model: init_model(&ModelConfig::new(2, 2)).unwrap(),
            channel: None,
        };
        let mut ck = Checkpoint::from_trained(&trained);
        ck.version = 9;
        assert!(ck.clone().into_trained().is_err());
        ck.version = CHECKPOINT_VERSION;
        ck.format = "other".into();
        assert!(ck.into_trained().is_err());
    }
}
