//! A small dropout MLP with Monte-Carlo forward passes and an optional
//! appended denoising layer.
//!
//! The network is `input → [Dense → ReLU → Dropout]* → Dense → softmax`.
//! Dropout is inverted (activations are scaled by `1 / (1 - rate)` while
//! training), so deterministic prediction needs no rescaling. When
//! training with `denoise` on, the softmax output `p` is fed through a
//! column-stochastic matrix `W` and the loss is taken on `p' = W p`; the
//! returned model is always the detached head that emits `p`.

mod channel;
mod checkpoint;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use channel::{project_column_simplex, ChannelMatrix};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{Layer, Mlp, PassTensor};
pub(crate) use mlp::gather_rows;
pub use train::{train, Gradients, LabeledSet, TrainedModel, Trainer, CHANNEL_GRAD_CLIP, LOSS_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Step size for the denoising layer; it sees much smaller gradients
    /// than the network weights.
    pub channel_learning_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_dims: vec![128],
            num_classes,
            dropout_rate: 0.5,
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-3,
            channel_learning_rate: 3e-4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be at least 1"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("hidden_dims", "need at least one layer, each of width >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate", "must lie in [0, 1)"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if !(self.channel_learning_rate >= 0.0 && self.channel_learning_rate.is_finite()) {
            return Err(Error::config("channel_learning_rate", "must be non-negative"));
        }
        Ok(())
    }
}

/// Builds a freshly initialized network from `config`.
pub fn init_model(config: &ModelConfig) -> Result<Mlp> {
    Mlp::new(config.clone())
}
