use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::channel::ChannelMatrix;
use super::mlp::{gather_rows, softmax_in_place, Layer, Mlp};
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

/// `log p'` is clamped below at this value.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Largest Euclidean norm of a channel gradient step. A confident
/// prediction that contradicts a noisy label gives `W` a gradient of order
/// `1 / p'_y`, which would otherwise throw whole columns across the simplex.
pub const CHANNEL_GRAD_CLIP: f64 = 100.0;

/// Stream tag separating the training RNG from the initialization RNG.
const TRAIN_STREAM: u64 = 0x7472_6169_6e;

/// Features with class labels in `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Output of training: the detached classifier plus, when trained with
/// the denoising layer, the learned channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Mlp,
    pub channel: Option<ChannelMatrix>,
}

/// Gradients of the mean batch loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    /// Row-major `K × K` gradient with respect to the channel entries.
    pub channel: Option<Vec<f64>>,
}

impl Mlp {
    /// Mean cross-entropy of `p` (or of `W p` when `channel` is given,
    /// row-major and unconstrained) against `labels`, plus the L2 penalty.
    /// Dropout is off.
    pub fn loss(&self, x: ArrayView2<f64>, labels: &[usize], channel: Option<&[f64]>) -> Result<f64> {
        Ok(self.forward_backward(x, labels, channel, None, false)?.0)
    }

    /// Like [`Mlp::loss`], with gradients. Dropout is active only when `rng`
    /// is supplied.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        channel: Option<&[f64]>,
        rng: Option<&mut Rng>,
    ) -> Result<(f64, Gradients)> {
        let (loss, grads) = self.forward_backward(x, labels, channel, rng, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }

    fn forward_backward(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        channel: Option<&[f64]>,
        mut rng: Option<&mut Rng>,
        want_grad: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        let config = self.config();
        let k = config.num_classes;
        if x.ncols() != config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: config.input_dim,
                found: x.ncols(),
            });
        }
        if x.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: labels.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::Empty("training batch"));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        if let Some(w) = channel {
            if w.len() != k * k {
                return Err(Error::DimensionMismatch {
                    expected: k * k,
                    found: w.len(),
                });
            }
        }
        let n = x.nrows();
        let layers = self.layers();
        let n_hidden = layers.len() - 1;
        let keep = 1.0 - config.dropout_rate;

        // Forward, keeping inputs of every layer and the dropout masks.
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
        let mut masks: Vec<Option<Array2<f64>>> = Vec::with_capacity(n_hidden);
        let mut a = x.to_owned();
        for layer in &layers[..n_hidden] {
            let mut z = a.dot(&layer.weights) + &layer.bias;
            z.mapv_inplace(|v| v.max(0.0));
            let mask = match rng.as_deref_mut() {
                Some(r) if config.dropout_rate > 0.0 => {
                    let scale = 1.0 / keep;
                    let m = Array2::from_shape_simple_fn(z.dim(), || {
                        if r.gen::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    });
                    z *= &m;
                    Some(m)
                }
                _ => None,
            };
            masks.push(mask);
            inputs.push(std::mem::replace(&mut a, z));
        }
        let last = &layers[n_hidden];
        let mut probs = a.dot(&last.weights) + &last.bias;
        inputs.push(a);
        for mut row in probs.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("contiguous"));
        }

        let mut loss = 0.0;
        let mut dlogits = Array2::<f64>::zeros((n, k));
        let mut dchannel = channel.map(|_| vec![0.0; k * k]);
        let inv_n = 1.0 / n as f64;
        for (r, &y) in labels.iter().enumerate() {
            let p = probs.row(r);
            match channel {
                None => {
                    loss -= p[y].max(LOSS_FLOOR).ln();
                    if want_grad {
                        let mut d = dlogits.row_mut(r);
                        for j in 0..k {
                            d[j] = p[j] * inv_n;
                        }
                        d[y] -= inv_n;
                    }
                }
                Some(w) => {
                    // Only row y of W enters the loss for this sample.
                    let wy = &w[y * k..(y + 1) * k];
                    let py: f64 = wy.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
                    loss -= py.max(LOSS_FLOOR).ln();
                    if want_grad && py > LOSS_FLOOR {
                        let g = -inv_n / py;
                        let dw = dchannel.as_mut().expect("channel gradient");
                        for j in 0..k {
                            dw[y * k + j] += g * p[j];
                        }
                        // dL/dp_j = g w_{y j}; then through the softmax.
                        let dot: f64 = (0..k).map(|j| p[j] * g * wy[j]).sum();
                        let mut d = dlogits.row_mut(r);
                        for j in 0..k {
                            d[j] = p[j] * (g * wy[j] - dot);
                        }
                    }
                }
            }
        }
        loss *= inv_n;
        let decay = config.weight_decay;
        if decay > 0.0 {
            let sq: f64 = layers
                .iter()
                .map(|l| l.weights.iter().map(|v| v * v).sum::<f64>())
                .sum();
            loss += 0.5 * decay * sq;
        }
        if !want_grad {
            return Ok((loss, None));
        }

        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(layers.len());
        let mut delta = dlogits;
        for l in (0..layers.len()).rev() {
            let layer: &Layer = &layers[l];
            let input = &inputs[l];
            let mut gw = input.t().dot(&delta);
            if decay > 0.0 {
                gw.scaled_add(decay, &layer.weights);
            }
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&layer.weights.t());
                // `input` is the post-ReLU, post-dropout activation of layer l-1.
                if let Some(mask) = &masks[l - 1] {
                    back *= mask;
                }
                ndarray::Zip::from(&mut back)
                    .and(input)
                    .for_each(|d, &act| {
                        if act <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((
            loss,
            Some(Gradients {
                layers: grads,
                channel: dchannel,
            }),
        ))
    }
}

/// Mini-batch SGD with momentum over an `Mlp`, optionally with the
/// denoising layer appended.
pub struct Trainer {
    model: Mlp,
    channel: Option<ChannelMatrix>,
    velocity: Vec<(Array2<f64>, Array1<f64>)>,
    channel_velocity: Vec<f64>,
    rng: Rng,
    steps: usize,
}

impl Trainer {
    /// With `denoise`, the channel starts at the identity.
    pub fn new(model: Mlp, denoise: bool) -> Self {
        let k = model.num_classes();
        let velocity = model
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
            .collect();
        let rng = rng_from(model.config().seed, &[TRAIN_STREAM]);
        Trainer {
            channel: denoise.then(|| ChannelMatrix::identity(k)),
            channel_velocity: if denoise { vec![0.0; k * k] } else { Vec::new() },
            model,
            velocity,
            rng,
            steps: 0,
        }
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn channel(&self) -> Option<&ChannelMatrix> {
        self.channel.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One optimizer step on a mini-batch; returns the batch loss.
    pub fn step(&mut self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let config = self.model.config().clone();
        let (loss, grads) = self.model.loss_and_gradient(
            x,
            labels,
            self.channel.as_ref().map(|c| c.rows()),
            Some(&mut self.rng),
        )?;
        let (lr, mu) = (config.learning_rate, config.momentum);
        for ((layer, (vw, vb)), (gw, gb)) in self
            .model
            .layers_mut()
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(grads.layers)
        {
            *vw *= mu;
            *vw += &gw;
            *vb *= mu;
            *vb += &gb;
            layer.weights.scaled_add(-lr, vw);
            layer.bias.scaled_add(-lr, vb);
        }
        if let (Some(channel), Some(gc)) = (self.channel.as_mut(), grads.channel) {
            let lr_c = config.channel_learning_rate;
            let norm = gc.iter().map(|g| g * g).sum::<f64>().sqrt();
            let clip = if norm > CHANNEL_GRAD_CLIP { CHANNEL_GRAD_CLIP / norm } else { 1.0 };
            for ((w, v), g) in channel
                .rows_mut()
                .iter_mut()
                .zip(self.channel_velocity.iter_mut())
                .zip(gc)
            {
                *v = mu * *v + clip * g;
                *w -= lr_c * *v;
            }
            channel.project_columns();
        }
        self.steps += 1;
        Ok(loss)
    }

    /// One pass over `data` in a freshly shuffled order; returns the mean batch loss.
    pub fn epoch(&mut self, data: &LabeledSet) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let bs = self.model.config().batch_size;
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(bs) {
            let x = gather_rows(data.features.view(), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            total += self.step(x.view(), &y)?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    pub fn finish(self) -> TrainedModel {
        TrainedModel {
            model: self.model,
            channel: self.channel,
        }
    }
}

/// Trains `model` for `config.epochs` epochs. With `denoise`, the loss is
/// taken on `W p` with `W` initialized to the identity and projected back
/// onto column-stochastic matrices after each step.
pub fn train(model: Mlp, data: &LabeledSet, denoise: bool) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let k = model.num_classes();
    if let Some(&label) = data.labels.iter().find(|&&y| y >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    if data.features.ncols() != model.config().input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.config().input_dim,
            found: data.features.ncols(),
        });
    }
    let epochs = model.config().epochs;
    let mut trainer = Trainer::new(model, denoise);
    for _ in 0..epochs {
        trainer.epoch(data)?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{init_model, ModelConfig};
    use ndarray::array;

    #[test]
    fn rejects_bad_data() {
        let m = init_model(&ModelConfig::new(2, 2)).unwrap();
        let empty = LabeledSet::new(Array2::zeros((0, 2)), vec![]).unwrap();
        assert!(matches!(train(m.clone(), &empty, false), Err(Error::Empty(_))));
        let bad = LabeledSet::new(array![[0.0, 1.0]], vec![2]).unwrap();
        assert!(matches!(
            train(m, &bad, false),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(LabeledSet::new(array![[0.0, 1.0]], vec![0, 1]).is_err());
    }

    #[test]
    fn identity_channel_matches_plain_loss() {
        let m = init_model(&ModelConfig::new(3, 3)).unwrap();
        let x = array![[0.2, 0.4, -1.0], [1.0, 0.0, 0.5]];
        let y = [2, 0];
        let plain = m.loss(x.view(), &y, None).unwrap();
        let eye = ChannelMatrix::identity(3);
        let via = m.loss(x.view(), &y, Some(eye.rows())).unwrap();
        assert!((plain - via).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let config = ModelConfig {
            hidden_dims: vec![8],
            epochs: 3,
            batch_size: 4,
            ..ModelConfig::new(2, 2)
        };
        let x = array![[0.0, 0.0], [0.1, 0.2], [1.0, 1.0], [0.9, 1.1], [0.2, 0.0], [1.2, 0.8]];
        let data = LabeledSet::new(x, vec![0, 0, 1, 1, 0, 1]).unwrap();
        let a = train(init_model(&config).unwrap(), &data, true).unwrap();
        let b = train(init_model(&config).unwrap(), &data, true).unwrap();
        assert_eq!(a.model.parameters(), b.model.parameters());
        assert_eq!(a.channel, b.channel);
        let c = train(init_model(&config).unwrap(), &data, false).unwrap();
        assert!(c.channel.is_none());
    }
}
