use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand::SeedableRng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::prob::ProbVec;
use crate::rng::{derive_seed, Rng};

/// A dense layer mapping `fan_in → fan_out`; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: ModelConfig,
    layers: Vec<Layer>,
}

/// `T` stochastic softmax outputs for one sample, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PassTensor {
    passes: usize,
    classes: usize,
    data: Vec<f64>,
}

impl PassTensor {
    /// Validates every row as a probability vector.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("pass tensor without passes"));
        }
        let classes = rows[0].len();
        let passes = rows.len();
        let mut data = Vec::with_capacity(passes * classes);
        for row in rows {
            if row.len() != classes {
                return Err(Error::DimensionMismatch {
                    expected: classes,
                    found: row.len(),
                });
            }
            data.extend(ProbVec::new(row)?.into_inner());
        }
        Ok(PassTensor {
            passes,
            classes,
            data,
        })
    }

    pub(crate) fn from_raw(passes: usize, classes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), passes * classes);
        PassTensor {
            passes,
            classes,
            data,
        }
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.classes)
    }

    /// Mean of the rows (the predictive distribution).
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.classes];
        for row in self.rows() {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        let inv = 1.0 / self.passes as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }
}

impl Mlp {
    pub(super) fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed_from_u64(config.seed);
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden_dims);
        dims.push(config.num_classes);
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                // He-uniform for ReLU layers, LeCun-uniform for the logits.
                let gain = if l + 1 == n_layers { 3.0 } else { 6.0 };
                let limit = (gain / fan_in as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { config, layers })
    }

    pub(crate) fn from_parts(config: ModelConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden_dims);
        dims.push(config.num_classes);
        if layers.len() + 1 != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len() - 1,
                found: layers.len(),
            });
        }
        for (layer, w) in layers.iter().zip(dims.windows(2)) {
            if layer.weights.dim() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(Error::domain(format!(
                    "layer shape {:?} does not match {}→{}",
                    layer.weights.dim(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Mlp { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters flattened, layer by layer: weights (row-major) then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found,
            });
        }
        Ok(())
    }

    /// Deterministic softmax output with dropout disabled.
    pub fn predict(&self, x: &[f64]) -> Result<ProbVec> {
        self.check_dim(x.len())?;
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let p = self.predict_batch(x)?;
        ProbVec::new(p.row(0).to_vec())
    }

    /// Deterministic softmax outputs for every row of `x`.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let hidden = self.penultimate_batch(x)?;
        let last = self.layers.last().expect("at least one layer");
        let mut logits = hidden.dot(&last.weights) + &last.bias;
        for mut row in logits.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("contiguous row"));
        }
        Ok(logits)
    }

    /// Last hidden-layer activations with dropout disabled.
    pub fn penultimate_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.penultimate_batch(x)?.row(0).to_vec())
    }

    pub fn penultimate_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let hidden = &self.layers[..self.layers.len() - 1];
        let mut a = dense_relu(x, &hidden[0]);
        for layer in &hidden[1..] {
            a = dense_relu(a.view(), layer);
        }
        Ok(a)
    }

    /// `passes` forward passes with dropout active. The masks for pass `t`
    /// of sample `sample_id` come from their own stream derived from
    /// `(seed, sample_id, t)`, so results do not depend on evaluation order.
    pub fn stochastic_passes(
        &self,
        x: &[f64],
        passes: usize,
        seed: u64,
        sample_id: usize,
    ) -> Result<PassTensor> {
        self.check_dim(x.len())?;
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self
            .stochastic_passes_batch(x, &[sample_id], passes, seed)?
            .pop()
            .expect("one sample"))
    }

    pub fn stochastic_passes_batch(
        &self,
        x: ArrayView2<f64>,
        sample_ids: &[usize],
        passes: usize,
        seed: u64,
    ) -> Result<Vec<PassTensor>> {
        self.check_dim(x.ncols())?;
        if passes == 0 {
            return Err(Error::domain("need at least one stochastic pass"));
        }
        if sample_ids.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: sample_ids.len(),
            });
        }
        // Dropout sits after each hidden activation, so the first hidden
        // layer's pre-dropout activations are shared by all passes.
        let first = dense_relu(x, &self.layers[0]);
        let k = self.num_classes();
        let rate = self.config.dropout_rate;
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mut out = Vec::with_capacity(x.nrows());
        let mut buf = Vec::new();
        for (row, &id) in first.rows().into_iter().zip(sample_ids) {
            let sample_seed = derive_seed(seed, &[id as u64]);
            let mut data = Vec::with_capacity(passes * k);
            for t in 0..passes {
                let mut rng = Rng::seed_from_u64(sample_seed);
                rng.set_stream(t as u64);
                buf.clear();
                buf.extend(row.iter().copied());
                let mut a = std::mem::take(&mut buf);
                if rate > 0.0 {
                    apply_mask(&mut a, &mut rng, keep, scale);
                }
                for (l, layer) in self.layers.iter().enumerate().skip(1) {
                    let mut z = vec_mat(&a, layer);
                    if l + 1 < self.layers.len() {
                        z.iter_mut().for_each(|v| *v = v.max(0.0));
                        if rate > 0.0 {
                            apply_mask(&mut z, &mut rng, keep, scale);
                        }
                    }
                    a = z;
                }
                softmax_in_place(&mut a);
                data.extend_from_slice(&a);
                buf = a;
            }
            out.push(PassTensor::from_raw(passes, k, data));
        }
        Ok(out)
    }
}

fn apply_mask(a: &mut [f64], rng: &mut Rng, keep: f64, scale: f64) {
    for v in a.iter_mut() {
        if rng.gen::<f64>() < keep {
            *v *= scale;
        } else {
            *v = 0.0;
        }
    }
}

fn vec_mat(a: &[f64], layer: &Layer) -> Vec<f64> {
    let a = ArrayView1::from(a);
    (a.dot(&layer.weights) + &layer.bias).to_vec()
}

pub(super) fn dense_relu(x: ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weights) + &layer.bias;
    z.mapv_inplace(|v| v.max(0.0));
    z
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    z.iter_mut().for_each(|v| *v *= inv);
}

/// Gathers rows `idx` of `x` into a new matrix.
pub(crate) fn gather_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (mut dst, &i) in out.axis_iter_mut(Axis(0)).zip(idx) {
        dst.assign(&x.slice(s![i, ..]));
    }
    out
}
