//! Label providers.
//!
//! The noisy oracle answers each sample once: the first query draws `y'`
//! from the channel column of the true label using a stream derived from
//! `(seed, sample id)`, and later queries return the memoized answer. The
//! noise is therefore consistent across re-queries and independent of query
//! order.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classifier::ChannelMatrix;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisySpec {
    pub num_classes: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl NoisySpec {
    pub fn channel(&self) -> Result<ChannelMatrix> {
        make_channel(self.num_classes, self.epsilon)
    }
}

/// The K-symmetric channel with flip probability `epsilon`.
pub fn make_channel(num_classes: usize, epsilon: f64) -> Result<ChannelMatrix> {
    ChannelMatrix::symmetric(num_classes, epsilon)
}

#[derive(Debug, Clone)]
pub struct NoisyOracle {
    channel: ChannelMatrix,
    seed: u64,
    memo: HashMap<usize, usize>,
}

impl NoisyOracle {
    pub fn new(spec: &NoisySpec) -> Result<Self> {
        Ok(Self::with_channel(spec.channel()?, spec.seed))
    }

    /// An oracle for an arbitrary column-stochastic channel.
    pub fn with_channel(channel: ChannelMatrix, seed: u64) -> Self {
        NoisyOracle {
            channel,
            seed,
            memo: HashMap::new(),
        }
    }

    /// Ground truth passes through unchanged.
    pub fn ideal(num_classes: usize, seed: u64) -> Self {
        Self::with_channel(ChannelMatrix::identity(num_classes), seed)
    }

    pub fn channel(&self) -> &ChannelMatrix {
        &self.channel
    }

    /// The (possibly flipped) label of sample `sample_id`.
    pub fn query(&mut self, sample_id: usize, true_label: usize) -> Result<usize> {
        let k = self.channel.num_classes();
        if true_label >= k {
            return Err(Error::LabelOutOfRange {
                label: true_label,
                classes: k,
            });
        }
        if let Some(&y) = self.memo.get(&sample_id) {
            return Ok(y);
        }
        let mut rng = rng_from(self.seed, &[sample_id as u64]);
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut answer = true_label;
        for i in 0..k {
            let w = self.channel.get(i, true_label);
            if w > 0.0 {
                acc += w;
                answer = i;
                if u < acc {
                    break;
                }
            }
        }
        self.memo.insert(sample_id, answer);
        Ok(answer)
    }

    /// Number of distinct samples answered so far.
    pub fn answered(&self) -> usize {
        self.memo.len()
    }

    pub fn memoized(&self, sample_id: usize) -> Option<usize> {
        self.memo.get(&sample_id).copied()
    }
}
