//! Batch active learning with uncertainty-annealed Gibbs sampling and a
//! denoising channel layer for noisy oracles.
//!
//! The pipeline for one acquisition round of the `dean` strategy:
//!
//! 1. score every pool sample with BALD from Monte-Carlo dropout passes
//!    ([`scoring`]),
//! 2. build the square-root Jensen-Shannon distance matrix over the pool's
//!    softmax outputs and cluster it agglomeratively into `5b` groups
//!    ([`prob`], [`clustering`]),
//! 3. turn the model's variation ratio `σ` on a fixed validation set into an
//!    inverse temperature `β = f(σ)` ([`scoring`]),
//! 4. draw `b` samples: pick a median-score centroid with probability
//!    proportional to its score, then draw from the leftover pool with
//!    Gibbs weights `exp(-β d)` around it ([`sampler`]).
//!
//! Labels come from a seeded K-symmetric noisy oracle ([`oracle`]); the
//! classifier can be trained through an appended column-stochastic layer
//! ([`classifier`]). [`harness`] drives whole experiments.

pub mod classifier;
pub mod clustering;
pub mod data;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod prob;
pub mod rng;
pub mod sampler;
pub mod scoring;
pub mod strategies;
pub mod verify;

pub use classifier::{ChannelMatrix, LabeledSet, Mlp, ModelConfig, PassTensor, TrainedModel};
pub use error::{Error, IdxError, Result};
pub use prob::{DistanceMatrix, ProbVec};
