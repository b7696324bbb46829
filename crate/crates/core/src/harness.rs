//! The active-learning driver.
//!
//! A repetition builds a stratified seed set, trains `M⁽⁰⁾`, then loops:
//! select a batch with the current model, query the oracle, retrain from
//! scratch on the grown labeled set and record test accuracy, `σ` and `β`
//! of the new model. Repetitions are independent and may run in parallel;
//! all randomness is derived from `(master_seed, repetition, iteration)`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{gather_rows, init_model, train, ChannelMatrix, LabeledSet, ModelConfig, TrainedModel};
use crate::clustering::Linkage;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::oracle::{NoisyOracle, NoisySpec};
use crate::prob::argmax;
use crate::rng::{derive_seed, purpose, rng_from};
use crate::sampler::DrawRecord;
use crate::scoring::{model_uncertainty, BetaSchedule};
use crate::strategies::{select, ALState, SelectionContext, StrategyId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Free-form dataset label copied into the outputs.
    pub dataset: String,
    pub strategy: StrategyId,
    pub denoise: bool,
    pub epsilon: f64,
    /// Acquisition size `b`.
    pub budget: usize,
    pub iterations: usize,
    pub seeds_per_class: usize,
    /// Monte-Carlo passes for scores and `σ`.
    pub passes: usize,
    /// `input_dim`, `num_classes` and `seed` are filled in per run.
    pub model: ModelConfig,
    pub beta: BetaSchedule,
    pub linkage: Linkage,
    pub validation_size: usize,
    pub test_size: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    pub max_cluster_pool: Option<usize>,
    /// Worker threads for repetitions; results do not depend on it.
    pub jobs: usize,
    /// Write measured wall time into the `seconds` column instead of 0.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "mnist".into(),
            strategy: StrategyId::Dean,
            denoise: false,
            epsilon: 0.0,
            budget: 100,
            iterations: 10,
            seeds_per_class: 4,
            passes: 100,
            model: ModelConfig::new(784, 10),
            beta: BetaSchedule::default(),
            linkage: Linkage::Average,
            validation_size: 1000,
            test_size: 2000,
            repetitions: 5,
            master_seed: 0,
            max_cluster_pool: None,
            jobs: 1,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::config("b", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must lie in [0, 1]"));
        }
        if self.seeds_per_class == 0 {
            return Err(Error::config("seeds_per_class", "must be at least 1"));
        }
        if self.passes == 0 {
            return Err(Error::config("passes", "must be at least 1"));
        }
        if self.validation_size == 0 {
            return Err(Error::config("validation_size", "must be at least 1"));
        }
        if self.test_size == 0 {
            return Err(Error::config("test_size", "must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        if !(self.beta.scale > 0.0 && self.beta.scale.is_finite()) {
            return Err(Error::config("scale_l", "must be positive"));
        }
        if !(self.beta.cap > 0.0 && self.beta.cap.is_finite()) {
            return Err(Error::config("beta_cap", "must be positive"));
        }
        if self.max_cluster_pool == Some(0) {
            return Err(Error::config("max_cluster_pool", "must be at least 1"));
        }
        let mut model = self.model.clone();
        model.input_dim = model.input_dim.max(1);
        model.num_classes = model.num_classes.max(2);
        model.validate()
    }

    /// Model configuration for one training run.
    pub fn model_config(&self, data: &Dataset, repetition: usize, iteration: usize) -> ModelConfig {
        ModelConfig {
            input_dim: data.dim(),
            num_classes: data.num_classes,
            seed: derive_seed(
                self.master_seed,
                &[purpose::MODEL, repetition as u64, iteration as u64],
            ),
            ..self.model.clone()
        }
    }
}

/// Index sets of one repetition. All are disjoint and ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed_set: Vec<usize>,
    pub pool: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// A stable fingerprint of the seed set.
    pub fn seed_set_hash(&self) -> u64 {
        let path: Vec<u64> = self.seed_set.iter().map(|&i| i as u64).collect();
        derive_seed(0, &path)
    }
}

/// The test split depends only on the master seed; the seed set,
/// validation set and pool also depend on the repetition. The strategy
/// plays no part, so all strategies start from the same point.
pub fn build_initial_split(data: &Dataset, config: &ExperimentConfig, repetition: usize) -> Result<Split> {
    let n = data.len();
    let k = data.num_classes;
    let needed = config.test_size + config.validation_size + config.seeds_per_class * k;
    if needed > n {
        return Err(Error::domain(format!(
            "dataset of {n} samples is too small for test {} + validation {} + seed set {}",
            config.test_size,
            config.validation_size,
            config.seeds_per_class * k
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(config.master_seed, &[purpose::SPLIT]));
    let mut test = order[..config.test_size].to_vec();
    let mut rest = order[config.test_size..].to_vec();
    rest.shuffle(&mut rng_from(
        config.master_seed,
        &[purpose::SPLIT, repetition as u64],
    ));

    let mut per_class = vec![0usize; k];
    let mut seed_set = Vec::with_capacity(config.seeds_per_class * k);
    let mut others = Vec::with_capacity(rest.len());
    for i in rest {
        let y = data.labels[i];
        if per_class[y] < config.seeds_per_class {
            per_class[y] += 1;
            seed_set.push(i);
        } else {
            others.push(i);
        }
    }
    if let Some(class) = per_class.iter().position(|&c| c < config.seeds_per_class) {
        return Err(Error::domain(format!(
            "class {class} has only {} samples outside the test split, need {}",
            per_class[class], config.seeds_per_class
        )));
    }
    let mut validation = others[..config.validation_size].to_vec();
    let mut pool = others[config.validation_size..].to_vec();
    for v in [&mut seed_set, &mut pool, &mut validation, &mut test] {
        v.sort_unstable();
    }
    Ok(Split {
        seed_set,
        pool,
        validation,
        test,
    })
}

/// Metrics of the model trained at the end of an iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Size of the labeled set.
    pub acquired: usize,
    pub accuracy: f64,
    pub sigma: f64,
    pub beta: f64,
    pub seconds: f64,
    pub truncated: bool,
}

/// Entries of the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Split {
        repetition: usize,
        seed_set_hash: String,
        seed_set: Vec<usize>,
        pool_size: usize,
        validation_size: usize,
        test_size: usize,
    },
    Selection {
        repetition: usize,
        iteration: usize,
        strategy: StrategyId,
        beta: f64,
        selected: Vec<usize>,
        noisy_labels: Vec<usize>,
        flipped: usize,
        n_clusters: Option<usize>,
        trace: Option<Vec<DrawRecord>>,
    },
    Channel {
        repetition: usize,
        iteration: usize,
        num_classes: usize,
        /// Row-major, `(i, j) = p(y' = i | y = j)`.
        entries: Vec<f64>,
    },
    Iteration {
        repetition: usize,
        record: IterationRecord,
        wall_seconds: f64,
    },
    Warning {
        repetition: usize,
        iteration: usize,
        message: String,
    },
}

/// One repetition in progress.
pub struct Repetition<'a> {
    config: &'a ExperimentConfig,
    data: &'a Dataset,
    repetition: usize,
    split: Split,
    oracle: NoisyOracle,
    state: ALState,
    model: TrainedModel,
    beta: f64,
    events: Vec<Event>,
    initial: IterationRecord,
}

impl<'a> Repetition<'a> {
    /// Builds the split, labels the seed set and trains the initial model.
    pub fn start(config: &'a ExperimentConfig, data: &'a Dataset, repetition: usize) -> Result<Self> {
        config.validate()?;
        let started = Instant::now();
        let split = build_initial_split(data, config, repetition)?;
        let mut oracle = NoisyOracle::new(&NoisySpec {
            num_classes: data.num_classes,
            epsilon: config.epsilon,
            seed: derive_seed(config.master_seed, &[purpose::ORACLE, repetition as u64]),
        })?;
        let labels = split
            .seed_set
            .iter()
            .map(|&i| oracle.query(i, data.labels[i]))
            .collect::<Result<Vec<_>>>()?;
        let state = ALState::new(split.seed_set.clone(), labels, split.pool.clone())?;
        let events = vec![Event::Split {
            repetition,
            seed_set_hash: format!("{:016x}", split.seed_set_hash()),
            seed_set: split.seed_set.clone(),
            pool_size: split.pool.len(),
            validation_size: split.validation.len(),
            test_size: split.test.len(),
        }];
        let model = retrain(config, data, &state, repetition)?;
        let mut rep = Repetition {
            config,
            data,
            repetition,
            split,
            oracle,
            state,
            model,
            beta: 0.0,
            events,
            initial: IterationRecord {
                iteration: 0,
                acquired: 0,
                accuracy: 0.0,
                sigma: 0.0,
                beta: 0.0,
                seconds: 0.0,
                truncated: false,
            },
        };
        rep.initial = rep.evaluate(false, started)?;
        Ok(rep)
    }

    pub fn state(&self) -> &ALState {
        &self.state
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn oracle(&self) -> &NoisyOracle {
        &self.oracle
    }

    pub fn initial(&self) -> &IterationRecord {
        &self.initial
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Selects, labels and retrains once.
    pub fn run_iteration(&mut self) -> Result<IterationRecord> {
        let started = Instant::now();
        let t = self.state.iteration as u64 + 1;
        let r = self.repetition as u64;
        let seed = self.config.master_seed;
        let ctx = SelectionContext {
            model: &self.model.model,
            features: self.data.features.view(),
            state: &self.state,
            passes: self.config.passes,
            score_seed: derive_seed(seed, &[purpose::SCORE, r, t]),
            beta: self.beta,
            linkage: self.config.linkage,
            max_cluster_pool: self.config.max_cluster_pool,
        };
        let mut rng = rng_from(seed, &[purpose::SELECT, r, t]);
        let selection = select(self.config.strategy, &ctx, self.config.budget, &mut rng)?;
        let noisy = selection
            .indices
            .iter()
            .map(|&i| self.oracle.query(i, self.data.labels[i]))
            .collect::<Result<Vec<_>>>()?;
        let flipped = selection
            .indices
            .iter()
            .zip(&noisy)
            .filter(|(&i, &y)| self.data.labels[i] != y)
            .count();
        self.state.absorb(&selection.indices, &noisy)?;
        let iteration = self.state.iteration;
        if selection.truncated {
            self.events.push(Event::Warning {
                repetition: self.repetition,
                iteration,
                message: format!(
                    "pool exhausted: selected {} of {}",
                    selection.indices.len(),
                    self.config.budget
                ),
            });
        }
        let (n_clusters, trace) = match selection.dean {
            Some(d) => (Some(d.n_clusters), Some(d.draws)),
            None => (None, None),
        };
        self.events.push(Event::Selection {
            repetition: self.repetition,
            iteration,
            strategy: self.config.strategy,
            beta: self.beta,
            selected: selection.indices,
            noisy_labels: noisy,
            flipped,
            n_clusters,
            trace,
        });
        self.model = retrain(self.config, self.data, &self.state, self.repetition)?;
        self.evaluate(selection.truncated, started)
    }

    fn evaluate(&mut self, truncated: bool, started: Instant) -> Result<IterationRecord> {
        let iteration = self.state.iteration;
        let model = &self.model.model;
        let test = gather_rows(self.data.features.view(), &self.split.test);
        let probs = model.predict_batch(test.view())?;
        let correct = probs
            .rows()
            .into_iter()
            .zip(&self.split.test)
            .filter(|(p, &i)| argmax(p.as_slice().expect("contiguous")) == self.data.labels[i])
            .count();
        let accuracy = correct as f64 / self.split.test.len() as f64;
        let validation = gather_rows(self.data.features.view(), &self.split.validation);
        let sigma = model_uncertainty(
            model,
            validation.view(),
            &self.split.validation,
            self.config.passes,
            derive_seed(
                self.config.master_seed,
                &[purpose::SIGMA, self.repetition as u64, iteration as u64],
            ),
        )?;
        let state = self.config.beta.state(sigma)?;
        self.beta = state.beta;
        if let Some(w) = &self.model.channel {
            self.events.push(channel_event(self.repetition, iteration, w));
        }
        let wall = started.elapsed().as_secs_f64();
        let record = IterationRecord {
            iteration,
            acquired: self.state.labeled.len(),
            accuracy,
            sigma,
            beta: state.beta,
            seconds: if self.config.record_wall_time { wall } else { 0.0 },
            truncated,
        };
        self.events.push(Event::Iteration {
            repetition: self.repetition,
            record: record.clone(),
            wall_seconds: wall,
        });
        Ok(record)
    }

    pub fn finish(self, records: Vec<IterationRecord>) -> RepetitionResult {
        RepetitionResult {
            repetition: self.repetition,
            seed_set_hash: self.split.seed_set_hash(),
            initial: self.initial,
            records,
            final_channel: self.model.channel,
            events: self.events,
        }
    }
}

fn channel_event(repetition: usize, iteration: usize, w: &ChannelMatrix) -> Event {
    Event::Channel {
        repetition,
        iteration,
        num_classes: w.num_classes(),
        entries: w.rows().to_vec(),
    }
}

/// Trains a fresh model on the labeled part of `state`. The initial
/// weights depend only on the configuration, the repetition and
/// `state.iteration`.
pub fn retrain(config: &ExperimentConfig, data: &Dataset, state: &ALState, repetition: usize) -> Result<TrainedModel> {
    let model_config = config.model_config(data, repetition, state.iteration);
    let model = init_model(&model_config)?;
    let set = LabeledSet::new(
        gather_rows(data.features.view(), &state.labeled),
        state.labels.clone(),
    )?;
    train(model, &set, config.denoise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed_set_hash: u64,
    /// Metrics of the model trained on the seed set alone.
    pub initial: IterationRecord,
    /// One record per iteration `1..=T`.
    pub records: Vec<IterationRecord>,
    pub final_channel: Option<ChannelMatrix>,
    pub events: Vec<Event>,
}

/// Mean and sample standard deviation at one budget point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub iteration: usize,
    pub acquired: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub sigma_mean: f64,
    pub sigma_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub strategy: StrategyId,
    pub denoise: bool,
    pub epsilon: f64,
    pub repetitions: Vec<RepetitionResult>,
    /// Iterations `0..=T`.
    pub summary: Vec<SummaryPoint>,
}

impl RunResult {
    pub fn final_point(&self) -> &SummaryPoint {
        self.summary.last().expect("summary has the initial point")
    }

    /// All events, repetition by repetition.
    pub fn events(&self) -> Vec<Event> {
        self.repetitions.iter().flat_map(|r| r.events.iter().cloned()).collect()
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(reps: &[RepetitionResult]) -> Vec<SummaryPoint> {
    let points = reps.iter().map(|r| r.records.len()).min().unwrap_or(0);
    (0..=points)
        .map(|t| {
            let rec = |r: &RepetitionResult| -> IterationRecord {
                if t == 0 {
                    r.initial.clone()
                } else {
                    r.records[t - 1].clone()
                }
            };
            let recs: Vec<IterationRecord> = reps.iter().map(rec).collect();
            let acc: Vec<f64> = recs.iter().map(|r| r.accuracy).collect();
            let sig: Vec<f64> = recs.iter().map(|r| r.sigma).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let (sigma_mean, sigma_std) = mean_std(&sig);
            SummaryPoint {
                iteration: t,
                acquired: recs.iter().map(|r| r.acquired as f64).sum::<f64>() / recs.len() as f64,
                accuracy_mean,
                accuracy_std,
                sigma_mean,
                sigma_std,
            }
        })
        .collect()
}

/// Runs one full repetition.
pub fn run_repetition(config: &ExperimentConfig, data: &Dataset, repetition: usize) -> Result<RepetitionResult> {
    let mut rep = Repetition::start(config, data, repetition)?;
    let mut records = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        if rep.state().pool.is_empty() {
            let iteration = rep.state().iteration;
            rep.events.push(Event::Warning {
                repetition,
                iteration,
                message: "pool empty; stopping early".into(),
            });
            break;
        }
        records.push(rep.run_iteration()?);
    }
    Ok(rep.finish(records))
}

/// Runs all repetitions (in parallel when `config.jobs > 1`) and
/// aggregates them.
pub fn run_experiment(config: &ExperimentConfig, data: &Dataset) -> Result<RunResult> {
    config.validate()?;
    let run = || -> Result<Vec<RepetitionResult>> {
        (0..config.repetitions)
            .into_par_iter()
            .map(|r| run_repetition(config, data, r))
            .collect()
    };
    let repetitions = if config.jobs == 1 {
        (0..config.repetitions)
            .map(|r| run_repetition(config, data, r))
            .collect::<Result<Vec<_>>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?
            .install(run)?
    };
    Ok(RunResult {
        dataset: config.dataset.clone(),
        strategy: config.strategy,
        denoise: config.denoise,
        epsilon: config.epsilon,
        summary: summarize(&repetitions),
        repetitions,
    })
}
