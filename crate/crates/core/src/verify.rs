//! Executable distributional and numerical checks.
//!
//! Each check compares an implementation against an independent reference
//! (closed-form probabilities, Monte-Carlo frequencies, finite differences,
//! brute-force optimisation) and reports what it observed.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::classifier::{
    gather_rows, init_model, project_column_simplex, train, ChannelMatrix, LabeledSet, Mlp, ModelConfig, Trainer,
};
use crate::data::make_blobs;
use crate::error::Result;
use crate::oracle::{make_channel, NoisyOracle, NoisySpec};
use crate::prob::{argmax, DistanceMatrix};
use crate::rng::{rng_from, Rng};
use crate::sampler::{gibbs_draw, marginal_prob, sample_centroid, select_batch};
use crate::clustering::{median_centroids, Clustering};
use crate::scoring::ImportanceScores;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    /// The bound or target `observed` is compared against.
    pub expected: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: impl Into<String>, observed: f64, bound: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: observed <= bound,
            observed,
            expected: bound,
            detail: detail.into(),
        }
    }

    fn at_least(name: impl Into<String>, observed: f64, bound: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: observed >= bound,
            observed,
            expected: bound,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: observed {:.6}, bound {:.6} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.expected,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Monte-Carlo trials per distributional check.
    pub trials: usize,
    /// Adds a flip-rate check against a deliberately wrong channel
    /// (diagonal 0.6 while claiming ε = 0.3), which must fail.
    pub negative_control: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 2024,
            trials: 100_000,
            negative_control: false,
        }
    }
}

/// Distances of a 1-D point set.
pub fn line_distances(points: &[f64]) -> DistanceMatrix {
    let n = points.len();
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dense[i * n + j] = (points[i] - points[j]).abs();
        }
    }
    DistanceMatrix::from_dense(n, &dense, (0..n).collect()).expect("valid distances")
}

fn frequencies(n: usize, trials: usize, mut draw: impl FnMut() -> Result<usize>) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n];
    for _ in 0..trials {
        counts[draw()?] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `β = 0` Gibbs draws over a 4-element leftover pool.
pub fn check_beta_zero_uniform(opts: &VerifyOptions) -> Result<Check> {
    let d = line_distances(&[0.0, 0.1, 0.35, 0.6, 1.0]);
    let mut rng = rng_from(opts.seed, &[1]);
    let freq = frequencies(5, opts.trials, || gibbs_draw(0, &[2], 0.0, &d, &mut rng))?;
    let expected = [0.25, 0.25, 0.0, 0.25, 0.25];
    Ok(Check::at_most(
        "gibbs beta=0 uniform",
        max_deviation(&freq, &expected),
        0.01,
        format!("frequencies {freq:.4?}"),
    ))
}

/// Distances `[0, 0.5, 1]` from the anchor at `β = 2`.
pub fn check_beta_two_three_point(opts: &VerifyOptions) -> Result<Check> {
    let d = line_distances(&[0.0, 0.5, 1.0]);
    let z: f64 = (0..3).map(|i| (-(i as f64)).exp()).sum();
    let analytic: Vec<f64> = (0..3).map(|i| (-(i as f64)).exp() / z).collect();
    let mut rng = rng_from(opts.seed, &[2]);
    let freq = frequencies(3, opts.trials, || gibbs_draw(0, &[], 2.0, &d, &mut rng))?;
    Ok(Check::at_most(
        "gibbs beta=2 three-point",
        max_deviation(&freq, &analytic),
        0.005,
        format!("frequencies {freq:.4?} vs {analytic:.4?}"),
    ))
}

/// At the cap the draw collapses onto the anchor.
pub fn check_beta_cap_collapse(opts: &VerifyOptions) -> Result<Check> {
    let d = line_distances(&[0.0, 0.3, 0.5, 0.9]);
    let mut rng = rng_from(opts.seed, &[3]);
    let freq = frequencies(4, opts.trials, || gibbs_draw(0, &[], 50.0, &d, &mut rng))?;
    Ok(Check::at_least(
        "gibbs beta=cap collapse",
        freq[0],
        0.999,
        "frequency of the anchor",
    ))
}

/// Centroid sampling proportional to scores `(2, 1, 1)` and the uniform
/// fallback for all-zero scores.
pub fn check_centroid_sampling(opts: &VerifyOptions) -> Result<Check> {
    let mut rng = rng_from(opts.seed, &[4]);
    let weighted = frequencies(3, opts.trials, || sample_centroid(&[2.0, 1.0, 1.0], &mut rng))?;
    let flat = frequencies(3, opts.trials, || sample_centroid(&[0.0, 0.0, 0.0], &mut rng))?;
    let dev = max_deviation(&weighted, &[0.5, 0.25, 0.25]).max(max_deviation(&flat, &[1.0 / 3.0; 3]));
    Ok(Check::at_most(
        "centroid importance sampling",
        dev,
        0.01,
        format!("weighted {weighted:.4?}, zero-score {flat:.4?}"),
    ))
}

/// The two-stage sampler (centroid, then Gibbs draw) against the analytic
/// mixture on a 5-sample pool with 3 centroids.
pub fn check_two_stage_marginal(opts: &VerifyOptions) -> Result<Check> {
    let d = line_distances(&[0.0, 0.15, 0.4, 0.7, 1.0]);
    let clustering = Clustering::from_assignment(vec![0, 0, 1, 1, 2])?;
    let scores = ImportanceScores::new(vec![0.2, 0.6, 0.3, 0.9, 0.5])?;
    let clustering = median_centroids(clustering, &scores)?;
    let centroids = clustering.centroids().expect("centroids").to_vec();
    let rho: Vec<f64> = centroids.iter().map(|&c| scores.as_slice()[c]).collect();
    let beta = 2.0;
    let drawn = [3usize];
    let analytic: Vec<f64> = (0..5)
        .map(|s| {
            if drawn.contains(&s) {
                Ok(0.0)
            } else {
                marginal_prob(s, &drawn, beta, &d, &centroids, &rho)
            }
        })
        .collect::<Result<_>>()?;
    let mut rng = rng_from(opts.seed, &[5]);
    let freq = frequencies(5, opts.trials, || {
        let c = centroids[sample_centroid(&rho, &mut rng)?];
        gibbs_draw(c, &drawn, beta, &d, &mut rng)
    })?;
    let total: f64 = analytic.iter().sum();
    let mut check = Check::at_most(
        "two-stage sampler vs marginal",
        max_deviation(&freq, &analytic),
        0.01,
        format!("frequencies {freq:.4?} vs {analytic:.4?}"),
    );
    if (total - 1.0).abs() > 1e-9 {
        check.passed = false;
        check.detail.push_str(&format!("; marginal sums to {total}"));
    }
    Ok(check)
}

/// A whole batch at `β = 0` is a uniform subset of the pool.
pub fn check_batch_beta_zero(opts: &VerifyOptions) -> Result<Check> {
    let n = 10;
    let points: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let d = line_distances(&points);
    let clustering = Clustering::from_assignment((0..n).map(|i| i / 2).collect())?;
    let scores = ImportanceScores::new((0..n).map(|i| 0.1 + i as f64 / 10.0).collect())?;
    let clustering = median_centroids(clustering, &scores)?;
    let mut rng = rng_from(opts.seed, &[6]);
    let trials = opts.trials / 10;
    let mut counts = vec![0usize; n];
    for _ in 0..trials {
        for s in select_batch(&scores, &d, &clustering, 0.0, 3, &mut rng)?.selected {
            counts[s] += 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    Ok(Check::at_most(
        "batch beta=0 inclusion",
        max_deviation(&freq, &vec![0.3; n]),
        0.015,
        format!("inclusion frequencies {freq:.3?}"),
    ))
}

/// Empirical flip rate of an oracle over `trials` fresh samples; also the
/// largest deviation of the wrong-class shares from uniform.
pub fn flip_statistics(oracle: &mut NoisyOracle, trials: usize) -> Result<(f64, f64)> {
    let k = oracle.channel().num_classes();
    let mut flips = 0usize;
    let mut wrong = vec![0usize; k];
    for id in 0..trials {
        let y = id % k;
        let answer = oracle.query(id, y)?;
        if answer != y {
            flips += 1;
            wrong[(answer + k - y) % k] += 1;
        }
    }
    let share_dev = if flips == 0 {
        0.0
    } else {
        wrong[1..]
            .iter()
            .map(|&w| (w as f64 / flips as f64 - 1.0 / (k - 1) as f64).abs())
            .fold(0.0, f64::max)
    };
    Ok((flips as f64 / trials as f64, share_dev))
}

/// Flip rate of a channel against a claimed `ε`.
pub fn check_flip_rate(
    name: &str,
    channel: ChannelMatrix,
    epsilon: f64,
    opts: &VerifyOptions,
) -> Result<Check> {
    let mut oracle = NoisyOracle::with_channel(channel, opts.seed ^ epsilon.to_bits());
    let (rate, share_dev) = flip_statistics(&mut oracle, opts.trials)?;
    let mut check = Check::at_most(
        name,
        (rate - epsilon).abs(),
        0.005,
        format!("flip rate {rate:.4} for epsilon {epsilon}, wrong-class share deviation {share_dev:.4}"),
    );
    check.passed &= share_dev <= 0.01;
    Ok(check)
}

/// Re-querying returns the memoized answer.
pub fn check_memoization(opts: &VerifyOptions) -> Result<Check> {
    let mut oracle = NoisyOracle::with_channel(make_channel(10, 0.5)?, opts.seed);
    let first: Vec<usize> = (0..10_000).map(|i| oracle.query(i, i % 10)).collect::<Result<_>>()?;
    let again: Vec<usize> = (0..10_000).rev().map(|i| oracle.query(i, i % 10)).collect::<Result<_>>()?;
    let mismatches = first.iter().zip(again.iter().rev()).filter(|(a, b)| a != b).count();
    Ok(Check::at_most(
        "oracle memoization",
        mismatches as f64,
        0.0,
        "answers that changed on re-query",
    ))
}

fn random_batch(rng: &mut Rng, n: usize, dim: usize, k: usize) -> (Array2<f64>, Vec<usize>) {
    let x = Array2::from_shape_simple_fn((n, dim), || rng.sample::<f64, _>(StandardNormal));
    let y = (0..n).map(|_| rng.gen_range(0..k)).collect();
    (x, y)
}

fn random_channel(rng: &mut Rng, k: usize) -> ChannelMatrix {
    let mut entries = vec![0.0; k * k];
    for j in 0..k {
        let col: Vec<f64> = (0..k).map(|i| if i == j { 3.0 } else { 0.0 } + rng.gen::<f64>()).collect();
        let s: f64 = col.iter().sum();
        for i in 0..k {
            entries[i * k + j] = col[i] / s;
        }
    }
    ChannelMatrix::from_rows(k, entries).expect("column-stochastic")
}

/// Central differences on 10 random parameters, through `p` and through
/// `W p`, plus every channel entry. Returns the worst relative error.
pub fn gradient_error(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed, &[7]);
    let k = 3;
    let config = ModelConfig {
        hidden_dims: vec![6],
        dropout_rate: 0.0,
        weight_decay: 1e-3,
        seed,
        ..ModelConfig::new(4, k)
    };
    let model = init_model(&config)?;
    let (x, y) = random_batch(&mut rng, 8, 4, k);
    let w = random_channel(&mut rng, k);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
    for channel in [None, Some(w.rows())] {
        let (_, grads) = model.loss_and_gradient(x.view(), &y, channel, None)?;
        for _ in 0..10 {
            let l = rng.gen_range(0..model.layers().len());
            let use_bias = rng.gen_bool(0.3);
            let (analytic, numeric) = if use_bias {
                let j = rng.gen_range(0..model.layers()[l].bias.len());
                let f = |delta: f64| -> Result<f64> {
                    let mut m = model.clone();
                    m.layers_mut()[l].bias[j] += delta;
                    m.loss(x.view(), &y, channel)
                };
                (grads.layers[l].1[j], (f(h)? - f(-h)?) / (2.0 * h))
            } else {
                let (r, c) = model.layers()[l].weights.dim();
                let (i, j) = (rng.gen_range(0..r), rng.gen_range(0..c));
                let f = |delta: f64| -> Result<f64> {
                    let mut m = model.clone();
                    m.layers_mut()[l].weights[[i, j]] += delta;
                    m.loss(x.view(), &y, channel)
                };
                (grads.layers[l].0[[i, j]], (f(h)? - f(-h)?) / (2.0 * h))
            };
            worst = worst.max(rel(analytic, numeric));
        }
        if let (Some(wr), Some(gc)) = (channel, grads.channel.as_ref()) {
            for e in 0..k * k {
                let f = |delta: f64| -> Result<f64> {
                    let mut moved = wr.to_vec();
                    moved[e] += delta;
                    model.loss(x.view(), &y, Some(&moved))
                };
                worst = worst.max(rel(gc[e], (f(h)? - f(-h)?) / (2.0 * h)));
            }
        }
    }
    Ok(worst)
}

pub fn check_gradients(opts: &VerifyOptions) -> Result<Check> {
    Ok(Check::at_most(
        "finite-difference gradients",
        gradient_error(opts.seed)?,
        1e-4,
        "worst relative error",
    ))
}

/// Largest column-simplex violation of `W` over every step of a noisy
/// training run.
pub fn channel_violation_during_training(seed: u64, steps: usize) -> Result<f64> {
    let mut rng = rng_from(seed, &[8]);
    let k = 4;
    let config = ModelConfig {
        hidden_dims: vec![8],
        channel_learning_rate: 0.5,
        seed,
        ..ModelConfig::new(3, k)
    };
    let mut trainer = Trainer::new(init_model(&config)?, true);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let (x, y) = random_batch(&mut rng, 16, 3, k);
        trainer.step(x.view(), &y)?;
        let w = trainer.channel().expect("denoising trainer");
        worst = worst.max(w.simplex_violation());
    }
    Ok(worst)
}

pub fn check_channel_constraint(opts: &VerifyOptions) -> Result<Check> {
    Ok(Check::at_most(
        "W column simplex after every step",
        channel_violation_during_training(opts.seed, 200)?,
        1e-9,
        "worst violation over 200 steps",
    ))
}

/// Exact Euclidean projection onto the simplex by enumerating supports:
/// for each support `S`, the KKT point is `v_i - θ` on `S` with
/// `θ = (Σ_S v - 1) / |S|`; the feasible candidate closest to `v` wins.
pub fn projection_by_enumeration(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut best = Vec::new();
    let mut best_d = f64::INFINITY;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let theta = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let x: Vec<f64> = (0..k)
            .map(|i| if mask & (1 << i) != 0 { v[i] - theta } else { 0.0 })
            .collect();
        if x.iter().any(|&xi| xi < 0.0) {
            continue;
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = x;
        }
    }
    best
}

/// Minimises `‖x - v‖²` over the 3-simplex by successively finer grids.
pub fn projection_by_grid(v: &[f64; 3]) -> [f64; 3] {
    let obj = |a: f64, b: f64| {
        let c = 1.0 - a - b;
        (a - v[0]).powi(2) + (b - v[1]).powi(2) + (c - v[2]).powi(2)
    };
    let (mut ca, mut cb) = (1.0 / 3.0, 1.0 / 3.0);
    let mut radius = 1.0;
    for _ in 0..40 {
        let steps = 20;
        let mut best = (obj(ca, cb), ca, cb);
        for i in -steps..=steps {
            for j in -steps..=steps {
                let a = ca + radius * i as f64 / steps as f64;
                let b = cb + radius * j as f64 / steps as f64;
                if a < 0.0 || b < 0.0 || a + b > 1.0 {
                    continue;
                }
                let o = obj(a, b);
                if o < best.0 {
                    best = (o, a, b);
                }
            }
        }
        (ca, cb) = (best.1, best.2);
        radius *= 0.5;
    }
    [ca, cb, 1.0 - ca - cb]
}

/// Projection against both references on random vectors.
pub fn projection_error(seed: u64, vectors: usize) -> Result<f64> {
    let mut rng = rng_from(seed, &[9]);
    let mut worst: f64 = 0.0;
    for t in 0..vectors {
        let k = 2 + t % 5;
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = project_column_simplex(&v)?;
        let reference = projection_by_enumeration(&v);
        worst = worst.max(max_deviation(p.as_slice(), &reference));
        if k == 3 {
            let grid = projection_by_grid(&[v[0], v[1], v[2]]);
            worst = worst.max(max_deviation(p.as_slice(), &grid));
        }
    }
    Ok(worst)
}

pub fn check_projection(opts: &VerifyOptions) -> Result<Check> {
    Ok(Check::at_most(
        "simplex projection vs brute force",
        projection_error(opts.seed, 1000)?,
        1e-6,
        "worst entrywise deviation over 1000 vectors",
    ))
}

/// Runs every check in a fixed order.
pub fn run_all(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = vec![
        check_beta_zero_uniform(opts)?,
        check_beta_two_three_point(opts)?,
        check_beta_cap_collapse(opts)?,
        check_centroid_sampling(opts)?,
        check_two_stage_marginal(opts)?,
        check_batch_beta_zero(opts)?,
    ];
    for eps in [0.1, 0.2, 0.3, 0.4] {
        checks.push(check_flip_rate(
            &format!("K-SC flip rate epsilon={eps}"),
            make_channel(10, eps)?,
            eps,
            opts,
        )?);
    }
    checks.push(check_memoization(opts)?);
    checks.push(check_gradients(opts)?);
    checks.push(check_channel_constraint(opts)?);
    checks.push(check_projection(opts)?);
    if opts.negative_control {
        checks.push(check_flip_rate(
            "negative control: corrupted channel",
            corrupted_channel(10)?,
            0.3,
            opts,
        )?);
    }
    Ok(checks)
}

/// Setup of the denoising-layer recovery experiment: 3-class blobs whose
/// training labels pass through a symmetric channel, scored on clean
/// held-out samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverySetup {
    pub epsilon: f64,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub model: ModelConfig,
}

impl Default for RecoverySetup {
    /// Enough capacity and epochs for the plain network to memorize the
    /// flipped labels; that is the regime where the channel has work to do.
    fn default() -> Self {
        RecoverySetup {
            epsilon: 0.3,
            dim: 5,
            train_per_class: 400,
            test_per_class: 500,
            separation: 3.0,
            model: ModelConfig {
                hidden_dims: vec![128],
                dropout_rate: 0.0,
                epochs: 100,
                batch_size: 16,
                learning_rate: 0.05,
                weight_decay: 0.0,
                ..ModelConfig::new(5, 3)
            },
        }
    }
}

/// One seed of the recovery experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryOutcome {
    pub seed: u64,
    pub accuracy_plain: f64,
    pub accuracy_denoised: f64,
    /// Entrywise max distance between the learned and the injected channel.
    pub channel_error: f64,
}

/// Trains the same network with and without the channel layer on noisy
/// labels and compares them on clean test data.
pub fn denoise_recovery(setup: &RecoverySetup, seed: u64) -> Result<RecoveryOutcome> {
    let k = 3;
    let per_class = setup.train_per_class + setup.test_per_class;
    let data = make_blobs(k, per_class, setup.dim, setup.separation, seed)?;
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|i| i % per_class < setup.train_per_class);
    let truth = make_channel(k, setup.epsilon)?;
    let mut oracle = NoisyOracle::new(&NoisySpec {
        num_classes: k,
        epsilon: setup.epsilon,
        seed,
    })?;
    let noisy = train_rows
        .iter()
        .map(|&i| oracle.query(i, data.labels[i]))
        .collect::<Result<Vec<_>>>()?;
    let set = LabeledSet::new(gather_rows(data.features.view(), &train_rows), noisy)?;
    let test = gather_rows(data.features.view(), &test_rows);
    let config = ModelConfig {
        input_dim: setup.dim,
        num_classes: k,
        seed,
        ..setup.model.clone()
    };
    let accuracy = |model: &Mlp| -> Result<f64> {
        let probs = model.predict_batch(test.view())?;
        let hits = probs
            .rows()
            .into_iter()
            .zip(&test_rows)
            .filter(|(p, &i)| argmax(p.as_slice().expect("contiguous")) == data.labels[i])
            .count();
        Ok(hits as f64 / test_rows.len() as f64)
    };
    let plain = train(init_model(&config)?, &set, false)?;
    let denoised = train(init_model(&config)?, &set, true)?;
    Ok(RecoveryOutcome {
        seed,
        accuracy_plain: accuracy(&plain.model)?,
        accuracy_denoised: accuracy(&denoised.model)?,
        channel_error: denoised.channel.expect("denoising run").max_abs_diff(&truth),
    })
}

/// Diagonal 0.6, remaining mass spread evenly.
pub fn corrupted_channel(k: usize) -> Result<ChannelMatrix> {
    make_channel(k, 0.4)
}
