//! Batch selection strategies.
//!
//! All strategies share one entry point, [`select`], which returns dataset
//! indices drawn from the current pool. Pool order is ascending dataset
//! index, so "lowest index" tie-breaks are the same in both coordinates.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifier::{gather_rows, Mlp};
use crate::clustering::{agglomerate, cluster_count, median_centroids, Linkage};
use crate::error::{Error, Result};
use crate::prob::pairwise_distances_raw;
use crate::rng::Rng;
use crate::sampler::{select_batch, DrawRecord};
use crate::scoring::{score_pool, ImportanceScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    Dean,
    Random,
    Bald,
    Entropy,
    Coreset,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] = [
        StrategyId::Dean,
        StrategyId::Random,
        StrategyId::Bald,
        StrategyId::Entropy,
        StrategyId::Coreset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Dean => "dean",
            StrategyId::Random => "random",
            StrategyId::Bald => "bald",
            StrategyId::Entropy => "entropy",
            StrategyId::Coreset => "coreset",
        }
    }
}

impl std::fmt::Display for StrategyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::config(
                    "strategy",
                    format!("unknown strategy `{s}` (expected dean, random, bald, entropy or coreset)"),
                )
            })
    }
}

/// Labeled set, pool and iteration counter of one active-learning run.
/// All indices refer to rows of the underlying dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ALState {
    pub labeled: Vec<usize>,
    /// Oracle answers aligned with `labeled`.
    pub labels: Vec<usize>,
    /// Ascending.
    pub pool: Vec<usize>,
    pub iteration: usize,
}

impl ALState {
    pub fn new(labeled: Vec<usize>, labels: Vec<usize>, mut pool: Vec<usize>) -> Result<Self> {
        if labeled.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labeled.len(),
                found: labels.len(),
            });
        }
        pool.sort_unstable();
        Ok(ALState {
            labeled,
            labels,
            pool,
            iteration: 0,
        })
    }

    /// Moves `batch` from the pool into the labeled set.
    pub fn absorb(&mut self, batch: &[usize], labels: &[usize]) -> Result<()> {
        if batch.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                found: labels.len(),
            });
        }
        let mut remove = batch.to_vec();
        remove.sort_unstable();
        let before = self.pool.len();
        self.pool.retain(|i| remove.binary_search(i).is_err());
        if before - self.pool.len() != remove.len() {
            return Err(Error::domain("batch contains indices outside the pool"));
        }
        self.labeled.extend_from_slice(batch);
        self.labels.extend_from_slice(labels);
        self.iteration += 1;
        Ok(())
    }
}

/// Everything a strategy may look at.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub model: &'a Mlp,
    /// Features of the whole dataset.
    pub features: ArrayView2<'a, f64>,
    pub state: &'a ALState,
    /// Monte-Carlo passes for BALD and entropy scores.
    pub passes: usize,
    /// Seed of the dropout masks used for scoring.
    pub score_seed: u64,
    /// Inverse temperature for DeAn.
    pub beta: f64,
    pub linkage: Linkage,
    /// When set, DeAn clusters a uniform subsample of at most this many
    /// pool samples.
    pub max_cluster_pool: Option<usize>,
}

/// Extra information reported by DeAn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeanTrace {
    pub n_clusters: usize,
    /// Dataset indices.
    pub centroids: Vec<usize>,
    /// Dataset indices.
    pub draws: Vec<DrawRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Dataset indices in selection order.
    pub indices: Vec<usize>,
    /// Set when fewer than the requested number could be selected.
    pub truncated: bool,
    pub dean: Option<DeanTrace>,
}

/// Selects up to `budget` distinct pool samples.
pub fn select(strategy: StrategyId, ctx: &SelectionContext<'_>, budget: usize, rng: &mut Rng) -> Result<Selection> {
    let pool = &ctx.state.pool;
    if pool.is_empty() {
        return Err(Error::Empty("pool"));
    }
    if pool.len() <= budget {
        return Ok(Selection {
            indices: pool.clone(),
            truncated: pool.len() < budget,
            dean: None,
        });
    }
    let positions = match strategy {
        StrategyId::Random => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.partial_shuffle(rng, budget).0.to_vec()
        }
        StrategyId::Bald | StrategyId::Entropy => {
            let x = gather_rows(ctx.features, pool);
            let scores = score_pool(ctx.model, x.view(), pool, ctx.passes, ctx.score_seed)?;
            let values = if strategy == StrategyId::Bald {
                scores.bald
            } else {
                scores.entropy
            };
            top_b(&values, budget)
        }
        StrategyId::Coreset => {
            let labeled = ctx.model.penultimate_batch(gather_rows(ctx.features, &ctx.state.labeled).view())?;
            let candidates = ctx.model.penultimate_batch(gather_rows(ctx.features, pool).view())?;
            kcenter_greedy(labeled.view(), candidates.view(), budget)?
        }
        StrategyId::Dean => return dean(ctx, budget, rng),
    };
    Ok(Selection {
        indices: positions.into_iter().map(|p| pool[p]).collect(),
        truncated: false,
        dean: None,
    })
}

/// Positions of the `b` largest values; ties go to the lower position.
pub fn top_b(values: &[f64], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order.truncate(b);
    order
}

fn dean(ctx: &SelectionContext<'_>, budget: usize, rng: &mut Rng) -> Result<Selection> {
    let mut candidates = ctx.state.pool.clone();
    if let Some(cap) = ctx.max_cluster_pool {
        if candidates.len() > cap.max(budget) {
            let mut kept = candidates.partial_shuffle(rng, cap.max(budget)).0.to_vec();
            kept.sort_unstable();
            candidates = kept;
        }
    }
    let x = gather_rows(ctx.features, &candidates);
    let scores = score_pool(ctx.model, x.view(), &candidates, ctx.passes, ctx.score_seed)?;
    let scores = ImportanceScores::new(scores.bald)?;
    let probs = ctx.model.predict_batch(x.view())?;
    let rows: Vec<&[f64]> = probs
        .axis_iter(Axis(0))
        .map(|r| r.to_slice().expect("contiguous row"))
        .collect();
    let d = pairwise_distances_raw(&rows, Some(&candidates))?;
    let n_clusters = cluster_count(budget, candidates.len());
    let clustering = agglomerate(&d, n_clusters, ctx.linkage)?;
    let clustering = median_centroids(clustering, &scores)?;
    let draw = select_batch(&scores, &d, &clustering, ctx.beta, budget, rng)?;
    let to_pool = |row: usize| d.pool_index(row);
    Ok(Selection {
        indices: draw.selected.iter().map(|&r| to_pool(r)).collect(),
        truncated: draw.truncated,
        dean: Some(DeanTrace {
            n_clusters,
            centroids: clustering
                .centroids()
                .expect("centroids set")
                .iter()
                .map(|&r| to_pool(r))
                .collect(),
            draws: draw
                .trace
                .iter()
                .map(|t| DrawRecord {
                    centroid: to_pool(t.centroid),
                    sample: to_pool(t.sample),
                    beta: t.beta,
                })
                .collect(),
        }),
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-first traversal: repeatedly picks the pool row farthest (in
/// Euclidean distance) from everything covered so far. With nothing
/// labeled, row 0 seeds the traversal. Returns pool row positions.
pub fn kcenter_greedy(labeled: ArrayView2<f64>, pool: ArrayView2<f64>, b: usize) -> Result<Vec<usize>> {
    if labeled.nrows() > 0 && labeled.ncols() != pool.ncols() {
        return Err(Error::DimensionMismatch {
            expected: pool.ncols(),
            found: labeled.ncols(),
        });
    }
    let n = pool.nrows();
    let b = b.min(n);
    let mut picks = Vec::with_capacity(b);
    if b == 0 {
        return Ok(picks);
    }
    let rows: Vec<Vec<f64>> = pool.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut min_d = vec![f64::INFINITY; n];
    for l in labeled.rows() {
        let l = l.to_vec();
        for (m, r) in min_d.iter_mut().zip(&rows) {
            *m = m.min(squared_distance(&l, r));
        }
    }
    let mut taken = vec![false; n];
    for _ in 0..b {
        let mut best = usize::MAX;
        for i in 0..n {
            if !taken[i] && (best == usize::MAX || min_d[i] > min_d[best]) {
                best = i;
            }
        }
        taken[best] = true;
        picks.push(best);
        let anchor = rows[best].clone();
        for (m, r) in min_d.iter_mut().zip(&rows) {
            *m = m.min(squared_distance(&anchor, r));
        }
    }
    Ok(picks)
}

/// Largest distance from any pool row to its nearest covered point after
/// selecting `picks`.
pub fn coverage_radius(labeled: ArrayView2<f64>, pool: ArrayView2<f64>, picks: &[usize]) -> f64 {
    pool.rows()
        .into_iter()
        .map(|r| {
            let r = r.to_vec();
            let from_labeled = labeled
                .rows()
                .into_iter()
                .map(|l| squared_distance(&l.to_vec(), &r))
                .fold(f64::INFINITY, f64::min);
            picks
                .iter()
                .map(|&p| squared_distance(&pool.row(p).to_vec(), &r))
                .fold(from_labeled, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}
