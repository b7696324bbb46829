//! Annealed batch construction.
//!
//! Each draw first picks a cluster centroid `c` with probability
//! proportional to its importance score, then draws a sample `s` from the
//! not-yet-selected pool `P'` with Gibbs weights `exp(-β d(c, s))`. At
//! `β = 0` the draw is uniform over `P'`; as `β → ∞` it collapses onto
//! the centroid itself.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::prob::DistanceMatrix;
use crate::rng::Rng;
use crate::scoring::ImportanceScores;

/// Below this total score mass, centroids are drawn uniformly.
pub const DEGENERATE_MASS: f64 = 1e-12;

/// One draw of the batch: the centroid that anchored it, the drawn sample
/// and the inverse temperature used. Indices are distance-matrix rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub centroid: usize,
    pub sample: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDraw {
    /// Distance-matrix rows in draw order.
    pub selected: Vec<usize>,
    pub trace: Vec<DrawRecord>,
    /// Set when the pool ran out before `b` draws.
    pub truncated: bool,
}

/// Categorical draw with probabilities `scores[k] / Σ scores`, uniform when
/// the total mass is degenerate.
pub fn sample_centroid(scores: &[f64], rng: &mut Rng) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Empty("no centroids to sample"));
    }
    if scores.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::domain("centroid scores must be finite and non-negative"));
    }
    let total: f64 = scores.iter().sum();
    if total < DEGENERATE_MASS {
        return Ok(rng.gen_range(0..scores.len()));
    }
    Ok(categorical(scores, total, rng))
}

fn categorical(weights: &[f64], total: f64, rng: &mut Rng) -> usize {
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Gibbs weights around `anchor` over the rows not marked `taken`, shifted
/// by the minimum distance. Infinite `beta` keeps only the nearest rows.
fn gibbs_weights(anchor: usize, taken: &[bool], beta: f64, d: &DistanceMatrix, out: &mut Vec<f64>) -> f64 {
    out.clear();
    let mut d_min = f64::INFINITY;
    for s in 0..d.len() {
        if !taken[s] {
            d_min = d_min.min(d.get(anchor, s));
        }
    }
    let mut total = 0.0;
    for s in 0..d.len() {
        let w = if taken[s] {
            0.0
        } else {
            let gap = d.get(anchor, s) - d_min;
            if beta.is_infinite() {
                if gap == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-beta * gap).exp()
            }
        };
        total += w;
        out.push(w);
    }
    total
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) {
        return Err(Error::domain(format!("inverse temperature {beta} must be >= 0")));
    }
    Ok(())
}

fn taken_mask(n: usize, drawn: &[usize]) -> Result<Vec<bool>> {
    let mut taken = vec![false; n];
    for &s in drawn {
        if s >= n {
            return Err(Error::domain(format!("drawn row {s} outside pool of {n}")));
        }
        taken[s] = true;
    }
    Ok(taken)
}

/// Draws one row of `P' = pool \ drawn` with probability
/// `exp(-β d(anchor, s)) / Σ_{s' ∈ P'} exp(-β d(anchor, s'))`.
pub fn gibbs_draw(
    anchor: usize,
    drawn: &[usize],
    beta: f64,
    d: &DistanceMatrix,
    rng: &mut Rng,
) -> Result<usize> {
    check_beta(beta)?;
    if anchor >= d.len() {
        return Err(Error::domain(format!("anchor row {anchor} outside pool")));
    }
    let taken = taken_mask(d.len(), drawn)?;
    if taken.iter().all(|&t| t) {
        return Err(Error::Empty("leftover pool"));
    }
    let mut weights = Vec::with_capacity(d.len());
    let total = gibbs_weights(anchor, &taken, beta, d, &mut weights);
    Ok(categorical(&weights, total, rng))
}

/// Builds a batch of up to `budget` distinct rows. Centroids are redrawn
/// with replacement on every draw; a centroid whose own row is already
/// taken still anchors the distances.
pub fn select_batch(
    scores: &ImportanceScores,
    d: &DistanceMatrix,
    clustering: &Clustering,
    beta: f64,
    budget: usize,
    rng: &mut Rng,
) -> Result<BatchDraw> {
    check_beta(beta)?;
    let centroids = clustering
        .centroids()
        .ok_or_else(|| Error::domain("clustering has no centroids"))?;
    let centroid_scores: Vec<f64> = centroids
        .iter()
        .map(|&c| {
            scores
                .get(c)
                .ok_or_else(|| Error::domain(format!("no score for centroid row {c}")))
        })
        .collect::<Result<_>>()?;
    let n = d.len();
    let mut taken = vec![false; n];
    let mut weights = Vec::with_capacity(n);
    let mut out = BatchDraw {
        selected: Vec::with_capacity(budget.min(n)),
        trace: Vec::with_capacity(budget.min(n)),
        truncated: false,
    };
    for _ in 0..budget {
        if out.selected.len() == n {
            out.truncated = true;
            break;
        }
        let anchor = centroids[sample_centroid(&centroid_scores, rng)?];
        let total = gibbs_weights(anchor, &taken, beta, d, &mut weights);
        let s = categorical(&weights, total, rng);
        taken[s] = true;
        out.selected.push(s);
        out.trace.push(DrawRecord {
            centroid: anchor,
            sample: s,
            beta,
        });
    }
    Ok(out)
}

/// Probability that the next draw is row `s`, mixing the Gibbs draw over
/// centroids weighted by their scores.
pub fn marginal_prob(
    s: usize,
    drawn: &[usize],
    beta: f64,
    d: &DistanceMatrix,
    centroids: &[usize],
    centroid_scores: &[f64],
) -> Result<f64> {
    check_beta(beta)?;
    if centroids.len() != centroid_scores.len() || centroids.is_empty() {
        return Err(Error::domain("need one score per centroid"));
    }
    if s >= d.len() {
        return Err(Error::domain(format!("row {s} outside pool")));
    }
    let taken = taken_mask(d.len(), drawn)?;
    if taken[s] {
        return Err(Error::domain(format!("row {s} was already drawn")));
    }
    let total: f64 = centroid_scores.iter().sum();
    let mix: Vec<f64> = if total < DEGENERATE_MASS {
        vec![1.0 / centroids.len() as f64; centroids.len()]
    } else {
        centroid_scores.iter().map(|r| r / total).collect()
    };
    let mut weights = Vec::with_capacity(d.len());
    let mut p = 0.0;
    for (&c, &m) in centroids.iter().zip(&mix) {
        if m == 0.0 {
            continue;
        }
        let z = gibbs_weights(c, &taken, beta, d, &mut weights);
        p += m * weights[s] / z;
    }
    Ok(p)
}
