//! Agglomerative clustering over a precomputed distance matrix, and
//! median-score centroids.
//!
//! Merging is the textbook greedy procedure: repeatedly join the two
//! closest clusters, ties going to the lexicographically smallest pair of
//! cluster ids (a cluster's id is its smallest member row). To stay near
//! `O(n²)` the implementation caches, for every active row `i`, its nearest
//! active neighbour among rows `j > i`; linkage updates are Lance-Williams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{packed_offset, DistanceMatrix};
use crate::scoring::ImportanceScores;

/// Clusters per acquisition step for a batch of `b`.
pub const CLUSTERS_PER_BATCH_ITEM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::config(
                "linkage",
                format!("unknown linkage `{other}` (expected single, complete or average)"),
            )),
        }
    }
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

impl Linkage {
    #[inline]
    fn update(self, d_ki: f64, d_kj: f64, size_i: usize, size_j: usize) -> f64 {
        match self {
            Linkage::Single => d_ki.min(d_kj),
            Linkage::Complete => d_ki.max(d_kj),
            Linkage::Average => {
                let (a, b) = (size_i as f64, size_j as f64);
                (a * d_ki + b * d_kj) / (a + b)
            }
        }
    }
}

/// A partition of the distance-matrix rows into clusters `0..n_clusters`.
///
/// Cluster ids are ordered by each cluster's smallest member row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<usize>,
    n_clusters: usize,
    centroids: Option<Vec<usize>>,
}

impl Clustering {
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_clusters];
        for &c in &assignment {
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::domain("cluster ids must be contiguous from 0"));
        }
        Ok(Clustering {
            assignment,
            n_clusters,
            centroids: None,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Member rows of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (row, &c) in self.assignment.iter().enumerate() {
            out[c].push(row);
        }
        out
    }

    /// Centroid row of every cluster, once [`median_centroids`] has run.
    pub fn centroids(&self) -> Option<&[usize]> {
        self.centroids.as_deref()
    }
}

/// `min(5 b, pool_size)`.
pub fn cluster_count(budget: usize, pool_size: usize) -> usize {
    (CLUSTERS_PER_BATCH_ITEM * budget).min(pool_size)
}

const NONE: usize = usize::MAX;

/// Bottom-up merging from singletons until exactly `n_clusters` remain.
pub fn agglomerate(d: &DistanceMatrix, n_clusters: usize, linkage: Linkage) -> Result<Clustering> {
    let n = d.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::domain(format!(
            "cannot form {n_clusters} clusters from {n} samples"
        )));
    }
    let mut w = d.packed().to_vec();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut nn = vec![NONE; n];
    let mut nn_d = vec![f64::INFINITY; n];

    let recompute = |row: usize, w: &[f64], active: &[bool], nn: &mut [usize], nn_d: &mut [f64]| {
        let mut best = NONE;
        let mut best_d = f64::INFINITY;
        let base = packed_offset_row(n, row);
        for k in row + 1..n {
            if active[k] {
                let v = w[base + (k - row - 1)];
                if v < best_d {
                    best_d = v;
                    best = k;
                }
            }
        }
        nn[row] = best;
        nn_d[row] = best_d;
    };

    for i in 0..n {
        recompute(i, &w, &active, &mut nn, &mut nn_d);
    }

    for _ in 0..n - n_clusters {
        // Globally closest pair, smallest (i, j) on ties.
        let mut i = NONE;
        for r in 0..n {
            if active[r] && nn[r] != NONE && (i == NONE || nn_d[r] < nn_d[i]) {
                i = r;
            }
        }
        let j = nn[i];
        let (si, sj) = (size[i], size[j]);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let ki = w[offset(n, k, i)];
            let kj = w[offset(n, k, j)];
            w[offset(n, k, i)] = linkage.update(ki, kj, si, sj);
        }
        active[j] = false;
        parent[j] = i;
        size[i] += sj;
        nn[j] = NONE;

        recompute(i, &w, &active, &mut nn, &mut nn_d);
        for k in 0..j {
            if !active[k] || k == i {
                continue;
            }
            if nn[k] == i || nn[k] == j {
                recompute(k, &w, &active, &mut nn, &mut nn_d);
            } else if k < i {
                let v = w[offset(n, k, i)];
                if v < nn_d[k] || (v == nn_d[k] && i < nn[k]) {
                    nn[k] = i;
                    nn_d[k] = v;
                }
            }
        }
    }

    // Resolve representatives and relabel by smallest member.
    let mut label = vec![NONE; n];
    let mut next = 0;
    let mut assignment = vec![0; n];
    for row in 0..n {
        let mut r = row;
        while parent[r] != r {
            r = parent[r];
        }
        if label[r] == NONE {
            label[r] = next;
            next += 1;
        }
        assignment[row] = label[r];
    }
    debug_assert_eq!(next, n_clusters);
    Ok(Clustering {
        assignment,
        n_clusters,
        centroids: None,
    })
}

#[inline]
fn offset(n: usize, a: usize, b: usize) -> usize {
    if a < b {
        packed_offset(n, a, b)
    } else {
        packed_offset(n, b, a)
    }
}

/// Offset of `(row, row + 1)`.
#[inline]
fn packed_offset_row(n: usize, row: usize) -> usize {
    row * (2 * n - row - 1) / 2
}

/// Picks, per cluster, the member whose score is the (lower) median of the
/// member scores; equal scores are ordered by row.
pub fn median_centroids(mut clustering: Clustering, scores: &ImportanceScores) -> Result<Clustering> {
    if scores.len() < clustering.assignment.len() {
        return Err(Error::domain(format!(
            "scores cover {} rows but the clustering has {}",
            scores.len(),
            clustering.assignment.len()
        )));
    }
    let centroids = clustering
        .members()
        .into_iter()
        .map(|mut members| {
            if members.is_empty() {
                return Err(Error::Empty("cluster without members"));
            }
            members.sort_by(|&a, &b| {
                scores.as_slice()[a]
                    .total_cmp(&scores.as_slice()[b])
                    .then(a.cmp(&b))
            });
            Ok(members[(members.len() - 1) / 2])
        })
        .collect::<Result<Vec<_>>>()?;
    clustering.centroids = Some(centroids);
    Ok(clustering)
}
