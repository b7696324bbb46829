//! Column-stochastic channel matrices and Euclidean simplex projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{ProbVec, SUM_TOLERANCE};

/// A `K × K` matrix whose entry `(i, j)` is `p(y' = i | y = j)`.
///
/// Every column lies on the probability simplex. The same type holds the
/// label-noise channel of an oracle and the learned denoising weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    k: usize,
    /// Row-major entries.
    entries: Vec<f64>,
}

impl ChannelMatrix {
    pub fn identity(k: usize) -> Self {
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            entries[i * k + i] = 1.0;
        }
        ChannelMatrix { k, entries }
    }

    /// The K-symmetric channel: keep the label with probability `1 - ε`,
    /// otherwise move to one of the other `K - 1` classes uniformly.
    pub fn symmetric(k: usize, epsilon: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::domain(format!("channel needs K >= 2, got {k}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::domain(format!("flip probability {epsilon} outside [0, 1]")));
        }
        let off = epsilon / (k - 1) as f64;
        let mut entries = vec![off; k * k];
        for i in 0..k {
            entries[i * k + i] = 1.0 - epsilon;
        }
        Ok(ChannelMatrix { k, entries })
    }

    /// Builds a channel from row-major entries, validating every column.
    pub fn from_rows(k: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                found: entries.len(),
            });
        }
        let m = ChannelMatrix { k, entries };
        for j in 0..k {
            ProbVec::new(m.column(j)).map_err(|e| {
                Error::domain(format!("column {j} is not a distribution: {e}"))
            })?;
        }
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.k).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    /// `p' = W p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let k = self.k;
        (0..k)
            .map(|i| {
                self.entries[i * k..(i + 1) * k]
                    .iter()
                    .zip(p)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }

    /// Projects each column back onto the simplex.
    pub fn project_columns(&mut self) {
        let k = self.k;
        let mut col = vec![0.0; k];
        for j in 0..k {
            for i in 0..k {
                col[i] = self.entries[i * k + j];
            }
            project_in_place(&mut col);
            for i in 0..k {
                self.entries[i * k + j] = col[i];
            }
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &ChannelMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any column sum from 1, or of any entry below 0.
    pub fn simplex_violation(&self) -> f64 {
        let k = self.k;
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let col = self.column(j);
            let s: f64 = col.iter().sum();
            worst = worst.max((s - 1.0).abs());
            for v in col {
                worst = worst.max(-v);
            }
        }
        worst
    }

    pub fn is_column_stochastic(&self) -> bool {
        self.simplex_violation() <= SUM_TOLERANCE
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_column_simplex(v: &[f64]) -> Result<ProbVec> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("cannot project a non-finite vector"));
    }
    let mut out = v.to_vec();
    project_in_place(&mut out);
    ProbVec::new(out)
}

pub(crate) fn project_in_place(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
