//! Probability-vector kernels.
//!
//! All logarithms are base 2, so entropies and divergences are in bits and
//! the square-root Jensen-Shannon distance lives in `[0, 1]`.

use crate::error::{Error, Result};

/// Tolerance on `Σ p_i = 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Entries in `[-CLAMP_TOLERANCE, 0)` are treated as rounding noise and set to 0.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// A probability vector on the simplex with at least two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain(format!(
                "probability vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::domain("probability vector has non-finite entries"));
            }
            if *v < 0.0 {
                if *v < -CLAMP_TOLERANCE {
                    return Err(Error::domain(format!("negative probability {v}")));
                }
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::domain(format!(
                "probability vector sums to {sum}, not 1"
            )));
        }
        Ok(ProbVec(values))
    }

    /// The uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("uniform distribution over zero classes"));
        }
        ProbVec::new(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl TryFrom<Vec<f64>> for ProbVec {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ProbVec::new(values)
    }
}

impl AsRef<[f64]> for ProbVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Kullback-Leibler divergence, which is infinite when `q` does not dominate `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn finite(self) -> Option<f64> {
        match self {
            Divergence::Finite(v) => Some(v),
            Divergence::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Divergence::Infinite)
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(p: &ProbVec) -> f64 {
    entropy_bits(&p.0)
}

pub fn kl(p: &ProbVec, q: &ProbVec) -> Result<Divergence> {
    same_len(p.len(), q.len())?;
    let mut acc = 0.0;
    for (&a, &b) in p.0.iter().zip(&q.0) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(Divergence::Infinite);
            }
            acc += a * (a / b).log2();
        }
    }
    Ok(Divergence::Finite(acc.max(0.0)))
}

/// Square root of the base-2 Jensen-Shannon divergence.
pub fn js_distance(p: &ProbVec, q: &ProbVec) -> Result<f64> {
    same_len(p.len(), q.len())?;
    Ok(js_distance_with_entropies(
        &p.0,
        &q.0,
        entropy_bits(&p.0),
        entropy_bits(&q.0),
    ))
}

/// Symmetric matrix of square-root JS distances, stored as a packed upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    packed: Vec<f64>,
    index_map: Vec<usize>,
}

impl DistanceMatrix {
    /// Builds a matrix from a full row-major `n × n` array. Only the strict
    /// upper triangle is read; symmetry is assumed.
    pub fn from_dense(n: usize, dense: &[f64], index_map: Vec<usize>) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: dense.len(),
            });
        }
        if index_map.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: index_map.len(),
            });
        }
        let mut packed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let d = dense[i * n + j];
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::domain(format!("distance {d} outside [0, 1]")));
                }
                packed.push(d);
            }
        }
        Ok(DistanceMatrix {
            n,
            packed,
            index_map,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Pool index (caller-defined id) of row `row`.
    pub fn pool_index(&self, row: usize) -> usize {
        self.index_map[row]
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.packed[packed_offset(self.n, a, b)]
    }

    /// Row `i` expanded into a dense vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(i, j)).collect()
    }

    pub(crate) fn packed(&self) -> &[f64] {
        &self.packed
    }
}

/// Offset of `(i, j)` with `i < j` in a packed strict upper triangle.
#[inline]
pub(crate) fn packed_offset(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Pairwise square-root JS distances between all vectors; row `i` maps to
/// caller id `ids[i]`, or to `i` when `ids` is `None`.
pub fn pairwise_distances(probs: &[ProbVec], ids: Option<&[usize]>) -> Result<DistanceMatrix> {
    let rows: Vec<&[f64]> = probs.iter().map(|p| p.as_slice()).collect();
    pairwise_distances_raw(&rows, ids)
}

pub(crate) fn pairwise_distances_raw(rows: &[&[f64]], ids: Option<&[usize]>) -> Result<DistanceMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty("pairwise distances over an empty pool"));
    }
    let k = rows[0].len();
    for r in rows {
        same_len(k, r.len())?;
    }
    let index_map = match ids {
        Some(ids) => {
            same_len(n, ids.len())?;
            ids.to_vec()
        }
        None => (0..n).collect(),
    };
    let entropies: Vec<f64> = rows.iter().map(|r| entropy_bits(r)).collect();
    let mut packed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            packed.push(js_distance_with_entropies(
                rows[i],
                rows[j],
                entropies[i],
                entropies[j],
            ));
        }
    }
    Ok(DistanceMatrix {
        n,
        packed,
        index_map,
    })
}

#[inline]
pub(crate) fn entropy_bits(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.log2();
        }
    }
    h
}

/// JS(p, q) = H(m) - (H(p) + H(q)) / 2 with `m` the midpoint.
#[inline]
fn js_distance_with_entropies(p: &[f64], q: &[f64], hp: f64, hq: f64) -> f64 {
    let mut hm = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if m > 0.0 {
            hm -= m * m.log2();
        }
    }
    (hm - 0.5 * (hp + hq)).clamp(0.0, 1.0).sqrt()
}

#[inline]
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn same_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVec {
        ProbVec::new(v.to_vec()).unwrap()
    }

    // Independent reference: literal KL-based definition.
    fn js_reference(p: &[f64], q: &[f64]) -> f64 {
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
        let kl = |x: &[f64]| -> f64 {
            x.iter()
                .zip(&m)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, b)| a * (a / b).log2())
                .sum()
        };
        ((kl(p) + kl(q)) / 2.0).max(0.0).sqrt()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&pv(&[1.0, 0.0])), 0.0);
        assert_abs_diff_eq!(entropy(&pv(&[0.5, 0.5])), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy(&pv(&[0.7, 0.3])), 0.881_290_899_230_692_6, epsilon = 1e-12);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl(&pv(&[0.3, 0.7]), &pv(&[0.3, 0.7])).unwrap(), Divergence::Finite(0.0));
        assert_abs_diff_eq!(
            kl(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap().finite().unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(kl(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap().is_infinite());
        assert!(matches!(
            kl(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.25, 0.25])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn js_examples() {
        let p = pv(&[0.2, 0.8]);
        assert_eq!(js_distance(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(
            js_distance(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            js_distance(&pv(&[0.5, 0.5]), &pv(&[1.0, 0.0])).unwrap(),
            0.557_923_045_284_143_9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn probvec_validation() {
        assert!(ProbVec::new(vec![1.0]).is_err());
        assert!(ProbVec::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVec::new(vec![1.1, -0.1]).is_err());
        assert!(ProbVec::new(vec![f64::NAN, 1.0]).is_err());
        let p = ProbVec::new(vec![1.0 + 5e-13, -5e-13]).unwrap();
        assert_eq!(p.as_slice()[1], 0.0);
    }

    #[test]
    fn pairwise_examples() {
        let one = pairwise_distances(&[pv(&[0.4, 0.6])], None).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.get(0, 0), 0.0);

        let same = pairwise_distances(&[pv(&[0.4, 0.6]), pv(&[0.4, 0.6])], None).unwrap();
        assert_eq!(same.get(0, 1), 0.0);

        let d = pairwise_distances(
            &[pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[0.5, 0.5])],
            Some(&[10, 11, 12]),
        )
        .unwrap();
        assert_abs_diff_eq!(d.get(0, 1), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(0, 2), 0.557_923_045_284_143_9, epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(2, 1), 0.557_923_045_284_143_9, epsilon = 1e-12);
        assert_eq!(d.pool_index(2), 12);

        let mixed = pairwise_distances(&[pv(&[0.5, 0.5]), pv(&[0.2, 0.3, 0.5])], None);
        assert!(matches!(mixed, Err(Error::DimensionMismatch { .. })));
        assert!(pairwise_distances(&[], None).is_err());
    }

    #[test]
    fn packed_offsets_cover_triangle() {
        let n = 7;
        let mut seen = vec![false; n * (n - 1) / 2];
        for i in 0..n {
            for j in i + 1..n {
                let o = packed_offset(n, i, j);
                assert!(!seen[o]);
                seen[o] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn js_is_a_bounded_symmetric_metric(
            (p, q, r) in (2usize..8).prop_flat_map(|k| (simplex(k), simplex(k), simplex(k)))
        ) {
            let (p, q, r) = (pv(&p), pv(&q), pv(&r));
            let pq = js_distance(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert_eq!(pq, js_distance(&q, &p).unwrap());
            prop_assert_eq!(js_distance(&p, &p).unwrap(), 0.0);
            prop_assert!((pq - js_reference(p.as_slice(), q.as_slice())).abs() < 1e-9);
            let pr = js_distance(&p, &r).unwrap();
            let rq = js_distance(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-9);
        }

        #[test]
        fn kl_is_nonnegative((p, q) in (2usize..8).prop_flat_map(|k| (simplex(k), simplex(k)))) {
            let q: Vec<f64> = q.iter().map(|x| 0.5 * x + 0.5 / q.len() as f64).collect();
            let d = kl(&pv(&p), &pv(&q)).unwrap().finite().unwrap();
            prop_assert!(d >= 0.0);
            let max_gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if d == 0.0 {
                prop_assert!(max_gap < 1e-9);
            }
        }

        #[test]
        fn entropy_peaks_at_uniform(p in (2usize..10).prop_flat_map(simplex)) {
            let k = p.len();
            let h = entropy(&pv(&p));
            prop_assert!(h <= (k as f64).log2() + 1e-9);
            let u = ProbVec::uniform(k).unwrap();
            prop_assert!((entropy(&u) - (k as f64).log2()).abs() < 1e-9);
        }
    }
}
