//! Acquisition scores and model uncertainty.

use ndarray::{s, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classifier::{Mlp, PassTensor};
use crate::error::{Error, Result};
use crate::prob::{argmax, entropy_bits};

/// Scores within this distance below zero are treated as rounding noise.
pub const SCORE_CLAMP: f64 = 1e-9;
pub const DEFAULT_BETA_CAP: f64 = 50.0;

/// Non-negative importance scores aligned with pool rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores(Vec<f64>);

impl ImportanceScores {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        for v in values.iter_mut() {
            if !v.is_finite() || *v < -SCORE_CLAMP {
                return Err(Error::domain(format!("invalid importance score {v}")));
            }
            *v = v.max(0.0);
        }
        Ok(ImportanceScores(values))
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

    pub fn get(&self, row: usize) -> Option<f64> {
        self.0.get(row).copied()
    }
}

/// BALD mutual information (bits): entropy of the mean prediction minus the
/// mean entropy of the individual passes, clamped at zero.
pub fn bald(passes: &PassTensor) -> f64 {
    let first = passes.row(0);
    if passes.rows().all(|r| r == first) {
        return 0.0;
    }
    let predictive = entropy_bits(&passes.mean());
    let expected: f64 = passes.rows().map(entropy_bits).sum::<f64>() / passes.passes() as f64;
    (predictive - expected).max(0.0)
}

/// Entropy (bits) of the mean prediction.
pub fn entropy_score(passes: &PassTensor) -> f64 {
    entropy_bits(&passes.mean())
}

/// `1 - (modal count) / T` over the per-pass argmax classes. Row argmax
/// ties go to the lowest class index.
pub fn variation_ratio(passes: &PassTensor) -> f64 {
    let mut counts = vec![0usize; passes.classes()];
    for row in passes.rows() {
        counts[argmax(row)] += 1;
    }
    let modal = counts.into_iter().max().unwrap_or(0);
    1.0 - modal as f64 / passes.passes() as f64
}

/// Per-sample scores over a pool, all from the same Monte-Carlo passes.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolScores {
    pub bald: Vec<f64>,
    pub entropy: Vec<f64>,
    pub variation_ratio: Vec<f64>,
}

/// Runs `passes` stochastic passes for each row of `x` (sample ids `ids`)
/// and scores them.
pub fn score_pool(
    model: &Mlp,
    x: ArrayView2<f64>,
    ids: &[usize],
    passes: usize,
    seed: u64,
) -> Result<PoolScores> {
    const CHUNK: usize = 512;
    if ids.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: ids.len(),
        });
    }
    let n = x.nrows();
    let mut out = PoolScores {
        bald: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        variation_ratio: Vec::with_capacity(n),
    };
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let tensors =
            model.stochastic_passes_batch(x.slice(s![start..end, ..]), &ids[start..end], passes, seed)?;
        for t in &tensors {
            out.bald.push(bald(t));
            out.entropy.push(entropy_score(t));
            out.variation_ratio.push(variation_ratio(t));
        }
        start = end;
    }
    Ok(out)
}

/// Model uncertainty `σ`: the mean per-sample variation ratio over a fixed
/// validation set.
pub fn model_uncertainty(
    model: &Mlp,
    validation: ArrayView2<f64>,
    ids: &[usize],
    passes: usize,
    seed: u64,
) -> Result<f64> {
    if validation.nrows() == 0 {
        return Err(Error::Empty("validation set"));
    }
    let scores = score_pool(model, validation, ids, passes, seed)?;
    let n = scores.variation_ratio.len() as f64;
    Ok(scores.variation_ratio.iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseKind {
    /// `l (e^{1/σ} - 1)`
    ExpInv,
    /// `-l log σ`
    NegLog,
}

impl std::str::FromStr for InverseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp_inv" => Ok(InverseKind::ExpInv),
            "neg_log" => Ok(InverseKind::NegLog),
            other => Err(Error::config(
                "f_kind",
                format!("unknown function `{other}` (expected exp_inv or neg_log)"),
            )),
        }
    }
}

impl std::fmt::Display for InverseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InverseKind::ExpInv => "exp_inv",
            InverseKind::NegLog => "neg_log",
        })
    }
}

/// The map from model uncertainty `σ` to inverse temperature `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub kind: InverseKind,
    pub scale: f64,
    pub cap: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            kind: InverseKind::ExpInv,
            scale: 0.25,
            cap: DEFAULT_BETA_CAP,
        }
    }
}

/// Current uncertainty and the inverse temperature derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyState {
    pub sigma: f64,
    pub beta: f64,
}

impl BetaSchedule {
    pub fn state(&self, sigma: f64) -> Result<UncertaintyState> {
        Ok(UncertaintyState {
            sigma,
            beta: inverse_uncertainty(sigma, self)?,
        })
    }
}

/// `β = f(σ)`, capped at `schedule.cap`; `σ = 0` maps to the cap.
pub fn inverse_uncertainty(sigma: f64, schedule: &BetaSchedule) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::domain(format!("uncertainty {sigma} outside [0, 1]")));
    }
    if sigma == 0.0 {
        return Ok(schedule.cap);
    }
    let raw = match schedule.kind {
        InverseKind::ExpInv => schedule.scale * ((1.0 / sigma).exp() - 1.0),
        InverseKind::NegLog => -schedule.scale * sigma.ln(),
    };
    Ok(raw.clamp(0.0, schedule.cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tensor(rows: &[&[f64]]) -> PassTensor {
        PassTensor::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn bald_examples() {
        assert_eq!(bald(&tensor(&[&[0.3, 0.7], &[0.3, 0.7], &[0.3, 0.7]])), 0.0);
        assert_abs_diff_eq!(bald(&tensor(&[&[1.0, 0.0], &[0.0, 1.0]])), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            bald(&tensor(&[&[0.8, 0.2], &[0.6, 0.4]])),
            0.034_851_554_559_677_12,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_score_examples() {
        assert_eq!(entropy_score(&tensor(&[&[1.0, 0.0]])), 0.0);
        assert_abs_diff_eq!(entropy_score(&tensor(&[&[1.0, 0.0], &[0.0, 1.0]])), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            entropy_score(&tensor(&[&[0.7, 0.3]])),
            0.881_290_899_230_692_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn variation_ratio_examples() {
        let agree = tensor(&[&[0.1, 0.1, 0.8], &[0.0, 0.2, 0.8]]);
        assert_eq!(variation_ratio(&agree), 0.0);

        let mut rows = vec![vec![0.9, 0.1]; 80];
        rows.extend(vec![vec![0.1, 0.9]; 20]);
        assert!((variation_ratio(&PassTensor::new(rows).unwrap()) - 0.2).abs() < 1e-15);

        let t = tensor(&[
            &[0.1, 0.8, 0.05, 0.05],
            &[0.1, 0.8, 0.05, 0.05],
            &[0.1, 0.1, 0.7, 0.1],
            &[0.1, 0.1, 0.1, 0.7],
        ]);
        assert_eq!(variation_ratio(&t), 0.5);

        // Tie within a row goes to the lower class.
        let tie = tensor(&[&[0.5, 0.5], &[0.6, 0.4]]);
        assert_eq!(variation_ratio(&tie), 0.0);
    }

    #[test]
    fn inverse_uncertainty_examples() {
        let neg_log = BetaSchedule {
            kind: InverseKind::NegLog,
            scale: 1.0,
            cap: DEFAULT_BETA_CAP,
        };
        assert_eq!(inverse_uncertainty(1.0, &neg_log).unwrap(), 0.0);
        let exp_inv = BetaSchedule::default();
        assert_abs_diff_eq!(
            inverse_uncertainty(0.5, &exp_inv).unwrap(),
            1.597_264_024_732_662_6,
            epsilon = 1e-12
        );
        assert_eq!(inverse_uncertainty(0.0, &exp_inv).unwrap(), 50.0);
        assert_eq!(inverse_uncertainty(0.0, &neg_log).unwrap(), 50.0);
        assert_eq!(inverse_uncertainty(0.001, &exp_inv).unwrap(), 50.0);
        assert!(inverse_uncertainty(1.5, &exp_inv).is_err());
        assert!(inverse_uncertainty(-0.1, &exp_inv).is_err());
        // exp_inv does not vanish at σ = 1.
        assert_abs_diff_eq!(
            inverse_uncertainty(1.0, &exp_inv).unwrap(),
            0.25 * (std::f64::consts::E - 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn inverse_uncertainty_is_monotone() {
        for kind in [InverseKind::ExpInv, InverseKind::NegLog] {
            let schedule = BetaSchedule {
                kind,
                ..BetaSchedule::default()
            };
            let mut prev = f64::INFINITY;
            for i in 0..=1000 {
                let beta = inverse_uncertainty(i as f64 / 1000.0, &schedule).unwrap();
                assert!(beta <= prev, "{kind} not monotone at {i}");
                assert!((0.0..=schedule.cap).contains(&beta));
                prev = beta;
            }
        }
    }

    #[test]
    fn importance_scores_clamp_noise() {
        let s = ImportanceScores::new(vec![0.5, -1e-10]).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.0]);
        assert!(ImportanceScores::new(vec![-0.1]).is_err());
    }

    fn pass_tensor() -> impl Strategy<Value = PassTensor> {
        (2usize..6, 1usize..12).prop_flat_map(|(k, t)| {
            prop::collection::vec(prop::collection::vec(0.001f64..1.0, k), t).prop_map(|rows| {
                let rows = rows
                    .into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|v| v / s).collect()
                    })
                    .collect();
                PassTensor::new(rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn bald_is_bounded_by_predictive_entropy(t in pass_tensor()) {
            let b = bald(&t);
            prop_assert!(b >= 0.0);
            prop_assert!(b <= entropy_score(&t) + 1e-9);
            let v = variation_ratio(&t);
            prop_assert!(v >= 0.0 && v <= 1.0 - 1.0 / t.passes() as f64 + 1e-12);
        }

        #[test]
        fn identical_rows_have_zero_bald(t in pass_tensor()) {
            let rows = vec![t.row(0).to_vec(); t.passes()];
            prop_assert_eq!(bald(&PassTensor::new(rows).unwrap()), 0.0);
        }
    }
}
