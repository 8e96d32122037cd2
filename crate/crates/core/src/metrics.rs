//! Classification metrics and the trust quantities built on top of them.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{Label, PerturbationPair, PredictionRecord};

/// Guard added to the mean F1 in the normalized variance denominator.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Binary confusion counts with `Phishing` as the positive class. Counts are
/// integer multiplicities so bootstrap resamples can reuse the same path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, truth: Label, pred: Label, weight: u64) {
        match (truth.is_positive(), pred.is_positive()) {
            (true, true) => self.tp += weight,
            (false, true) => self.fp += weight,
            (true, false) => self.fn_ += weight,
            (false, false) => self.tn += weight,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Metrics from the counts. With an empty denominator, precision and
    /// recall are 1 when the positive class is absent from both truth and
    /// predictions and 0 otherwise; F1 of `(0, 0)` is 0. `None` for no counts.
    pub fn metrics(&self) -> Option<ClassificationMetrics> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        let positive_absent = self.tp + self.fp + self.fn_ == 0;
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                if positive_absent {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Some(ClassificationMetrics {
            accuracy: (self.tp + self.tn) as f64 / n as f64,
            precision,
            recall,
            f1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn classification_metrics<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
) -> Result<ClassificationMetrics> {
    let mut counts = ConfusionCounts::default();
    for r in records {
        counts.add(r.true_label, r.pred_label, 1);
    }
    counts
        .metrics()
        .ok_or(Error::EmptyInput("classification records"))
}

/// Mean-normalized sample variance of per-run F1:
/// `(1 / (K - 1)) * sum_k (F1_k - mean)^2 / (mean + epsilon)`.
pub fn f1_variance(f1_by_run: &[f64], epsilon: f64) -> Result<f64> {
    if f1_by_run.len() < 2 {
        return Err(Error::param(
            "f1_by_run",
            format!("need at least 2 runs, got {}", f1_by_run.len()),
        ));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let k = f1_by_run.len() as f64;
    let mean = f1_by_run.iter().sum::<f64>() / k;
    let denom = mean + epsilon;
    let total: f64 = f1_by_run
        .iter()
        .map(|&f| (f - mean) * (f - mean) / denom)
        .sum();
    Ok(total / (k - 1.0))
}

/// Fraction of `(agrees, weight)` observations that agree; `None` when the
/// total weight is zero.
pub fn agreement_rate(observations: impl IntoIterator<Item = (bool, u64)>) -> Option<f64> {
    let (mut agree, mut total) = (0u64, 0u64);
    for (a, w) in observations {
        total += w;
        if a {
            agree += w;
        }
    }
    (total > 0).then(|| agree as f64 / total as f64)
}

/// Prediction agreement between originals and perturbations over pairs with
/// similarity at least `min_similarity`. Correctness plays no role.
pub fn robustness(pairs: &[PerturbationPair<'_>], min_similarity: f64) -> Result<f64> {
    agreement_rate(
        pairs
            .iter()
            .filter(|p| p.similarity >= min_similarity)
            .map(|p| (p.agrees(), 1)),
    )
    .ok_or(Error::NoPairs { min_similarity })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRobustness {
    pub similarity: f64,
    pub pairs: u64,
    pub robustness: f64,
}

/// Index of the configured level closest to `similarity` (first wins ties).
pub fn nearest_level(similarity: f64, levels: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in levels.iter().enumerate().skip(1) {
        if libm::fabs(similarity - l) < libm::fabs(similarity - levels[best]) {
            best = i;
        }
    }
    best
}

/// Robustness per similarity level, highest level first. Each pair counts
/// toward its nearest configured level; levels without pairs are omitted.
pub fn robustness_curve(
    pairs: &[PerturbationPair<'_>],
    levels: &[f64],
) -> Result<Vec<LevelRobustness>> {
    if levels.is_empty() {
        return Err(Error::param("similarity_levels", "no levels configured"));
    }
    let mut agree = alloc::vec![0u64; levels.len()];
    let mut total = alloc::vec![0u64; levels.len()];
    for p in pairs {
        let i = nearest_level(p.similarity, levels);
        total[i] += 1;
        if p.agrees() {
            agree[i] += 1;
        }
    }
    let mut curve: Vec<LevelRobustness> = (0..levels.len())
        .filter(|&i| total[i] > 0)
        .map(|i| LevelRobustness {
            similarity: levels[i],
            pairs: total[i],
            robustness: agree[i] as f64 / total[i] as f64,
        })
        .collect();
    curve.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    Ok(curve)
}

/// Aggregation weights for calibration, consistency and robustness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.2,
            delta: 0.3,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.delta];
        if all.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::param("weights", format!("negative weight in {self:?}")));
        }
        let sum: f64 = all.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(Error::param("weights", format!("sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tci {
    /// Clamped to `[0, 1]`.
    pub value: f64,
    /// `1 - [alpha * ece + beta * var_norm + delta * (1 - r)]` before clamping.
    pub raw: f64,
}

/// Trust calibration index. `var_norm` is unbounded above, so the raw value
/// can go negative; the reported value is clamped to `[0, 1]`.
pub fn tci(ece: f64, var_norm: f64, r: f64, w: &Weights) -> Result<Tci> {
    w.validate()?;
    if !(0.0..=1.0).contains(&ece) {
        return Err(Error::param("ece", format!("{ece} is outside [0, 1]")));
    }
    if var_norm.is_nan() || var_norm < 0.0 {
        return Err(Error::param("var_norm", format!("{var_norm} is negative")));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::param("r", format!("{r} is outside [0, 1]")));
    }
    let raw = 1.0 - (w.alpha * ece + w.beta * var_norm + w.delta * (1.0 - r));
    Ok(Tci {
        value: raw.clamp(0.0, 1.0),
        raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cds {
    pub cds: f64,
    pub mean_tci: f64,
    pub mean_abs_deviation: f64,
}

/// Cross-dataset stability: one minus the mean absolute deviation of the
/// per-dataset TCI values from their mean.
pub fn cds(tci_by_dataset: &[f64]) -> Result<Cds> {
    if tci_by_dataset.is_empty() {
        return Err(Error::EmptyInput("per-dataset TCI values"));
    }
    let m = tci_by_dataset.len() as f64;
    let mean = tci_by_dataset.iter().sum::<f64>() / m;
    let mad = tci_by_dataset
        .iter()
        .map(|&t| libm::fabs(t - mean))
        .sum::<f64>()
        / m;
    Ok(Cds {
        cds: 1.0 - mad,
        mean_tci: mean,
        mean_abs_deviation: mad,
    })
}
