//! Paired bootstrap comparison of two models, one row per dataset.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_temperature, fit_temperature, ReliabilityAccumulator};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::ConfusionCounts;
use crate::records::{PredictionRecord, Split};
use crate::stats::{derive_stream, paired_bootstrap_test, BootstrapSpec};

/// Quantity compared between two models. Classification metrics are means
/// over runs; ECE is computed on pooled runs after temperature scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Accuracy,
    Precision,
    Recall,
    #[default]
    F1,
    Ece,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Accuracy,
        Statistic::Precision,
        Statistic::Recall,
        Statistic::F1,
        Statistic::Ece,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Accuracy => "accuracy",
            Statistic::Precision => "precision",
            Statistic::Recall => "recall",
            Statistic::F1 => "f1",
            Statistic::Ece => "ece",
        }
    }

    /// NaN when undefined (no records).
    pub fn evaluate(self, records: &[&PredictionRecord], bins: usize) -> f64 {
        if records.is_empty() {
            return f64::NAN;
        }
        if self == Statistic::Ece {
            let Ok(mut acc) = ReliabilityAccumulator::new(bins) else {
                return f64::NAN;
            };
            for r in records {
                acc.add(r.confidence, r.is_correct(), 1);
            }
            return acc.finish().ece();
        }
        let mut by_run: BTreeMap<u32, ConfusionCounts> = BTreeMap::new();
        for r in records {
            by_run.entry(r.run).or_default().add(r.true_label, r.pred_label, 1);
        }
        let values: Vec<f64> = by_run
            .values()
            .filter_map(ConfusionCounts::metrics)
            .map(|m| match self {
                Statistic::Accuracy => m.accuracy,
                Statistic::Precision => m.precision,
                Statistic::Recall => m.recall,
                _ => m.f1,
            })
            .collect();
        values.iter().sum::<f64>() / values.len() as f64
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::param(
                    "statistic",
                    format!("unknown statistic `{s}`, expected accuracy, precision, recall, f1 or ece"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_a: String,
    pub model_b: String,
    pub dataset: String,
    pub statistic: Statistic,
    pub diff: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
}

/// Test-split originals of `model`, per dataset, with ECE confidences
/// rescaled by the temperature fitted on that dataset's validation split.
fn test_records(
    records: &[PredictionRecord],
    model: &str,
    statistic: Statistic,
    cfg: &RunConfig,
) -> Result<BTreeMap<String, Vec<PredictionRecord>>> {
    let mut test: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    let mut val: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model == model && !r.is_perturbed()) {
        match r.split {
            Split::Test => test.entry(r.dataset.clone()).or_default().push(r.clone()),
            Split::Val => val.entry(r.dataset.as_str()).or_default().push(r),
            Split::Train => {}
        }
    }
    if statistic == Statistic::Ece {
        for (dataset, recs) in test.iter_mut() {
            let t = match val.get(dataset.as_str()) {
                Some(v) => fit_temperature(v.iter().copied(), &cfg.temperature_grid)?.temperature,
                None => 1.0,
            };
            for r in recs.iter_mut() {
                r.confidence = apply_temperature(r.confidence, t)?;
            }
        }
    }
    Ok(test)
}

/// Compares `model_a` against `model_b` on every dataset either appears in.
/// Both models must cover the same `(dataset, run, sample_id)` test keys.
pub fn compare<E: Executor>(
    records: &[PredictionRecord],
    model_a: &str,
    model_b: &str,
    statistic: Statistic,
    cfg: &RunConfig,
    exec: &E,
) -> Result<Vec<ComparisonRow>> {
    cfg.validate()?;
    let models: BTreeSet<&str> = records.iter().map(|r| r.model.as_str()).collect();
    for (name, m) in [("model_a", model_a), ("model_b", model_b)] {
        if !models.contains(m) {
            return Err(Error::param(name, format!("unknown model `{m}`")));
        }
    }
    let a = test_records(records, model_a, statistic, cfg)?;
    let b = test_records(records, model_b, statistic, cfg)?;
    let datasets: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut rows = Vec::with_capacity(datasets.len());
    for dataset in datasets {
        let (Some(ra), Some(rb)) = (a.get(dataset), b.get(dataset)) else {
            let missing = if a.contains_key(dataset) { model_b } else { model_a };
            return Err(Error::Group {
                model: missing.to_string(),
                dataset: dataset.clone(),
                reason: "no test records to compare".to_string(),
            });
        };
        let spec = BootstrapSpec {
            resamples: cfg.bootstrap.resamples,
            level: cfg.bootstrap.level,
            seed: derive_stream(cfg.seed, &format!("compare/{dataset}")).next_u64(),
        };
        let test = paired_bootstrap_test(ra, rb, |s| statistic.evaluate(s, cfg.bins), &spec, exec)?;
        rows.push(ComparisonRow {
            model_a: model_a.to_string(),
            model_b: model_b.to_string(),
            dataset: dataset.clone(),
            statistic,
            diff: test.diff,
            ci_lo: test.ci.lo,
            ci_hi: test.ci.hi,
            p_value: test.p_value,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::records::tests::rec;
    use crate::Label;

    fn log() -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        for model in ["good", "bad"] {
            for i in 0..40 {
                for run in [1, 2] {
                    let mut r = rec(&format!("s{i}"), model, "d", run);
                    if model == "bad" && i % 4 == 0 {
                        r.pred_label = Label::Safe;
                    }
                    out.push(r);
                }
            }
        }
        out
    }

    fn cfg() -> RunConfig {
        let mut c = RunConfig::default();
        c.bootstrap.resamples = 200;
        c
    }

    #[test]
    fn self_comparison_has_unit_p() {
        let rows = compare(&log(), "good", "good", Statistic::F1, &cfg(), &Sequential).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].diff, 0.0);
        assert_eq!(rows[0].p_value, 1.0);
    }

    #[test]
    fn accuracy_difference() {
        let rows = compare(&log(), "good", "bad", Statistic::Accuracy, &cfg(), &Sequential).unwrap();
        assert!((rows[0].diff - 0.25).abs() < 1e-12);
        assert!(rows[0].p_value < 0.05);
        let back = compare(&log(), "bad", "good", Statistic::Accuracy, &cfg(), &Sequential).unwrap();
        assert_eq!(back[0].diff, -rows[0].diff);
        assert_eq!(back[0].p_value, rows[0].p_value);
    }

    #[test]
    fn unknown_model_rejected() {
        let e = compare(&log(), "good", "nope", Statistic::F1, &cfg(), &Sequential);
        assert!(matches!(e, Err(Error::InvalidParameter { name: "model_b", .. })));
    }

    #[test]
    fn parse_statistic() {
        assert_eq!("ECE".parse::<Statistic>().unwrap(), Statistic::Ece);
        assert!("auc".parse::<Statistic>().is_err());
        assert_eq!(Statistic::default(), Statistic::F1);
    }
}
