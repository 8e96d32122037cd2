//! Prediction-log records, log validation and grouping into evaluation units.
//!
//! A record's `confidence` is the probability the detector assigned to its
//! *predicted* label; `1 - confidence` is the probability of the other class.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary email label. `Phishing` is the positive class for every
/// classification metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Phishing,
    Safe,
}

impl Label {
    pub fn flipped(self) -> Self {
        match self {
            Label::Phishing => Label::Safe,
            Label::Safe => Label::Phishing,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Phishing
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Phishing => "phishing",
            Label::Safe => "safe",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One detector decision as it appears in a prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub dataset: String,
    pub model: String,
    pub run: u32,
    pub split: Split,
    pub true_label: Label,
    pub pred_label: Label,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.pred_label
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbed_of.is_some()
    }

    /// Field-level range checks. The `perturbed_of`/`similarity` pairing is a
    /// log-level finding (see [`validate_log`]) and is not checked here.
    pub fn check(&self) -> Result<()> {
        if self.run == 0 {
            return Err(Error::param("run", "run indices start at 1"));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::param(
                "confidence",
                alloc::format!("{} is outside (0, 1]", self.confidence),
            ));
        }
        if let Some(s) = self.similarity {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::param(
                    "similarity",
                    alloc::format!("{s} is outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

/// Identity of an original record: `(sample_id, dataset, model, run)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecordKey {
    pub sample_id: String,
    pub dataset: String,
    pub model: String,
    pub run: u32,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(sample_id={}, dataset={}, model={}, run={})",
            self.sample_id, self.dataset, self.model, self.run
        )
    }
}

/// A log-level problem. `index` is the zero-based position of the record in
/// the validated slice (one record per log line).
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    DuplicateKey {
        index: usize,
        first_index: usize,
        key: RecordKey,
    },
    OrphanPerturbation {
        index: usize,
        perturbed_of: String,
    },
    SimilarityLinkMismatch {
        index: usize,
    },
    NonContiguousRuns {
        model: String,
        dataset: String,
        runs: Vec<u32>,
    },
}

impl Finding {
    pub fn index(&self) -> Option<usize> {
        match self {
            Finding::DuplicateKey { index, .. }
            | Finding::OrphanPerturbation { index, .. }
            | Finding::SimilarityLinkMismatch { index } => Some(*index),
            Finding::NonContiguousRuns { .. } => None,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateKey {
                first_index, key, ..
            } => write!(
                f,
                "duplicate key {key}, first seen at record {}",
                first_index + 1
            ),
            Finding::OrphanPerturbation { perturbed_of, .. } => write!(
                f,
                "perturbed_of `{perturbed_of}` names no original in the same model, dataset and run"
            ),
            Finding::SimilarityLinkMismatch { .. } => {
                f.write_str("similarity and perturbed_of must be present together")
            }
            Finding::NonContiguousRuns {
                model,
                dataset,
                runs,
            } => write!(
                f,
                "{model}/{dataset}: run indices {runs:?} are not contiguous from 1"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Reports duplicate keys, orphan perturbation links, similarity/link
/// mismatches and run indices that are not `1..=K`. Never fails: findings are
/// data.
pub fn validate_log(records: &[PredictionRecord]) -> ValidationReport {
    let mut findings = Vec::new();
    let mut originals: BTreeMap<(&str, &str, &str, u32), usize> = BTreeMap::new();
    let mut perturbed: BTreeMap<(&str, &str, &str, u32, u64), usize> = BTreeMap::new();
    let mut runs: BTreeMap<(&str, &str), BTreeSet<u32>> = BTreeMap::new();

    for (index, r) in records.iter().enumerate() {
        if r.perturbed_of.is_some() != r.similarity.is_some() {
            findings.push(Finding::SimilarityLinkMismatch { index });
        }
        let first = if r.is_perturbed() {
            let level = r.similarity.unwrap_or(f64::NAN).to_bits();
            let key = (r.sample_id.as_str(), r.dataset.as_str(), r.model.as_str(), r.run, level);
            *perturbed.entry(key).or_insert(index)
        } else {
            runs.entry((r.model.as_str(), r.dataset.as_str()))
                .or_default()
                .insert(r.run);
            let key = (r.sample_id.as_str(), r.dataset.as_str(), r.model.as_str(), r.run);
            *originals.entry(key).or_insert(index)
        };
        if first != index {
            findings.push(Finding::DuplicateKey {
                index,
                first_index: first,
                key: RecordKey {
                    sample_id: r.sample_id.clone(),
                    dataset: r.dataset.clone(),
                    model: r.model.clone(),
                    run: r.run,
                },
            });
        }
    }

    for (index, r) in records.iter().enumerate() {
        if let Some(of) = &r.perturbed_of {
            let key = (of.as_str(), r.dataset.as_str(), r.model.as_str(), r.run);
            if !originals.contains_key(&key) {
                findings.push(Finding::OrphanPerturbation {
                    index,
                    perturbed_of: of.clone(),
                });
            }
        }
    }
    // Keep per-record findings in input order.
    findings.sort_by_key(|f| f.index().unwrap_or(usize::MAX));

    for ((model, dataset), set) in runs {
        let contiguous = set.iter().copied().eq(1..=set.len() as u32);
        if !contiguous {
            findings.push(Finding::NonContiguousRuns {
                model: model.into(),
                dataset: dataset.into(),
                runs: set.into_iter().collect(),
            });
        }
    }
    ValidationReport { findings }
}

/// Matched original and perturbed predictions for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationPair<'a> {
    pub original: &'a PredictionRecord,
    pub perturbed: &'a PredictionRecord,
    pub similarity: f64,
}

impl PerturbationPair<'_> {
    pub fn agrees(&self) -> bool {
        self.original.pred_label == self.perturbed.pred_label
    }
}

/// All metric-bearing records of one `(model, dataset)` combination.
#[derive(Debug, Clone)]
pub struct EvaluationGroup<'a> {
    pub model: &'a str,
    pub dataset: &'a str,
    /// Test-split originals keyed by run index (`1..=K`).
    pub runs: BTreeMap<u32, Vec<&'a PredictionRecord>>,
    /// Validation-split originals from every run, used for temperature fitting.
    pub validation: Vec<&'a PredictionRecord>,
    pub pairs: Vec<PerturbationPair<'a>>,
}

impl EvaluationGroup<'_> {
    /// Number of runs `K`.
    pub fn k(&self) -> usize {
        self.runs.len()
    }

    pub fn test_len(&self) -> usize {
        self.runs.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Grouping<'a> {
    pub groups: Vec<EvaluationGroup<'a>>,
    /// `(model, dataset)` combinations with records but no test-split originals.
    pub excluded: Vec<(String, String)>,
}

/// Partitions records into one group per `(model, dataset)`, sorted by model
/// then dataset. Train-split records are ignored; pairs are joined through
/// `perturbed_of` against test originals of the same model, dataset and run.
/// Links that do not resolve are dropped here; [`validate_log`] reports them.
pub fn group(records: &[PredictionRecord]) -> Grouping<'_> {
    struct Builder<'a> {
        runs: BTreeMap<u32, Vec<&'a PredictionRecord>>,
        validation: Vec<&'a PredictionRecord>,
        perturbed: Vec<&'a PredictionRecord>,
    }

    let mut builders: BTreeMap<(&str, &str), Builder<'_>> = BTreeMap::new();
    let mut test_originals: BTreeMap<(&str, &str, &str, u32), &PredictionRecord> = BTreeMap::new();

    for r in records {
        let b = builders
            .entry((r.model.as_str(), r.dataset.as_str()))
            .or_insert_with(|| Builder {
                runs: BTreeMap::new(),
                validation: Vec::new(),
                perturbed: Vec::new(),
            });
        if r.is_perturbed() {
            b.perturbed.push(r);
            continue;
        }
        match r.split {
            Split::Test => {
                b.runs.entry(r.run).or_default().push(r);
                test_originals
                    .entry((r.model.as_str(), r.dataset.as_str(), r.sample_id.as_str(), r.run))
                    .or_insert(r);
            }
            Split::Val => b.validation.push(r),
            Split::Train => {}
        }
    }

    let mut out = Grouping::default();
    for ((model, dataset), b) in builders {
        if b.runs.is_empty() {
            out.excluded.push((model.into(), dataset.into()));
            continue;
        }
        let pairs = b
            .perturbed
            .iter()
            .filter_map(|p| {
                let of = p.perturbed_of.as_deref()?;
                let similarity = p.similarity?;
                let original = test_originals.get(&(model, dataset, of, p.run))?;
                Some(PerturbationPair {
                    original,
                    perturbed: p,
                    similarity,
                })
            })
            .collect();
        out.groups.push(EvaluationGroup {
            model,
            dataset,
            runs: b.runs,
            validation: b.validation,
            pairs,
        });
    }
    out
}
