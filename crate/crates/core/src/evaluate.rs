//! End-to-end evaluation of a prediction log.
//!
//! Per `(model, dataset)` group: fit a temperature on the validation split,
//! compute scaled ECE on the pooled test runs, per-run classification metrics
//! and the normalized F1 variance, perturbation robustness and its curve over
//! similarity levels, then the TCI. Per model: mean TCI and CDS across
//! datasets.
//!
//! Confidence intervals come from a hierarchical bootstrap. The resampling
//! unit is the test sample id; one draw of sample ids is applied to every run
//! and to the perturbation pairs of those samples, and the full metric chain
//! is recomputed. The fitted temperature is held fixed. Model-level intervals
//! combine replicate `b` of each dataset, whose draws are independent.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_temperature, bin_index, fit_temperature, ReliabilityAccumulator, ReliabilityTable};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::{cds, f1_variance, robustness_curve, tci, ConfusionCounts, LevelRobustness};
use crate::records::{group, validate_log, EvaluationGroup, PredictionRecord};
use crate::stats::{derive_stream, percentile_interval, resample_indices, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// `None` when bootstrapping is disabled or no replicate was defined.
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub model: String,
    pub dataset: String,
    pub runs: usize,
    pub test_records: usize,
    pub validation_records: usize,
    /// Pairs at or above the robustness threshold.
    pub robustness_pairs: usize,
    pub temperature: f64,
    /// False when the group had no validation split and `T = 1` was used.
    pub temperature_fitted: bool,
    pub accuracy: Estimate,
    pub precision: Estimate,
    pub recall: Estimate,
    pub f1: Estimate,
    pub f1_by_run: Vec<f64>,
    /// Expected calibration error after temperature scaling.
    pub ece: Estimate,
    /// Expected calibration error of the reported confidences.
    pub ece_raw: f64,
    pub var_norm: Estimate,
    /// `None` when the group has no pairs and that was allowed.
    pub robustness: Option<Estimate>,
    pub robustness_curve: Vec<LevelRobustness>,
    pub tci: Estimate,
    pub tci_raw: f64,
    pub reliability: ReliabilityTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub datasets: Vec<String>,
    /// Means over datasets of the per-group values.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ece: f64,
    pub var_norm: f64,
    /// Mean over the datasets that have a robustness value.
    pub robustness: Option<f64>,
    pub mean_tci: Estimate,
    pub cds: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub groups: Vec<GroupReport>,
    pub models: Vec<ModelSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Report groups without perturbation pairs, leaving out the robustness
    /// term of the TCI, instead of failing.
    pub allow_missing_robustness: bool,
    /// Accept single-run groups, with zero F1 variance, instead of failing.
    pub allow_single_run: bool,
    pub confidence_intervals: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            allow_missing_robustness: false,
            allow_single_run: false,
            confidence_intervals: true,
        }
    }
}

// Replicate statistic layout.
const ACC: usize = 0;
const PREC: usize = 1;
const REC: usize = 2;
const F1: usize = 3;
const ECE: usize = 4;
const VAR: usize = 5;
const R: usize = 6;
const TCI: usize = 7;
const TCI_RAW: usize = 8;
const N_STATS: usize = 9;

struct TestObs {
    unit: usize,
    truth: crate::Label,
    pred: crate::Label,
    bin: usize,
    confidence: f64,
}

/// A group reduced to what the metric chain needs, indexed by sample unit.
struct Prepared {
    units: usize,
    runs: Vec<Vec<TestObs>>,
    pairs: Vec<(usize, bool)>,
    has_pairs: bool,
}

fn prepare(g: &EvaluationGroup<'_>, t: f64, cfg: &RunConfig) -> Result<Prepared> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for r in g.runs.values().flatten() {
        ids.entry(r.sample_id.as_str()).or_insert(0);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let mut runs = Vec::with_capacity(g.runs.len());
    for records in g.runs.values() {
        let mut obs = Vec::with_capacity(records.len());
        for r in records {
            let c = apply_temperature(r.confidence, t)?;
            obs.push(TestObs {
                unit: ids[r.sample_id.as_str()],
                truth: r.true_label,
                pred: r.pred_label,
                bin: bin_index(c, cfg.bins),
                confidence: c,
            });
        }
        runs.push(obs);
    }
    let pairs: Vec<(usize, bool)> = g
        .pairs
        .iter()
        .filter(|p| p.similarity >= cfg.robustness_min_similarity)
        .map(|p| (ids[p.original.sample_id.as_str()], p.agrees()))
        .collect();
    Ok(Prepared {
        units: ids.len(),
        has_pairs: !pairs.is_empty(),
        runs,
        pairs,
    })
}

/// Runs the metric chain with per-unit multiplicities. Undefined quantities
/// come out as NaN.
fn chain(p: &Prepared, weights: &[u64], cfg: &RunConfig) -> ([f64; N_STATS], Vec<f64>, ReliabilityTable) {
    let mut out = [f64::NAN; N_STATS];
    let mut rel = ReliabilityAccumulator::new(cfg.bins).expect("bins validated");
    let mut per_run = Vec::with_capacity(p.runs.len());
    for run in &p.runs {
        let mut cm = ConfusionCounts::default();
        for o in run {
            let w = weights[o.unit];
            if w == 0 {
                continue;
            }
            cm.add(o.truth, o.pred, w);
            rel.add_to_bin(o.bin, o.confidence, o.truth == o.pred, w);
        }
        per_run.push(cm.metrics());
    }
    let table = rel.finish();
    let f1_by_run: Vec<f64> = per_run.iter().map(|m| m.map_or(f64::NAN, |m| m.f1)).collect();
    if per_run.iter().all(Option::is_some) {
        let k = per_run.len() as f64;
        let mean = |f: fn(&crate::metrics::ClassificationMetrics) -> f64| {
            per_run.iter().flatten().map(f).sum::<f64>() / k
        };
        out[ACC] = mean(|m| m.accuracy);
        out[PREC] = mean(|m| m.precision);
        out[REC] = mean(|m| m.recall);
        out[F1] = mean(|m| m.f1);
        out[VAR] = if per_run.len() < 2 {
            0.0
        } else {
            f1_variance(&f1_by_run, cfg.epsilon).unwrap_or(f64::NAN)
        };
    }
    if table.n_total > 0 {
        out[ECE] = table.ece();
    }
    let (mut agree, mut total) = (0u64, 0u64);
    for &(unit, a) in &p.pairs {
        let w = weights[unit];
        total += w;
        if a {
            agree += w;
        }
    }
    if total > 0 {
        out[R] = agree as f64 / total as f64;
    }
    // Without pairs the robustness term is left out.
    let r = if p.has_pairs { out[R] } else { 1.0 };
    if out[ECE].is_finite() && out[VAR].is_finite() && r.is_finite() {
        if let Ok(t) = tci(out[ECE], out[VAR], r, &cfg.weights) {
            out[TCI] = t.value;
            out[TCI_RAW] = t.raw;
        }
    }
    (out, f1_by_run, table)
}

fn interval(values: impl Iterator<Item = f64>, level: f64) -> Option<Interval> {
    let finite: Vec<f64> = values.filter(|v| v.is_finite()).collect();
    (!finite.is_empty()).then(|| percentile_interval(&finite, level))
}

struct GroupOutcome {
    report: GroupReport,
    /// Replicate TCI values, for model-level intervals.
    tci_replicates: Vec<f64>,
}

fn evaluate_group<E: Executor>(
    g: &EvaluationGroup<'_>,
    cfg: &RunConfig,
    opts: &EvalOptions,
    exec: &E,
) -> Result<(GroupOutcome, Vec<String>)> {
    let err = |reason: String| Error::Group {
        model: g.model.to_string(),
        dataset: g.dataset.to_string(),
        reason,
    };
    let mut warnings = Vec::new();
    if g.k() < 2 && !opts.allow_single_run {
        return Err(err(format!(
            "{} run(s); F1 variance needs at least 2 (allow single runs to report zero variance)",
            g.k()
        )));
    }
    let (temperature, fitted) = if g.validation.is_empty() {
        warnings.push(format!(
            "{}/{}: no validation records, temperature fixed at 1",
            g.model, g.dataset
        ));
        (1.0, false)
    } else {
        let m = fit_temperature(g.validation.iter().copied(), &cfg.temperature_grid)?;
        (m.temperature, true)
    };
    let p = prepare(g, temperature, cfg)?;
    if !p.has_pairs {
        if !opts.allow_missing_robustness {
            return Err(err(format!(
                "no perturbation pairs with similarity >= {}; robustness is undefined",
                cfg.robustness_min_similarity
            )));
        }
        warnings.push(format!(
            "{}/{}: no perturbation pairs, TCI computed without the robustness term",
            g.model, g.dataset
        ));
    }

    let ones = alloc::vec![1u64; p.units];
    let (point, f1_by_run, reliability) = chain(&p, &ones, cfg);
    let ece_raw = crate::calibration::ece(g.runs.values().flatten().copied(), cfg.bins)?.0;
    let curve = robustness_curve(&g.pairs, &cfg.similarity_levels)?;

    let spec = cfg.bootstrap_spec();
    let seed = derive_stream(cfg.seed, &format!("bootstrap/{}/{}", g.model, g.dataset)).next_u64();
    let replicates: Vec<[f64; N_STATS]> = if opts.confidence_intervals {
        exec.map(spec.resamples, |b| {
            let mut w = alloc::vec![0u64; p.units];
            for i in resample_indices(p.units, seed, b) {
                w[i] += 1;
            }
            chain(&p, &w, cfg).0
        })
    } else {
        Vec::new()
    };
    let est = |s: usize| Estimate {
        value: point[s],
        ci: interval(replicates.iter().map(|r| r[s]), spec.level),
    };

    let report = GroupReport {
        model: g.model.to_string(),
        dataset: g.dataset.to_string(),
        runs: g.k(),
        test_records: g.test_len(),
        validation_records: g.validation.len(),
        robustness_pairs: p.pairs.len(),
        temperature,
        temperature_fitted: fitted,
        accuracy: est(ACC),
        precision: est(PREC),
        recall: est(REC),
        f1: est(F1),
        f1_by_run,
        ece: est(ECE),
        ece_raw,
        var_norm: est(VAR),
        robustness: p.has_pairs.then(|| est(R)),
        robustness_curve: curve,
        tci: est(TCI),
        tci_raw: point[TCI_RAW],
        reliability,
    };
    if !report.tci.value.is_finite() {
        return Err(err("metric chain undefined on the full sample".to_string()));
    }
    Ok((
        GroupOutcome {
            report,
            tci_replicates: replicates.iter().map(|r| r[TCI]).collect(),
        },
        warnings,
    ))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    s / n as f64
}

fn summarize(model: &str, groups: &[&GroupOutcome], level: f64) -> Result<ModelSummary> {
    let reports: Vec<&GroupReport> = groups.iter().map(|g| &g.report).collect();
    let tcis: Vec<f64> = reports.iter().map(|r| r.tci.value).collect();
    let c = cds(&tcis)?;
    let b = groups.iter().map(|g| g.tci_replicates.len()).min().unwrap_or(0);
    let mut mean_reps = Vec::with_capacity(b);
    let mut cds_reps = Vec::with_capacity(b);
    for i in 0..b {
        let row: Vec<f64> = groups.iter().map(|g| g.tci_replicates[i]).collect();
        if row.iter().all(|v| v.is_finite()) {
            let rc = cds(&row)?;
            mean_reps.push(rc.mean_tci);
            cds_reps.push(rc.cds);
        }
    }
    let with_r: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.robustness.map(|e| e.value))
        .collect();
    Ok(ModelSummary {
        model: model.to_string(),
        datasets: reports.iter().map(|r| r.dataset.clone()).collect(),
        accuracy: mean(reports.iter().map(|r| r.accuracy.value)),
        precision: mean(reports.iter().map(|r| r.precision.value)),
        recall: mean(reports.iter().map(|r| r.recall.value)),
        f1: mean(reports.iter().map(|r| r.f1.value)),
        ece: mean(reports.iter().map(|r| r.ece.value)),
        var_norm: mean(reports.iter().map(|r| r.var_norm.value)),
        robustness: (!with_r.is_empty()).then(|| mean(with_r.iter().copied())),
        mean_tci: Estimate {
            value: c.mean_tci,
            ci: interval(mean_reps.into_iter(), level),
        },
        cds: Estimate {
            value: c.cds,
            ci: interval(cds_reps.into_iter(), level),
        },
    })
}

/// `(model, dataset)` combinations touched by a validation finding.
fn flagged_groups(records: &[PredictionRecord]) -> BTreeMap<(String, String), Vec<String>> {
    let mut out: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for f in validate_log(records).findings {
        let key = match (&f, f.index()) {
            (_, Some(i)) => (records[i].model.clone(), records[i].dataset.clone()),
            (crate::records::Finding::NonContiguousRuns { model, dataset, .. }, None) => {
                (model.clone(), dataset.clone())
            }
            _ => continue,
        };
        let line = match f.index() {
            Some(i) => format!("record {}: {f}", i + 1),
            None => format!("{f}"),
        };
        out.entry(key).or_default().push(line);
    }
    out
}

/// Evaluates every `(model, dataset)` group of a log. Groups with validation
/// findings are left out with a warning.
pub fn evaluate<E: Executor>(
    records: &[PredictionRecord],
    cfg: &RunConfig,
    opts: &EvalOptions,
    exec: &E,
) -> Result<TrustReport> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let flagged = flagged_groups(records);
    for ((m, d), lines) in &flagged {
        warnings.push(format!(
            "{m}/{d}: skipped, {} validation finding(s); first: {}",
            lines.len(),
            lines[0]
        ));
    }
    let grouping = group(records);
    for (m, d) in &grouping.excluded {
        if !flagged.contains_key(&(m.clone(), d.clone())) {
            warnings.push(format!("{m}/{d}: skipped, no test records"));
        }
    }
    let groups: Vec<&EvaluationGroup<'_>> = grouping
        .groups
        .iter()
        .filter(|g| !flagged.contains_key(&(g.model.to_string(), g.dataset.to_string())))
        .collect();
    if groups.is_empty() {
        return Err(Error::EmptyInput("evaluable (model, dataset) groups"));
    }

    // Groups run one after another; each parallelizes its bootstrap.
    let mut outcomes = Vec::with_capacity(groups.len());
    for g in &groups {
        let (o, w) = evaluate_group(g, cfg, opts, exec)?;
        warnings.extend(w);
        outcomes.push(o);
    }

    let models: BTreeSet<&str> = outcomes.iter().map(|o| o.report.model.as_str()).collect();
    let mut summaries = Vec::with_capacity(models.len());
    for m in models {
        let gs: Vec<&GroupOutcome> = outcomes.iter().filter(|o| o.report.model == m).collect();
        summaries.push(summarize(m, &gs, cfg.bootstrap.level)?);
    }
    Ok(TrustReport {
        groups: outcomes.into_iter().map(|o| o.report).collect(),
        models: summaries,
        warnings,
    })
}
