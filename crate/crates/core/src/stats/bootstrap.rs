//! Percentile bootstrap intervals and paired two-sided bootstrap tests.
//!
//! Replicate `b` draws its resample from `derive_stream(seed, "boot/{b}")`,
//! so results do not depend on how replicates are scheduled.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::rng::derive_stream;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::records::PredictionRecord;

/// Slack used when turning a percentile into a 1-based rank, so that
/// `0.025 * 1000` ranks as 25 despite binary rounding.
const RANK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            resamples: 1000,
            level: 0.95,
            seed: 42,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resamples < 1 {
            return Err(Error::param("resamples", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param("level", format!("{} is outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    /// `statistic(a) - statistic(b)` on the full inputs.
    pub diff: f64,
    /// Percentile interval of the resampled differences.
    pub ci: Interval,
    pub p_value: f64,
}

/// Indices of the `b`-th resample of `n` items, drawn with replacement.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut stream = derive_stream(seed, &format!("boot/{b}"));
    (0..n).map(|_| stream.index(n)).collect()
}

/// Evaluates `statistic` on every resample of `n` items.
pub fn bootstrap_replicates<E, F>(n: usize, spec: &BootstrapSpec, exec: &E, statistic: F) -> Vec<f64>
where
    E: Executor,
    F: Fn(&[usize]) -> f64 + Sync + Send,
{
    exec.map(spec.resamples, |b| statistic(&resample_indices(n, spec.seed, b)))
}

fn rank(q: f64, n: usize) -> usize {
    let r = libm::ceil(q * n as f64 - RANK_SLACK) as usize;
    r.clamp(1, n)
}

/// Nearest-rank percentile interval at `(1 - level) / 2` and
/// `1 - (1 - level) / 2`. Panics on an empty slice.
pub fn percentile_interval(values: &[f64], level: f64) -> Interval {
    assert!(!values.is_empty(), "percentile of nothing");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let n = sorted.len();
    Interval {
        lo: sorted[rank(tail, n) - 1],
        hi: sorted[rank(1.0 - tail, n) - 1],
    }
}

pub fn bootstrap_ci<T, E, F>(
    items: &[T],
    statistic: F,
    spec: &BootstrapSpec,
    exec: &E,
) -> Result<BootstrapEstimate>
where
    T: Sync,
    E: Executor,
    F: Fn(&[&T]) -> f64 + Sync + Send,
{
    if items.is_empty() {
        return Err(Error::EmptyInput("bootstrap items"));
    }
    spec.validate()?;
    let all: Vec<&T> = items.iter().collect();
    let point = statistic(&all);
    let reps = bootstrap_replicates(items.len(), spec, exec, |idx| {
        let sample: Vec<&T> = idx.iter().map(|&i| &items[i]).collect();
        statistic(&sample)
    });
    let Interval { lo, hi } = percentile_interval(&reps, spec.level);
    Ok(BootstrapEstimate { point, lo, hi })
}

/// `min(1, 2 * min((1 + #{d <= 0}) / (B + 1), (1 + #{d >= 0}) / (B + 1)))`.
pub fn two_sided_p_value(diffs: &[f64]) -> f64 {
    let b = diffs.len() as f64;
    let le = diffs.iter().filter(|&&d| d <= 0.0).count() as f64;
    let ge = diffs.iter().filter(|&&d| d >= 0.0).count() as f64;
    let one_sided = ((1.0 + le) / (b + 1.0)).min((1.0 + ge) / (b + 1.0));
    (2.0 * one_sided).min(1.0)
}

type PairKey<'a> = (&'a str, u32, &'a str);

fn keyed<'a>(records: &'a [PredictionRecord], side: &str) -> Result<BTreeMap<PairKey<'a>, usize>> {
    let mut map = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = (r.dataset.as_str(), r.run, r.sample_id.as_str());
        if map.insert(key, i).is_some() {
            return Err(Error::param(
                "records",
                format!(
                    "{side}: duplicate key (dataset={}, run={}, sample_id={})",
                    r.dataset, r.run, r.sample_id
                ),
            ));
        }
    }
    Ok(map)
}

/// Two-sided paired bootstrap comparison of `statistic` between two models
/// scored on the same test items.
///
/// Records are matched on `(dataset, run, sample_id)`. The resampling unit is
/// the test sample `(dataset, sample_id)`: a drawn sample contributes its
/// records from every run to both sides, which keeps the pairing and the run
/// structure intact.
pub fn paired_bootstrap_test<E, F>(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
    statistic: F,
    spec: &BootstrapSpec,
    exec: &E,
) -> Result<PairedTest>
where
    E: Executor,
    F: Fn(&[&PredictionRecord]) -> f64 + Sync + Send,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("paired test records"));
    }
    spec.validate()?;
    let ka = keyed(a, "a")?;
    let kb = keyed(b, "b")?;

    let mut mismatches: Vec<String> = Vec::new();
    let mut count = 0usize;
    let describe = |(d, r, s): &PairKey<'_>, side: &str| {
        format!("(dataset={d}, run={r}, sample_id={s}) only in {side}")
    };
    for k in ka.keys().filter(|k| !kb.contains_key(*k)) {
        count += 1;
        if mismatches.len() < 10 {
            mismatches.push(describe(k, "a"));
        }
    }
    for k in kb.keys().filter(|k| !ka.contains_key(*k)) {
        count += 1;
        if mismatches.len() < 10 {
            mismatches.push(describe(k, "b"));
        }
    }
    if count > 0 {
        return Err(Error::KeyMismatch {
            count,
            examples: mismatches,
        });
    }

    // Sample units in key order; each unit lists its (a, b) record indices.
    let mut units: BTreeMap<(&str, &str), Vec<(usize, usize)>> = BTreeMap::new();
    for (&(dataset, run, sample), &ia) in &ka {
        let ib = kb[&(dataset, run, sample)];
        units.entry((dataset, sample)).or_default().push((ia, ib));
    }
    let units: Vec<Vec<(usize, usize)>> = units.into_values().collect();

    let all_a: Vec<&PredictionRecord> = a.iter().collect();
    let all_b: Vec<&PredictionRecord> = b.iter().collect();
    let diff = statistic(&all_a) - statistic(&all_b);

    let diffs = bootstrap_replicates(units.len(), spec, exec, |idx| {
        let mut ra = Vec::with_capacity(a.len());
        let mut rb = Vec::with_capacity(b.len());
        for &u in idx {
            for &(ia, ib) in &units[u] {
                ra.push(&a[ia]);
                rb.push(&b[ib]);
            }
        }
        statistic(&ra) - statistic(&rb)
    });

    Ok(PairedTest {
        diff,
        ci: percentile_interval(&diffs, spec.level),
        p_value: two_sided_p_value(&diffs),
    })
}
