//! Temperature scaling and expected calibration error.
//!
//! Confidences are probabilities of the predicted label. Before taking a logit
//! they are clipped into `[1e-6, 1 - 1e-6]`, which keeps `confidence = 1.0`
//! (valid in logs) finite.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::PredictionRecord;

pub const CONFIDENCE_CLIP: f64 = 1e-6;

pub fn clip_confidence(c: f64) -> f64 {
    c.clamp(CONFIDENCE_CLIP, 1.0 - CONFIDENCE_CLIP)
}

pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::param("temperature", format!("{t} is not a positive finite number")))
    }
}

/// `sigmoid(logit(c) / t)`. `t = 1` returns `c` untouched.
pub fn apply_temperature(confidence: f64, t: f64) -> Result<f64> {
    check_temperature(t)?;
    if t == 1.0 {
        return Ok(confidence);
    }
    Ok(sigmoid(logit(clip_confidence(confidence)) / t))
}

/// Mean negative log-likelihood of the true labels after scaling by `t`.
///
/// The probability of the true label is the scaled confidence for a correct
/// prediction and its complement otherwise.
pub fn nll<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>, t: f64) -> Result<f64> {
    check_temperature(t)?;
    let obs = Observations::new(records);
    if obs.is_empty() {
        return Err(Error::EmptyInput("nll records"));
    }
    Ok(obs.nll(t))
}

/// Clipped logits paired with correctness, precomputed once per grid search.
struct Observations(Vec<(f64, bool)>);

impl Observations {
    fn new<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Self {
        Self(
            records
                .into_iter()
                .map(|r| (logit(clip_confidence(r.confidence)), r.is_correct()))
                .collect(),
        )
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn nll(&self, t: f64) -> f64 {
        // -ln sigmoid(z) = softplus(-z); -ln(1 - sigmoid(z)) = softplus(z)
        let total: f64 = self
            .0
            .iter()
            .map(|&(l, correct)| {
                let z = l / t;
                if correct {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum();
        total / self.0.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for TemperatureGrid {
    fn default() -> Self {
        Self {
            min: 0.5,
            max: 2.0,
            step: 0.01,
        }
    }
}

impl TemperatureGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max >= self.min && self.step > 0.0) {
            return Err(Error::param(
                "temperature_grid",
                format!("need 0 < min <= max and step > 0, got {self:?}"),
            ));
        }
        Ok(())
    }

    /// Number of lattice points, `floor((max - min) / step) + 1`.
    pub fn len(&self) -> usize {
        libm::floor((self.max - self.min) / self.step + 1e-9) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `i`-th lattice point, computed directly so the endpoints and `1.0`
    /// land exactly on representable values.
    pub fn point(&self, i: usize) -> f64 {
        let n = self.len();
        if n == 1 {
            return self.min;
        }
        let span = self.step * (n - 1) as f64;
        self.min + span * i as f64 / (n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub temperature: f64,
    pub fitted_nll: f64,
    pub grid: TemperatureGrid,
}

/// Grid search for the NLL-minimizing temperature. Exact ties go to the
/// temperature closest to 1, then to the smaller one.
pub fn fit_temperature<'a>(
    validation: impl IntoIterator<Item = &'a PredictionRecord>,
    grid: &TemperatureGrid,
) -> Result<TemperatureModel> {
    grid.validate()?;
    let obs = Observations::new(validation);
    if obs.is_empty() {
        return Err(Error::EmptyInput("validation records"));
    }
    let scores: Vec<(f64, f64)> = (0..grid.len())
        .map(|i| {
            let t = grid.point(i);
            (t, obs.nll(t))
        })
        .collect();
    let better = |a: &(f64, f64), b: &(f64, f64)| -> bool {
        if a.1 != b.1 {
            return a.1 < b.1;
        }
        let (da, db) = (libm::fabs(a.0 - 1.0), libm::fabs(b.0 - 1.0));
        if da != db {
            return da < db;
        }
        a.0 < b.0
    };
    let mut best = scores[0];
    for s in &scores[1..] {
        if better(s, &best) {
            best = *s;
        }
    }
    Ok(TemperatureModel {
        temperature: best.0,
        fitted_nll: best.1,
        grid: *grid,
    })
}

/// NLL at every grid point, for diagnostics.
pub fn nll_profile<'a>(
    validation: impl IntoIterator<Item = &'a PredictionRecord>,
    grid: &TemperatureGrid,
) -> Result<Vec<(f64, f64)>> {
    grid.validate()?;
    let obs = Observations::new(validation);
    if obs.is_empty() {
        return Err(Error::EmptyInput("validation records"));
    }
    Ok((0..grid.len())
        .map(|i| {
            let t = grid.point(i);
            (t, obs.nll(t))
        })
        .collect())
}

/// Statistics of one equal-width confidence bin. `index` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub accuracy: Option<f64>,
    pub mean_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTable {
    pub bins: Vec<BinStat>,
    pub n_total: u64,
}

impl ReliabilityTable {
    /// Count-weighted mean of `|accuracy - mean_confidence|` over non-empty bins.
    pub fn ece(&self) -> f64 {
        if self.n_total == 0 {
            return 0.0;
        }
        let n = self.n_total as f64;
        self.bins
            .iter()
            .filter_map(|b| {
                let (acc, conf) = (b.accuracy?, b.mean_confidence?);
                Some(b.count as f64 / n * libm::fabs(acc - conf))
            })
            .sum()
    }
}

fn bin_edge(i: usize, bins: usize) -> f64 {
    i as f64 / bins as f64
}

/// Bin of `c` among `bins` equal-width bins over `[0, 1]`: bins are
/// left-closed and right-open except the last, which is closed. Values
/// outside `[0, 1]` go to the nearest end bin.
pub fn bin_index(c: f64, bins: usize) -> usize {
    let mut i = (libm::floor(c * bins as f64).max(0.0) as usize).min(bins - 1);
    while i > 0 && c < bin_edge(i, bins) {
        i -= 1;
    }
    while i + 1 < bins && c >= bin_edge(i + 1, bins) {
        i += 1;
    }
    i
}

/// Incremental reliability statistics with integer multiplicities, shared by
/// plain ECE and the bootstrap.
#[derive(Debug, Clone)]
pub struct ReliabilityAccumulator {
    counts: Vec<u64>,
    correct: Vec<u64>,
    confidence: Vec<f64>,
}

impl ReliabilityAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 1 {
            return Err(Error::param("bins", "need at least one bin"));
        }
        Ok(Self {
            counts: alloc::vec![0; bins],
            correct: alloc::vec![0; bins],
            confidence: alloc::vec![0.0; bins],
        })
    }

    pub fn add(&mut self, confidence: f64, correct: bool, weight: u64) {
        let i = bin_index(confidence, self.counts.len());
        self.add_to_bin(i, confidence, correct, weight);
    }

    /// Like [`add`](Self::add) with a precomputed bin index.
    pub fn add_to_bin(&mut self, bin: usize, confidence: f64, correct: bool, weight: u64) {
        self.counts[bin] += weight;
        if correct {
            self.correct[bin] += weight;
        }
        self.confidence[bin] += confidence * weight as f64;
    }

    pub fn finish(&self) -> ReliabilityTable {
        let m = self.counts.len();
        let bins = (0..m)
            .map(|i| {
                let count = self.counts[i];
                let (accuracy, mean_confidence) = if count > 0 {
                    (
                        Some(self.correct[i] as f64 / count as f64),
                        Some(self.confidence[i] / count as f64),
                    )
                } else {
                    (None, None)
                };
                BinStat {
                    index: i + 1,
                    lo: bin_edge(i, m),
                    hi: bin_edge(i + 1, m),
                    count,
                    accuracy,
                    mean_confidence,
                }
            })
            .collect();
        ReliabilityTable {
            bins,
            n_total: self.counts.iter().sum(),
        }
    }
}

/// Expected calibration error over `bins` equal-width bins, with the table
/// backing a reliability diagram.
pub fn ece<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    bins: usize,
) -> Result<(f64, ReliabilityTable)> {
    ece_scaled(records, bins, 1.0)
}

/// [`ece`] on confidences scaled by temperature `t`.
pub fn ece_scaled<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    bins: usize,
    t: f64,
) -> Result<(f64, ReliabilityTable)> {
    check_temperature(t)?;
    let mut acc = ReliabilityAccumulator::new(bins)?;
    for r in records {
        acc.add(apply_temperature(r.confidence, t)?, r.is_correct(), 1);
    }
    let table = acc.finish();
    if table.n_total == 0 {
        return Err(Error::EmptyInput("ece records"));
    }
    Ok((table.ece(), table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::tests::rec;
    use crate::records::Label;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn scored(confidence: f64, correct: bool) -> PredictionRecord {
        let mut r = rec("x", "m", "d", 1);
        r.confidence = confidence;
        if !correct {
            r.pred_label = Label::Safe;
        }
        r
    }

    #[test]
    fn identity_and_zero_logit() {
        for c in [0.01, 0.3, 0.5, 0.77, 1.0] {
            assert_eq!(apply_temperature(c, 1.0).unwrap(), c);
        }
        for t in [0.5, 1.3, 2.0, 7.0] {
            assert!((apply_temperature(0.5, t).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_three_quarters() {
        assert!((apply_temperature(0.9, 2.0).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        assert!(apply_temperature(0.9, 0.0).is_err());
        assert!(apply_temperature(0.9, -1.0).is_err());
    }

    #[test]
    fn nll_hand_values() {
        let v = nll(&[scored(0.5, true)], 1.0).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-12);
        let v = nll(&[scored(0.9, false)], 1.0).unwrap();
        assert!((v - core::f64::consts::LN_10).abs() < 1e-9);
        let v = nll(&[scored(1.0, true), scored(1.0, true)], 1.0).unwrap();
        assert!(v < 1.01e-6, "{v}");
        assert!(nll(&[], 1.0).is_err());
    }

    #[test]
    fn grid_has_151_points() {
        let g = TemperatureGrid::default();
        assert_eq!(g.len(), 151);
        assert_eq!(g.point(0), 0.5);
        assert_eq!(g.point(50), 1.0);
        assert_eq!(g.point(150), 2.0);
    }

    #[test]
    fn all_correct_fits_grid_minimum() {
        let v: Vec<_> = [0.6, 0.7, 0.8, 0.95].iter().map(|&c| scored(c, true)).collect();
        let m = fit_temperature(&v, &TemperatureGrid::default()).unwrap();
        assert_eq!(m.temperature, 0.5);
    }

    #[test]
    fn constant_nll_ties_resolve_to_one() {
        // Every record at confidence 0.5: NLL is ln 2 for every T.
        let v = vec![scored(0.5, true), scored(0.5, false)];
        let m = fit_temperature(&v, &TemperatureGrid::default()).unwrap();
        assert_eq!(m.temperature, 1.0);
    }

    #[test]
    fn empty_validation_rejected() {
        assert!(fit_temperature(&[], &TemperatureGrid::default()).is_err());
    }

    #[test]
    fn ece_hand_cases() {
        let four = vec![
            scored(0.95, true),
            scored(0.95, false),
            scored(0.65, true),
            scored(0.55, true),
        ];
        let (e, table) = ece(&four, 10).unwrap();
        assert!((e - 0.425).abs() < 1e-12, "{e}");
        assert_eq!(table.n_total, 4);
        assert_eq!(table.bins[9].count, 2);

        let (e, _) = ece(&[scored(0.7, true)], 10).unwrap();
        assert!((e - 0.3).abs() < 1e-12);

        let (e, _) = ece(&[scored(1.0, true), scored(1.0, true)], 10).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn ece_errors() {
        assert!(ece(&[], 10).is_err());
        assert!(ece(&[scored(0.7, true)], 0).is_err());
    }

    #[test]
    fn bin_edges_are_left_closed() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 1);
        assert_eq!(bin_index(0.3, 10), 3);
        assert_eq!(bin_index(0.7, 10), 7);
        assert_eq!(bin_index(0.9, 10), 9);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.099_999_999, 10), 0);
    }

    proptest! {
        #[test]
        fn scaling_is_monotone_and_keeps_side(a in 0.001f64..0.999, b in 0.001f64..0.999, t in 0.1f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            let (sl, sh) = (apply_temperature(lo, t).unwrap(), apply_temperature(hi, t).unwrap());
            prop_assert!(sl < sh);
            let s = apply_temperature(a, t).unwrap();
            prop_assert_eq!(a > 0.5, s > 0.5);
        }

        #[test]
        fn larger_temperature_softens(c in 0.51f64..0.999, t1 in 0.2f64..4.0, dt in 0.01f64..2.0) {
            prop_assert!(apply_temperature(c, t1 + dt).unwrap() < apply_temperature(c, t1).unwrap());
        }

        #[test]
        fn ece_is_order_invariant_and_bounded(
            items in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..50),
            bins in 1usize..15,
        ) {
            let recs: Vec<_> = items.iter().map(|&(c, k)| scored(c.max(1e-9), k)).collect();
            let mut rev = recs.clone();
            rev.reverse();
            let (a, _) = ece(&recs, bins).unwrap();
            let (b, _) = ece(&rev, bins).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn nll_has_no_interior_local_maximum(
            items in proptest::collection::vec((0.02f64..0.999, any::<bool>()), 1..40),
        ) {
            let recs: Vec<_> = items.iter().map(|&(c, k)| scored(c, k)).collect();
            let profile = nll_profile(&recs, &TemperatureGrid::default()).unwrap();
            for w in profile.windows(3) {
                prop_assert!(!(w[1].1 - w[0].1 > 1e-12 && w[1].1 - w[2].1 > 1e-12));
            }
        }
    }
}
