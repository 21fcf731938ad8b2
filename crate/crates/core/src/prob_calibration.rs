//! Monotone recalibration of pixel probabilities.
//!
//! The curve is the isotonic (pool-adjacent-violators) fit of binary labels
//! against raw probabilities. For 0/1 labels the least-squares isotonic fit
//! also minimizes Bernoulli cross-entropy among nondecreasing functions, so
//! no separate log-loss solver is needed. Pixels are first pooled into
//! equal-count bins of raw probability; tie runs are never split across bins.

use std::path::Path;

use crate::dataset_io::{ProbabilityMap, Sample};
use crate::error::{Error, Result};

pub const DEFAULT_CLIP_EPSILON: f64 = 1e-6;
pub const DEFAULT_N_BINS: usize = 1000;

/// A nondecreasing, right-continuous step function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    raw: Vec<f64>,
    calibrated: Vec<f64>,
    clip_epsilon: f64,
}

impl CalibrationCurve {
    /// Builds a curve from `(raw, calibrated)` knots. Raw positions must be
    /// strictly increasing and calibrated values nondecreasing within
    /// `[clip_epsilon, 1 − clip_epsilon]`.
    pub fn new(knots: Vec<(f64, f64)>, clip_epsilon: f64) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Validation("calibration curve has no knots".into()));
        }
        if !(clip_epsilon > 0.0 && clip_epsilon < 0.5) {
            return Err(Error::Validation(format!(
                "clip epsilon {clip_epsilon} must lie in (0, 0.5)"
            )));
        }
        for w in knots.windows(2) {
            if w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Validation(format!(
                    "knot positions {} and {} are not strictly increasing",
                    w[0].0, w[1].0
                )));
            }
            if w[0].1 > w[1].1 {
                return Err(Error::Validation(format!(
                    "calibrated values {} > {} break monotonicity",
                    w[0].1, w[1].1
                )));
            }
        }
        let lo = clip_epsilon;
        let hi = 1.0 - clip_epsilon;
        if let Some(&(r, c)) = knots.iter().find(|(r, c)| {
            !(r.is_finite() && c.is_finite() && *c >= lo && *c <= hi)
        }) {
            return Err(Error::Validation(format!(
                "knot ({r}, {c}) outside [{lo}, {hi}]"
            )));
        }
        let (raw, calibrated) = knots.into_iter().unzip();
        Ok(Self {
            raw,
            calibrated,
            clip_epsilon,
        })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.raw.iter().copied().zip(self.calibrated.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn clip_epsilon(&self) -> f64 {
        self.clip_epsilon
    }

    /// Value of the last knot at or below `p`; the first knot's value below
    /// the curve's range.
    pub fn evaluate(&self, p: f64) -> f64 {
        let idx = self.raw.partition_point(|&r| r <= p);
        self.calibrated[idx.saturating_sub(1)]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["raw", "calibrated"])?;
        for (r, c) in self.knots() {
            w.write_record([r.to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, clip_epsilon: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        if r.headers()?.iter().collect::<Vec<_>>() != ["raw", "calibrated"] {
            return Err(Error::Model(format!(
                "{}: expected header raw,calibrated",
                path.display()
            )));
        }
        let mut knots = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Model(format!("{}: bad row {rec:?}", path.display())))
            };
            knots.push((parse(0)?, parse(1)?));
        }
        Self::new(knots, clip_epsilon)
    }
}

/// Weighted least-squares nondecreasing fit (pool adjacent violators).
///
/// Returns one fitted value per input; each pooled block takes the weighted
/// mean of its members.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // (weighted sum, total weight, number of inputs)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        blocks.push((y * w, w, 1));
        while blocks.len() > 1 {
            let (s1, w1, c1) = blocks[blocks.len() - 1];
            let (s0, w0, c0) = blocks[blocks.len() - 2];
            if s0 / w0 <= s1 / w1 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("two blocks present") = (s0 + s1, w0 + w1, c0 + c1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, w, c)| std::iter::repeat_n(s / w, c))
        .collect()
}

/// PAVA on label counts: bin `i` holds `counts[i]` pixels of which
/// `positives[i]` are positive. Pooling is done in integers, so each block's
/// value is exactly `Σ positives / Σ counts` rounded once.
pub fn pava_counts(positives: &[u64], counts: &[u64]) -> Vec<f64> {
    assert_eq!(positives.len(), counts.len());
    // (positives, pixels, number of bins)
    let mut blocks: Vec<(u64, u64, usize)> = Vec::with_capacity(counts.len());
    for (&k, &c) in positives.iter().zip(counts) {
        assert!(c > 0 && k <= c, "bin with {k} positives out of {c}");
        blocks.push((k, c, 1));
        while blocks.len() > 1 {
            let (k1, c1, n1) = blocks[blocks.len() - 1];
            let (k0, c0, n0) = blocks[blocks.len() - 2];
            if u128::from(k0) * u128::from(c1) <= u128::from(k1) * u128::from(c0) {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("two blocks present") = (k0 + k1, c0 + c1, n0 + n1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(k, c, n)| std::iter::repeat_n(k as f64 / c as f64, n))
        .collect()
}

/// Intermediate result of binning plus PAVA, before clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    /// Smallest raw probability in each bin.
    pub raw: Vec<f64>,
    /// Positive-label frequency per bin.
    pub label_mean: Vec<f64>,
    /// Pixels per bin.
    pub weight: Vec<f64>,
    /// Positive pixels per bin.
    pub positives: Vec<u64>,
    /// Isotonic fit per bin.
    pub fitted: Vec<f64>,
}

/// Pools pairs into at most `n_bins` equal-count bins and runs PAVA on the
/// bin label frequencies weighted by bin size.
pub fn isotonic_bins(pairs: &[(f64, u8)], n_bins: usize) -> Result<IsotonicFit> {
    if pairs.is_empty() {
        return Err(Error::Calibration("no pixels to fit a calibration curve".into()));
    }
    if n_bins == 0 {
        return Err(Error::Parameter("n_bins must be at least 1".into()));
    }
    if let Some((p, y)) = pairs
        .iter()
        .find(|(p, y)| !(p.is_finite() && (0.0..=1.0).contains(p)) || *y > 1)
    {
        return Err(Error::Validation(format!("bad calibration pair ({p}, {y})")));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Runs of identical raw values: (raw, count, positives).
    let mut runs: Vec<(f64, usize, usize)> = Vec::new();
    for &(p, y) in &sorted {
        match runs.last_mut() {
            Some(last) if last.0 == p => {
                last.1 += 1;
                last.2 += usize::from(y);
            }
            _ => runs.push((p, 1, usize::from(y))),
        }
    }

    let total = sorted.len() as f64;
    let per_bin = total / n_bins as f64;
    let mut fit = IsotonicFit {
        raw: Vec::new(),
        label_mean: Vec::new(),
        weight: Vec::new(),
        positives: Vec::new(),
        fitted: Vec::new(),
    };
    let mut seen = 0usize;
    let mut bin: Option<(f64, usize, usize)> = None;
    for (p, count, pos) in runs {
        let b = bin.get_or_insert((p, 0, 0));
        b.1 += count;
        b.2 += pos;
        seen += count;
        let boundary = (fit.raw.len() + 1) as f64 * per_bin;
        if seen as f64 >= boundary - 1e-9 {
            let (raw, c, k) = bin.take().expect("bin in progress");
            fit.raw.push(raw);
            fit.weight.push(c as f64);
            fit.positives.push(k as u64);
            fit.label_mean.push(k as f64 / c as f64);
        }
    }
    if let Some((raw, c, k)) = bin {
        fit.raw.push(raw);
        fit.weight.push(c as f64);
        fit.positives.push(k as u64);
        fit.label_mean.push(k as f64 / c as f64);
    }
    let counts: Vec<u64> = fit.weight.iter().map(|&w| w as u64).collect();
    fit.fitted = pava_counts(&fit.positives, &counts);
    Ok(fit)
}

/// Fits the calibration curve on `(raw probability, label)` pairs.
pub fn fit_isotonic(pairs: &[(f64, u8)], n_bins: usize) -> Result<CalibrationCurve> {
    fit_isotonic_with_epsilon(pairs, n_bins, DEFAULT_CLIP_EPSILON)
}

pub fn fit_isotonic_with_epsilon(
    pairs: &[(f64, u8)],
    n_bins: usize,
    clip_epsilon: f64,
) -> Result<CalibrationCurve> {
    let fit = isotonic_bins(pairs, n_bins)?;
    let knots = fit
        .raw
        .into_iter()
        .zip(fit.fitted)
        .map(|(r, f)| (r, f.clamp(clip_epsilon, 1.0 - clip_epsilon)))
        .collect();
    CalibrationCurve::new(knots, clip_epsilon)
}

/// Every pixel of every sample as a `(raw probability, label)` pair.
pub fn pixel_pairs<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Vec<(f64, u8)> {
    samples
        .into_iter()
        .flat_map(|s| {
            s.probs
                .values()
                .iter()
                .zip(s.mask.values())
                .map(|(&p, &y)| (f64::from(p), y))
        })
        .collect()
}

pub fn apply_calibration(curve: &CalibrationCurve, probs: &ProbabilityMap) -> ProbabilityMap {
    probs
        .map(|p| curve.evaluate(f64::from(p)) as f32)
        .expect("calibrated values lie inside [0, 1]")
}

/// Mean Bernoulli cross-entropy of predictions `f(p)` against labels.
pub fn cross_entropy(f: impl Fn(f64) -> f64, pairs: &[(f64, u8)]) -> f64 {
    let sum: f64 = pairs
        .iter()
        .map(|&(p, y)| {
            let q = f(p);
            if y == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    sum / pairs.len() as f64
}
