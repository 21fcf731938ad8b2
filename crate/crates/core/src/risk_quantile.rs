//! Calibrated thresholds controlling the expected false negative rate.
//!
//! With `n` calibration images, loss bound `B` and target level `α`, the
//! threshold is the largest candidate `τ` (an observed score, or 0) with
//!
//! ```text
//! Σ_i Σ_{j ∈ Y_i} 1{s_ij < τ} / |Y_i|  ≤  (n + 1)·α − B
//! ```
//!
//! i.e. a quantile of the pooled scores where every ground-truth pixel of
//! image `i` weighs `1/|Y_i|`. Pixels with `s ≥ τ` enter the prediction
//! set. [`grid_search_threshold`] evaluates the same constraint directly on
//! prediction sets over a fixed grid and serves as an oracle.

use std::cmp::Ordering;

use crate::dataset_io::GroundTruthMask;
use crate::error::{Error, Result};
use crate::scores::{threshold_set, ScoreField};

/// Slack allowed when comparing accumulated weights against the budget, so
/// that summation order does not flip exact-boundary cases.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Default loss bound; FNR never exceeds 1.
pub const DEFAULT_LOSS_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedScoreSample {
    pub score: f64,
    /// `1 / |Y_i|`.
    pub weight: f64,
    pub image_index: usize,
    pub pixel_index: usize,
}

/// Weighted scores pooled over the ground-truth pixels of a calibration set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScores {
    pub samples: Vec<WeightedScoreSample>,
    /// Images with at least one ground-truth pixel.
    pub n_images: usize,
    /// Input positions of images skipped because `|Y_i| = 0`.
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub tau: f64,
    /// `((n + 1)·α − B) / n`.
    pub quantile_level: f64,
    pub n_images: usize,
    /// Mean calibration FNR at `tau`.
    pub empirical_risk_at_tau: f64,
}

pub fn collect_weighted_scores<'a, I>(images: I) -> Result<WeightedScores>
where
    I: IntoIterator<Item = (&'a ScoreField, &'a GroundTruthMask)>,
{
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    let mut n_images = 0;
    for (image_index, (scores, mask)) in images.into_iter().enumerate() {
        if scores.len() != mask.len() {
            return Err(Error::Validation(format!(
                "image {image_index}: {} scores but {} mask pixels",
                scores.len(),
                mask.len()
            )));
        }
        let positives = mask.positives();
        if positives == 0 {
            excluded.push(image_index);
            continue;
        }
        n_images += 1;
        let weight = 1.0 / positives as f64;
        samples.extend(
            scores
                .values()
                .iter()
                .zip(mask.values())
                .enumerate()
                .filter(|(_, (_, &y))| y == 1)
                .map(|(pixel_index, (&score, _))| WeightedScoreSample {
                    score,
                    weight,
                    image_index,
                    pixel_index,
                }),
        );
    }
    if n_images == 0 {
        return Err(Error::Calibration(
            "every calibration image has an empty ground-truth mask".into(),
        ));
    }
    Ok(WeightedScores {
        samples,
        n_images,
        excluded,
    })
}

fn validate(alpha: f64, loss_bound: f64, n_images: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !(loss_bound >= 0.0 && loss_bound.is_finite()) {
        return Err(Error::Parameter(format!(
            "loss bound B = {loss_bound} must be finite and non-negative"
        )));
    }
    if n_images == 0 {
        return Err(Error::Parameter("need at least one calibration image".into()));
    }
    Ok(())
}

/// Exact threshold by one sort and a cumulative-weight scan, `O(M log M)`.
pub fn weighted_quantile_threshold(
    samples: &[WeightedScoreSample],
    n_images: usize,
    alpha: f64,
    loss_bound: f64,
) -> Result<ThresholdResult> {
    validate(alpha, loss_bound, n_images)?;
    let n = n_images as f64;
    let budget = (n + 1.0) * alpha - loss_bound;
    let quantile_level = budget / n;
    if budget < 0.0 {
        return Ok(ThresholdResult {
            tau: 0.0,
            quantile_level,
            n_images,
            empirical_risk_at_tau: 0.0,
        });
    }

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.image_index.cmp(&b.image_index))
            .then(a.pixel_index.cmp(&b.pixel_index))
    });

    let mut tau = 0.0;
    let mut mass_below_tau = 0.0;
    let mut below = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].score;
        if below > budget + FEASIBILITY_TOLERANCE {
            break;
        }
        tau = score;
        mass_below_tau = below;
        while i < sorted.len() && sorted[i].score.total_cmp(&score) == Ordering::Equal {
            below += sorted[i].weight;
            i += 1;
        }
    }

    Ok(ThresholdResult {
        tau,
        quantile_level,
        n_images,
        empirical_risk_at_tau: mass_below_tau / n,
    })
}

/// Grid-search oracle: scans `τ ∈ {0, step, 2·step, …, 1}` and keeps the
/// largest grid point whose prediction sets satisfy
/// `(1/(n+1))·Σ_i FNR_i(τ) + B/(n+1) ≤ α`.
pub fn grid_search_threshold<'a, I>(
    images: I,
    alpha: f64,
    loss_bound: f64,
    grid_step: f64,
) -> Result<ThresholdResult>
where
    I: IntoIterator<Item = (&'a ScoreField, &'a GroundTruthMask)>,
{
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::Parameter(format!(
            "grid_step = {grid_step} must be positive"
        )));
    }
    let retained: Vec<_> = images
        .into_iter()
        .filter(|(_, mask)| mask.positives() > 0)
        .collect();
    if retained.is_empty() {
        return Err(Error::Calibration(
            "every calibration image has an empty ground-truth mask".into(),
        ));
    }
    validate(alpha, loss_bound, retained.len())?;
    let n = retained.len() as f64;

    let steps = (1.0 / grid_step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| (k as f64 * grid_step).min(1.0)).collect();
    if *grid.last().expect("grid has a zero point") < 1.0 {
        grid.push(1.0);
    }

    let mut best: Option<(f64, f64)> = None;
    for tau in grid {
        let risk_sum: f64 = retained
            .iter()
            .map(|(scores, mask)| {
                let set = threshold_set(scores, tau);
                let covered = (0..mask.len())
                    .filter(|&j| mask.is_positive(j) && set.contains(j))
                    .count();
                1.0 - covered as f64 / mask.positives() as f64
            })
            .sum();
        let bound = risk_sum / (n + 1.0) + loss_bound / (n + 1.0);
        if bound <= alpha + FEASIBILITY_TOLERANCE / (n + 1.0) {
            best = Some((tau, risk_sum / n));
        }
    }
    let (tau, risk) = best.unwrap_or((0.0, 0.0));
    Ok(ThresholdResult {
        tau,
        quantile_level: ((n + 1.0) * alpha - loss_bound) / n,
        n_images: retained.len(),
        empirical_risk_at_tau: risk,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::scores::ScoreKind;

    fn image(scores: &[f64], mask: &[u8]) -> (ScoreField, GroundTruthMask) {
        (
            ScoreField::from_values(1, scores.len(), scores.to_vec(), ScoreKind::Crc).unwrap(),
            GroundTruthMask::new(1, mask.len(), mask.to_vec()).unwrap(),
        )
    }

    fn sample(score: f64, weight: f64, image_index: usize) -> WeightedScoreSample {
        WeightedScoreSample {
            score,
            weight,
            image_index,
            pixel_index: 0,
        }
    }

    /// Image A: positives with scores 0.9 and 0.2; image B: one positive at 0.6.
    fn toy_set() -> Vec<(ScoreField, GroundTruthMask)> {
        vec![
            image(&[0.9, 0.1, 0.2], &[1, 0, 1]),
            image(&[0.6, 0.3], &[1, 0]),
        ]
    }

    #[test]
    fn collects_weighted_scores() {
        let set = toy_set();
        let w = collect_weighted_scores(set.iter().map(|(s, m)| (s, m))).unwrap();
        assert_eq!(w.n_images, 2);
        let pairs: Vec<_> = w.samples.iter().map(|s| (s.score, s.weight)).collect();
        assert_eq!(pairs, vec![(0.9, 0.5), (0.2, 0.5), (0.6, 1.0)]);
    }

    #[test]
    fn empty_masks_are_filtered() {
        let mut set = toy_set();
        set.push(image(&[0.4, 0.4], &[0, 0]));
        let w = collect_weighted_scores(set.iter().map(|(s, m)| (s, m))).unwrap();
        assert_eq!(w.n_images, 2);
        assert_eq!(w.excluded, vec![2]);
        assert_eq!(w.samples.len(), 3);

        let empty = [image(&[0.4], &[0])];
        assert!(matches!(
            collect_weighted_scores(empty.iter().map(|(s, m)| (s, m))),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn hand_example_threshold() {
        let samples = [sample(0.2, 0.5, 0), sample(0.9, 0.5, 0), sample(0.6, 1.0, 1)];
        let r = weighted_quantile_threshold(&samples, 2, 0.5, 1.0).unwrap();
        assert_eq!(r.tau, 0.6);
        assert_eq!(r.quantile_level, 0.25);
        assert_eq!(r.empirical_risk_at_tau, 0.25);
    }

    #[test]
    fn infeasible_budget_includes_everything() {
        let samples = [sample(0.2, 0.5, 0), sample(0.9, 0.5, 0), sample(0.6, 1.0, 1)];
        let r = weighted_quantile_threshold(&samples, 2, 0.2, 1.0).unwrap();
        assert_eq!(r.tau, 0.0);
        let g = grid_search_threshold(toy_set().iter().map(|(s, m)| (s, m)), 0.2, 1.0, 0.01).unwrap();
        assert_eq!(g.tau, 0.0);
    }

    #[test]
    fn single_sample_threshold() {
        let r = weighted_quantile_threshold(&[sample(0.7, 1.0, 0)], 1, 0.6, 1.0).unwrap();
        assert_eq!(r.tau, 0.7);
    }

    #[test]
    fn grid_search_lands_at_or_below_exact_threshold() {
        let set = toy_set();
        let g = grid_search_threshold(set.iter().map(|(s, m)| (s, m)), 0.5, 1.0, 0.01).unwrap();
        assert!(g.tau <= 0.6 && g.tau > 0.6 - 0.01 - 1e-12, "{}", g.tau);

        let g = grid_search_threshold(set.iter().map(|(s, m)| (s, m)), 0.5, 1.0, 1.0).unwrap();
        assert!(g.tau == 0.0 || g.tau == 1.0);
    }

    #[test]
    fn parameter_validation() {
        let s = [sample(0.5, 1.0, 0)];
        assert!(weighted_quantile_threshold(&s, 1, 0.0, 1.0).is_err());
        assert!(weighted_quantile_threshold(&s, 1, 1.0, 1.0).is_err());
        assert!(weighted_quantile_threshold(&s, 1, 0.5, -1.0).is_err());
        assert!(weighted_quantile_threshold(&s, 0, 0.5, 1.0).is_err());
        let set = toy_set();
        assert!(grid_search_threshold(set.iter().map(|(s, m)| (s, m)), 0.5, 1.0, 0.0).is_err());
    }

    fn calibration_set() -> impl Strategy<Value = Vec<(ScoreField, GroundTruthMask)>> {
        prop::collection::vec(
            (1usize..10).prop_flat_map(|len| {
                (
                    prop::collection::vec((0u32..=32).prop_map(|k| f64::from(k) / 32.0), len),
                    prop::collection::vec(0u8..=1, len),
                )
            }),
            1..8,
        )
        .prop_map(|imgs| imgs.into_iter().map(|(s, m)| image(&s, &m)).collect())
    }

    fn risk_sum(set: &[(ScoreField, GroundTruthMask)], tau: f64) -> f64 {
        set.iter()
            .filter(|(_, m)| m.positives() > 0)
            .map(|(s, m)| {
                let below = (0..m.len())
                    .filter(|&j| m.is_positive(j) && s.values()[j] < tau)
                    .count();
                below as f64 / m.positives() as f64
            })
            .sum()
    }

    proptest! {
        #[test]
        fn matches_fine_grid_oracle(set in calibration_set(), alpha in 0.05f64..0.95) {
            let Ok(w) = collect_weighted_scores(set.iter().map(|(s, m)| (s, m))) else {
                return Ok(());
            };
            let exact = weighted_quantile_threshold(&w.samples, w.n_images, alpha, 1.0).unwrap();
            let grid = grid_search_threshold(set.iter().map(|(s, m)| (s, m)), alpha, 1.0, 1.0 / 64.0).unwrap();
            prop_assert!(grid.tau <= exact.tau);
            for (s, _) in &set {
                prop_assert_eq!(threshold_set(s, exact.tau), threshold_set(s, grid.tau));
            }
        }

        #[test]
        fn feasible_and_tight(set in calibration_set(), alpha in 0.05f64..0.95) {
            let Ok(w) = collect_weighted_scores(set.iter().map(|(s, m)| (s, m))) else {
                return Ok(());
            };
            let n = w.n_images as f64;
            let budget = (n + 1.0) * alpha - 1.0;
            let r = weighted_quantile_threshold(&w.samples, w.n_images, alpha, 1.0).unwrap();
            if budget >= 0.0 {
                prop_assert!(risk_sum(&set, r.tau) <= budget + 1e-9);
                if let Some(next) = w.samples.iter().map(|s| s.score).filter(|&s| s > r.tau).reduce(f64::min) {
                    prop_assert!(risk_sum(&set, next) > budget);
                }
            } else {
                prop_assert_eq!(r.tau, 0.0);
            }
        }

        #[test]
        fn monotone_in_alpha(set in calibration_set(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let Ok(w) = collect_weighted_scores(set.iter().map(|(s, m)| (s, m))) else {
                return Ok(());
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let t_lo = weighted_quantile_threshold(&w.samples, w.n_images, lo, 1.0).unwrap().tau;
            let t_hi = weighted_quantile_threshold(&w.samples, w.n_images, hi, 1.0).unwrap().tau;
            prop_assert!(t_lo <= t_hi);
        }
    }
}
