//! Coverage metrics, repeated-split trials and α sweeps.
//!
//! Per test image, coverage is `|Ĉ ∩ Y| / |Y|` and the coverage gap is
//! `|coverage − (1 − α)|`. A trial averages both over its test split; a
//! report then gives the mean over trials together with two spreads: the
//! standard deviation over all pooled test images and the standard deviation
//! of the per-trial means. Images with an empty mask are counted, never
//! scored.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset_io::{split_indices, GroundTruthMask, Sample};
use crate::error::{Error, Result};
use crate::methods::{fit_curve, fit_prepared, prepare_image, MethodKind, MethodSpec, PreparedImage};
use crate::prob_calibration::CalibrationCurve;
use crate::scores::{PredictionSet, ScoreKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub sample_id: String,
    pub coverage: f64,
    pub fnr: f64,
    pub set_size: usize,
    pub stratum: Option<usize>,
}

/// Coverage of one prediction; `None` when the mask is empty.
pub fn evaluate_image(
    sample_id: &str,
    pred: &PredictionSet,
    mask: &GroundTruthMask,
    stratum: Option<usize>,
) -> Result<Option<ImageResult>> {
    if pred.members().len() != mask.len() {
        return Err(Error::Validation(format!(
            "{sample_id}: prediction has {} pixels, mask has {}",
            pred.members().len(),
            mask.len()
        )));
    }
    let positives = mask.positives();
    if positives == 0 {
        return Ok(None);
    }
    let covered = pred
        .members()
        .iter()
        .zip(mask.values())
        .filter(|(&m, &y)| m && y == 1)
        .count();
    let coverage = covered as f64 / positives as f64;
    Ok(Some(ImageResult {
        sample_id: sample_id.to_string(),
        coverage,
        fnr: 1.0 - coverage,
        set_size: pred.size(),
        stratum,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub n_trials: usize,
    /// Share of images used to fit the probability calibration curve.
    pub val_frac: f64,
    /// Share of images used to fit thresholds; the rest is test.
    pub cal_frac: f64,
    /// Trial `t` splits with seed `seed + t`.
    pub seed: u64,
}

/// One method in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub method: MethodKind,
    pub alpha: f64,
    pub trial: usize,
    pub marginal_coverage: f64,
    pub coverage_gap: f64,
    pub mean_set_size: f64,
    pub n_test: usize,
    pub n_empty_masks: usize,
}

/// One stratum of a stratified method in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumRow {
    pub method: MethodKind,
    pub alpha: f64,
    pub trial: usize,
    pub stratum: usize,
    /// Calibration images in this stratum.
    pub n_cal: usize,
    pub n_test: usize,
    /// Mean FNR over the stratum's test images (NaN when there are none).
    pub mean_fnr: f64,
}

/// Aggregate over trials for one method spec.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub method: MethodKind,
    pub alpha: f64,
    pub n_trials: usize,
    /// Scored test images summed over trials.
    pub n_test: usize,
    pub n_empty_masks: usize,
    pub marginal_coverage: f64,
    pub coverage_sd_samples: f64,
    pub coverage_sd_trials: f64,
    pub coverage_gap: f64,
    pub gap_sd_samples: f64,
    pub gap_sd_trials: f64,
    pub mean_set_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumReport {
    pub method: MethodKind,
    pub alpha: f64,
    pub stratum: usize,
    /// Trials in which the stratum had at least one test image.
    pub n_trials: usize,
    pub n_test: usize,
    /// Smallest calibration count of this stratum over those trials.
    pub min_n_cal: usize,
    pub mean_fnr: f64,
    /// Standard error of `mean_fnr` over trials.
    pub se_fnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub specs: Vec<MethodSpec>,
    /// Trial-major, then in `specs` order.
    pub rows: Vec<TrialRow>,
    pub stratum_rows: Vec<StratumRow>,
    /// One per spec.
    pub reports: Vec<TrialReport>,
    pub stratum_reports: Vec<StratumReport>,
    /// Pooled per-image coverages, one vector per spec.
    pub coverages: Vec<Vec<f64>>,
}

impl TrialOutcome {
    /// Rows of spec `index`, in trial order.
    pub fn rows_for(&self, index: usize) -> Vec<&TrialRow> {
        let n = self.specs.len();
        self.rows.iter().skip(index).step_by(n).collect()
    }
}

struct MethodTrial {
    row: TrialRow,
    coverages: Vec<f64>,
    gaps: Vec<f64>,
    strata: Vec<StratumRow>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Cache key for prepared scores: family plus the curve's parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PrepKey {
    kind: ScoreKind,
    curve: Option<(usize, u64)>,
}

fn prep_key(spec: &MethodSpec) -> PrepKey {
    PrepKey {
        kind: spec.method.score_kind(),
        curve: spec
            .method
            .uses_curve()
            .then_some((spec.n_bins, spec.clip_epsilon.to_bits())),
    }
}

/// Uncalibrated scores depend only on the image and are shared by all trials.
struct SharedScores {
    crc: Vec<PreparedImage>,
    cra: Option<Vec<PreparedImage>>,
}

enum Lookup<'a> {
    Dense(&'a [PreparedImage]),
    /// Only calibration and test images of the current trial are filled.
    Sparse(&'a [Option<PreparedImage>]),
}

impl<'a> Lookup<'a> {
    fn get(&self, i: usize) -> &'a PreparedImage {
        match self {
            Lookup::Dense(v) => &v[i],
            Lookup::Sparse(v) => v[i].as_ref().expect("cal/test image prepared"),
        }
    }
}

fn run_one_trial(
    dataset: &[Sample],
    specs: &[MethodSpec],
    shared: &SharedScores,
    config: &TrialConfig,
    trial: usize,
) -> Result<Vec<MethodTrial>> {
    let split = split_indices(
        dataset.len(),
        config.val_frac,
        config.cal_frac,
        config.seed.wrapping_add(trial as u64),
    )?;
    let val: Vec<Sample> = split.val.iter().map(|&i| dataset[i].clone()).collect();

    let mut curves: Vec<(PrepKey, CalibrationCurve, Vec<Option<PreparedImage>>)> = Vec::new();
    for spec in specs.iter().filter(|s| s.method.uses_curve()) {
        let key = prep_key(spec);
        if curves.iter().any(|(k, _, _)| *k == key) {
            continue;
        }
        let curve = fit_curve(spec, &val)?;
        let mut prepared = vec![None; dataset.len()];
        for &i in split.cal.iter().chain(&split.test) {
            prepared[i] = Some(prepare_image(ScoreKind::Cra, Some(&curve), &dataset[i].probs));
        }
        curves.push((key, curve, prepared));
    }

    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let key = prep_key(spec);
        let (curve, lookup) = match key.curve {
            Some(_) => {
                let (_, curve, prepared) = curves
                    .iter()
                    .find(|(k, _, _)| *k == key)
                    .expect("curve prepared above");
                (Some(curve.clone()), Lookup::Sparse(prepared))
            }
            None => match key.kind {
                ScoreKind::Crc => (None, Lookup::Dense(&shared.crc)),
                ScoreKind::Cra => (
                    None,
                    Lookup::Dense(shared.cra.as_ref().expect("raw CRA scores prepared")),
                ),
            },
        };
        let lookup = |i| lookup.get(i);

        let cal: Vec<(&PreparedImage, &GroundTruthMask)> = split
            .cal
            .iter()
            .map(|&i| (lookup(i), &dataset[i].mask))
            .collect();
        let fitted = fit_prepared(spec, curve, &cal)?;

        let target = 1.0 - spec.alpha;
        let mut coverages = Vec::with_capacity(split.test.len());
        let mut gaps = Vec::with_capacity(split.test.len());
        let mut sizes = Vec::with_capacity(split.test.len());
        let n_strata = fitted.strata.as_ref().map_or(0, |s| s.n_strata());
        let mut stratum_fnr: Vec<Vec<f64>> = vec![Vec::new(); n_strata];
        let mut n_empty = 0;
        for &i in &split.test {
            let pred = fitted.predict_prepared(lookup(i));
            match evaluate_image(&dataset[i].id, &pred.set, &dataset[i].mask, pred.stratum)? {
                Some(r) => {
                    coverages.push(r.coverage);
                    gaps.push((r.coverage - target).abs());
                    sizes.push(r.set_size as f64);
                    if let Some(k) = r.stratum {
                        stratum_fnr[k].push(r.fnr);
                    }
                }
                None => n_empty += 1,
            }
        }
        let strata = fitted
            .strata
            .as_ref()
            .map(|model| {
                stratum_fnr
                    .iter()
                    .enumerate()
                    .map(|(k, fnr)| StratumRow {
                        method: spec.method,
                        alpha: spec.alpha,
                        trial,
                        stratum: k,
                        n_cal: model.per_stratum_n()[k],
                        n_test: fnr.len(),
                        mean_fnr: mean(fnr),
                    })
                    .collect()
            })
            .unwrap_or_default();
        out.push(MethodTrial {
            row: TrialRow {
                method: spec.method,
                alpha: spec.alpha,
                trial,
                marginal_coverage: mean(&coverages),
                coverage_gap: mean(&gaps),
                mean_set_size: mean(&sizes),
                n_test: coverages.len(),
                n_empty_masks: n_empty,
            },
            coverages,
            gaps,
            strata,
        });
    }
    Ok(out)
}

/// Repeats split → fit → evaluate `config.n_trials` times for every spec.
pub fn run_trials(
    dataset: &[Sample],
    specs: &[MethodSpec],
    config: &TrialConfig,
) -> Result<TrialOutcome> {
    if config.n_trials == 0 {
        return Err(Error::Parameter("n_trials must be at least 1".into()));
    }
    if specs.is_empty() {
        return Err(Error::Parameter("no methods requested".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    if specs.iter().any(|s| s.method.uses_curve()) && config.val_frac <= 0.0 {
        return Err(Error::Parameter(
            "CCRA and CCRA-S need a validation split (val_frac > 0)".into(),
        ));
    }
    // Fail early on impossible splits.
    split_indices(dataset.len(), config.val_frac, config.cal_frac, config.seed)?;

    let needs_raw_cra = specs
        .iter()
        .any(|s| s.method.score_kind() == ScoreKind::Cra && !s.method.uses_curve());
    let shared = SharedScores {
        crc: if specs.iter().any(|s| s.method == MethodKind::Crc) {
            dataset
                .par_iter()
                .map(|s| prepare_image(ScoreKind::Crc, None, &s.probs))
                .collect()
        } else {
            Vec::new()
        },
        cra: needs_raw_cra.then(|| {
            dataset
                .par_iter()
                .map(|s| prepare_image(ScoreKind::Cra, None, &s.probs))
                .collect()
        }),
    };

    let trials: Vec<Vec<MethodTrial>> = (0..config.n_trials)
        .into_par_iter()
        .map(|t| run_one_trial(dataset, specs, &shared, config, t))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(config.n_trials * specs.len());
    let mut stratum_rows = Vec::new();
    let mut pooled_cov: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    let mut pooled_gap: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    for trial in trials {
        for (m, mt) in trial.into_iter().enumerate() {
            pooled_cov[m].extend(&mt.coverages);
            pooled_gap[m].extend(&mt.gaps);
            rows.push(mt.row);
            stratum_rows.extend(mt.strata);
        }
    }

    let n = specs.len();
    let reports = specs
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let mine: Vec<&TrialRow> = rows.iter().skip(m).step_by(n).collect();
            let cov: Vec<f64> = mine.iter().map(|r| r.marginal_coverage).filter(|v| !v.is_nan()).collect();
            let gap: Vec<f64> = mine.iter().map(|r| r.coverage_gap).filter(|v| !v.is_nan()).collect();
            let size: Vec<f64> = mine.iter().map(|r| r.mean_set_size).filter(|v| !v.is_nan()).collect();
            TrialReport {
                method: spec.method,
                alpha: spec.alpha,
                n_trials: mine.len(),
                n_test: mine.iter().map(|r| r.n_test).sum(),
                n_empty_masks: mine.iter().map(|r| r.n_empty_masks).sum(),
                marginal_coverage: mean(&cov),
                coverage_sd_samples: std_dev(&pooled_cov[m]),
                coverage_sd_trials: std_dev(&cov),
                coverage_gap: mean(&gap),
                gap_sd_samples: std_dev(&pooled_gap[m]),
                gap_sd_trials: std_dev(&gap),
                mean_set_size: mean(&size),
            }
        })
        .collect();

    let mut stratum_reports = Vec::new();
    for spec in specs.iter().filter(|s| s.method.is_stratified()) {
        let mine: Vec<&StratumRow> = stratum_rows
            .iter()
            .filter(|r| r.method == spec.method && r.alpha == spec.alpha)
            .collect();
        let k_max = mine.iter().map(|r| r.stratum + 1).max().unwrap_or(0);
        for k in 0..k_max {
            let in_k: Vec<&&StratumRow> = mine.iter().filter(|r| r.stratum == k && r.n_test > 0).collect();
            let fnr: Vec<f64> = in_k.iter().map(|r| r.mean_fnr).collect();
            stratum_reports.push(StratumReport {
                method: spec.method,
                alpha: spec.alpha,
                stratum: k,
                n_trials: in_k.len(),
                n_test: in_k.iter().map(|r| r.n_test).sum(),
                min_n_cal: in_k.iter().map(|r| r.n_cal).min().unwrap_or(0),
                mean_fnr: mean(&fnr),
                se_fnr: std_dev(&fnr) / (fnr.len().max(1) as f64).sqrt(),
            });
        }
    }

    Ok(TrialOutcome {
        specs: specs.to_vec(),
        rows,
        stratum_rows,
        reports,
        stratum_reports,
        coverages: pooled_cov,
    })
}

/// Runs every method at every level; specs are ordered level-major.
pub fn sweep_alpha(
    dataset: &[Sample],
    methods: &[MethodSpec],
    alphas: &[f64],
    config: &TrialConfig,
) -> Result<TrialOutcome> {
    if alphas.is_empty() {
        return Err(Error::Parameter("alpha list is empty".into()));
    }
    let specs: Vec<MethodSpec> = alphas
        .iter()
        .flat_map(|&alpha| methods.iter().map(move |m| MethodSpec { alpha, ..*m }))
        .collect();
    run_trials(dataset, &specs, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub density: f64,
}

/// Density histogram of values in `[0, 1]` over `n_bins` equal-width bins;
/// the last bin is closed.
pub fn coverage_histogram(values: &[f64], n_bins: usize) -> Vec<HistogramBin> {
    let n_bins = n_bins.max(1);
    let width = 1.0 / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let b = ((v / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let total = values.len().max(1) as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| HistogramBin {
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            density: c as f64 / (total * width),
        })
        .collect()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: std::io::BufWriter<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trials_csv(path: impl AsRef<Path>, rows: &[TrialRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "method,alpha,trial,marginal_coverage,coverage_gap,mean_set_size,n_test,n_empty_masks").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.3},{},{}",
            r.method, r.alpha, r.trial, r.marginal_coverage, r.coverage_gap, r.mean_set_size, r.n_test, r.n_empty_masks
        )
        .map_err(io)?;
    }
    finish(path, w)
}

pub fn write_aggregate_csv(path: impl AsRef<Path>, reports: &[TrialReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "method,alpha,n_trials,n_test,n_empty_masks,marginal_coverage,coverage_sd_samples,coverage_sd_trials,coverage_gap,gap_sd_samples,gap_sd_trials,mean_set_size"
    )
    .map_err(io)?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.method,
            r.alpha,
            r.n_trials,
            r.n_test,
            r.n_empty_masks,
            r.marginal_coverage,
            r.coverage_sd_samples,
            r.coverage_sd_trials,
            r.coverage_gap,
            r.gap_sd_samples,
            r.gap_sd_trials,
            r.mean_set_size
        )
        .map_err(io)?;
    }
    finish(path, w)
}

pub fn write_strata_csv(path: impl AsRef<Path>, reports: &[StratumReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "method,alpha,stratum,n_trials,n_test,min_n_cal,mean_fnr,se_fnr").map_err(io)?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6},{:.6}",
            r.method, r.alpha, r.stratum, r.n_trials, r.n_test, r.min_n_cal, r.mean_fnr, r.se_fnr
        )
        .map_err(io)?;
    }
    finish(path, w)
}

/// Coverage histograms for every spec: `method,alpha,bin_lower,bin_upper,density`.
pub fn write_histogram_csv(path: impl AsRef<Path>, outcome: &TrialOutcome, n_bins: usize) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "method,alpha,bin_lower,bin_upper,density").map_err(io)?;
    for (spec, cov) in outcome.specs.iter().zip(&outcome.coverages) {
        for bin in coverage_histogram(cov, n_bins) {
            writeln!(
                w,
                "{},{},{:.4},{:.4},{:.6}",
                spec.method, spec.alpha, bin.lower, bin.upper, bin.density
            )
            .map_err(io)?;
        }
    }
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, to_samples, Miscalibration, SynthConfig};

    fn set(members: &[bool]) -> PredictionSet {
        PredictionSet::new(1, members.len(), members.to_vec())
    }

    fn mask(values: &[u8]) -> GroundTruthMask {
        GroundTruthMask::new(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn exact_set_has_full_coverage() {
        let r = evaluate_image("a", &set(&[true, false, true]), &mask(&[1, 0, 1]), None)
            .unwrap()
            .unwrap();
        assert_eq!((r.coverage, r.fnr, r.set_size), (1.0, 0.0, 2));
    }

    #[test]
    fn half_coverage() {
        let r = evaluate_image(
            "a",
            &set(&[true, true, false, false, true]),
            &mask(&[1, 1, 1, 1, 0]),
            None,
        )
        .unwrap()
        .unwrap();
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.fnr + r.coverage, 1.0);
    }

    #[test]
    fn full_set_and_empty_mask() {
        let r = evaluate_image("a", &set(&[true; 4]), &mask(&[0, 1, 1, 0]), None).unwrap().unwrap();
        assert_eq!(r.coverage, 1.0);
        assert!(evaluate_image("a", &set(&[true; 2]), &mask(&[0, 0]), None).unwrap().is_none());
        assert!(evaluate_image("a", &set(&[true; 3]), &mask(&[0, 0]), None).is_err());
    }

    #[test]
    fn histogram_integrates_to_one() {
        let bins = coverage_histogram(&[0.0, 0.5, 0.95, 1.0, 1.0], 10);
        let area: f64 = bins.iter().map(|b| b.density * (b.upper - b.lower)).sum();
        assert!((area - 1.0).abs() < 1e-12);
        assert_eq!(bins[9].density, 6.0);
    }

    fn small_dataset(seed: u64) -> Vec<Sample> {
        to_samples(
            &generate(&SynthConfig {
                n_images: 120,
                height: 12,
                width: 12,
                miscalibration: Miscalibration::Sharpen(2.0),
                noise_sd: 0.5,
                seed,
                ..SynthConfig::default()
            })
            .unwrap(),
        )
    }

    fn all_methods(alpha: f64) -> Vec<MethodSpec> {
        MethodKind::ALL
            .iter()
            .map(|&m| MethodSpec {
                n_bins: 50,
                min_stratum_size: 5,
                ..MethodSpec::new(m, alpha)
            })
            .collect()
    }

    #[test]
    fn trials_are_reproducible_and_consistent() {
        let data = small_dataset(3);
        let cfg = TrialConfig { n_trials: 3, val_frac: 0.2, cal_frac: 0.5, seed: 7 };
        let a = run_trials(&data, &all_methods(0.1), &cfg).unwrap();
        let b = run_trials(&data, &all_methods(0.1), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 12);
        assert_eq!(a.reports.len(), 4);
        for r in &a.reports {
            assert!(r.coverage_gap + 1e-12 >= (r.marginal_coverage - 0.9).abs());
        }
        for row in &a.rows {
            assert_eq!(row.n_test + row.n_empty_masks, 120 - 24 - 60);
        }
        let strata: usize = a.stratum_rows.iter().filter(|r| r.trial == 0).map(|r| r.n_test).sum();
        assert_eq!(strata, a.rows_for(3)[0].n_test);
    }

    #[test]
    fn singleton_sweep_equals_run_trials() {
        let data = small_dataset(4);
        let cfg = TrialConfig { n_trials: 2, val_frac: 0.2, cal_frac: 0.5, seed: 1 };
        let sweep = sweep_alpha(&data, &all_methods(0.5), &[0.2], &cfg).unwrap();
        let direct = run_trials(&data, &all_methods(0.2), &cfg).unwrap();
        assert_eq!(sweep, direct);
        let three = sweep_alpha(&data, &all_methods(0.5), &[0.05, 0.1, 0.2], &cfg).unwrap();
        assert_eq!(three.reports.len(), 12);
    }

    #[test]
    fn rejects_bad_configs() {
        let data = small_dataset(5);
        let cfg = TrialConfig { n_trials: 0, val_frac: 0.2, cal_frac: 0.5, seed: 1 };
        assert!(run_trials(&data, &all_methods(0.1), &cfg).is_err());
        let cfg = TrialConfig { n_trials: 1, val_frac: 0.0, cal_frac: 0.5, seed: 1 };
        assert!(run_trials(&data, &all_methods(0.1), &cfg).is_err());
        let cfg = TrialConfig { n_trials: 1, val_frac: 0.2, cal_frac: 0.5, seed: 1 };
        assert!(run_trials(&data[..2], &all_methods(0.1), &cfg).is_err());
    }
}
