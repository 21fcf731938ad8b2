//! Fit/predict pipelines for CRC, CRA, CCRA and CCRA-S.
//!
//! Every pipeline is split into score preparation ([`prepare_image`]), which
//! depends only on the method family and the optional calibration curve,
//! and threshold fitting ([`fit_prepared`]), which depends on `α`. The
//! trial runner reuses prepared scores across methods and levels; [`fit`]
//! and [`predict`] compose the same pieces.

mod store;

use std::fmt;
use std::str::FromStr;

use crate::dataset_io::{GroundTruthMask, ProbabilityMap, Sample};
use crate::error::{Error, Result};
use crate::prob_calibration::{
    apply_calibration, fit_isotonic_with_epsilon, pixel_pairs, CalibrationCurve,
    DEFAULT_CLIP_EPSILON, DEFAULT_N_BINS,
};
use crate::risk_quantile::{collect_weighted_scores, weighted_quantile_threshold, DEFAULT_LOSS_BOUND};
use crate::scores::{cra_score, crc_score, threshold_set, PredictionSet, ScoreField, ScoreKind};
use crate::stratification::{StrataModel, StratumInput, DEFAULT_MIN_STRATUM_SIZE, DEFAULT_STRATA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    Crc,
    Cra,
    Ccra,
    CcraS,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [MethodKind::Crc, MethodKind::Cra, MethodKind::Ccra, MethodKind::CcraS];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Crc => "crc",
            MethodKind::Cra => "cra",
            MethodKind::Ccra => "ccra",
            MethodKind::CcraS => "ccra-s",
        }
    }

    pub fn score_kind(self) -> ScoreKind {
        match self {
            MethodKind::Crc => ScoreKind::Crc,
            _ => ScoreKind::Cra,
        }
    }

    pub fn uses_curve(self) -> bool {
        matches!(self, MethodKind::Ccra | MethodKind::CcraS)
    }

    pub fn is_stratified(self) -> bool {
        self == MethodKind::CcraS
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "crc" => Ok(MethodKind::Crc),
            "cra" => Ok(MethodKind::Cra),
            "ccra" => Ok(MethodKind::Ccra),
            "ccra-s" | "ccras" => Ok(MethodKind::CcraS),
            other => Err(Error::Parameter(format!(
                "unknown method '{other}' (expected crc, cra, ccra or ccra-s)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub method: MethodKind,
    /// Target expected FNR.
    pub alpha: f64,
    /// Upper bound `B` of the per-image loss.
    pub loss_bound: f64,
    /// Number of strata `K` (CCRA-S).
    pub n_strata: usize,
    /// Equal-count bins before isotonic fitting (CCRA, CCRA-S).
    pub n_bins: usize,
    /// Strata with fewer retained calibration images use the global threshold.
    pub min_stratum_size: usize,
    pub clip_epsilon: f64,
}

impl MethodSpec {
    pub fn new(method: MethodKind, alpha: f64) -> Self {
        Self {
            method,
            alpha,
            loss_bound: DEFAULT_LOSS_BOUND,
            n_strata: DEFAULT_STRATA,
            n_bins: DEFAULT_N_BINS,
            min_stratum_size: DEFAULT_MIN_STRATUM_SIZE,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.loss_bound >= 0.0 && self.loss_bound.is_finite()) {
            return Err(Error::Parameter(format!("loss bound = {} must be >= 0", self.loss_bound)));
        }
        if self.n_strata == 0 {
            return Err(Error::Parameter("K must be at least 1".into()));
        }
        if self.n_bins == 0 {
            return Err(Error::Parameter("n_bins must be at least 1".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return Err(Error::Parameter(format!(
                "clip epsilon = {} must lie in (0, 0.5)",
                self.clip_epsilon
            )));
        }
        Ok(())
    }
}

/// Everything needed to form prediction sets at test time.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedMethod {
    pub spec: MethodSpec,
    /// Global threshold; for CCRA-S it is the fallback for small strata.
    pub tau: f64,
    pub curve: Option<CalibrationCurve>,
    pub strata: Option<StrataModel>,
    /// Calibration images used (non-empty masks).
    pub n_cal: usize,
    /// Calibration images skipped because their mask was empty.
    pub n_excluded: usize,
}

/// Scores of one image under a method family, plus the mass used for
/// stratification.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub scores: ScoreField,
    /// Total (calibrated, when a curve is used) probability mass.
    pub total_mass: f64,
    /// Zero total mass under a CRA-family score. Such images get all-one
    /// scores, so every pixel is kept at any threshold.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub set: PredictionSet,
    pub stratum: Option<usize>,
    pub degenerate: bool,
}

/// Fits the isotonic curve on validation pixels.
pub fn fit_curve(spec: &MethodSpec, val: &[Sample]) -> Result<CalibrationCurve> {
    if val.is_empty() {
        return Err(Error::Calibration(format!(
            "{} needs a non-empty validation set for probability calibration",
            spec.method
        )));
    }
    fit_isotonic_with_epsilon(&pixel_pairs(val), spec.n_bins, spec.clip_epsilon)
}

pub fn prepare_image(
    kind: ScoreKind,
    curve: Option<&CalibrationCurve>,
    probs: &ProbabilityMap,
) -> PreparedImage {
    let calibrated;
    let probs = match curve {
        Some(c) => {
            calibrated = apply_calibration(c, probs);
            &calibrated
        }
        None => probs,
    };
    let total_mass = probs.total_mass();
    match kind {
        ScoreKind::Crc => PreparedImage {
            scores: crc_score(probs),
            total_mass,
            degenerate: false,
        },
        ScoreKind::Cra => match cra_score(probs) {
            Ok(scores) => PreparedImage {
                scores,
                total_mass,
                degenerate: false,
            },
            Err(_) => PreparedImage {
                scores: ScoreField::from_values(
                    probs.height(),
                    probs.width(),
                    vec![1.0; probs.len()],
                    ScoreKind::Cra,
                )
                .expect("shape taken from a valid map"),
                total_mass,
                degenerate: true,
            },
        },
    }
}

/// Threshold fitting on prepared calibration images.
pub fn fit_prepared(
    spec: &MethodSpec,
    curve: Option<CalibrationCurve>,
    cal: &[(&PreparedImage, &GroundTruthMask)],
) -> Result<FittedMethod> {
    spec.validate()?;
    if spec.method.uses_curve() != curve.is_some() {
        return Err(Error::Calibration(format!(
            "{} {} a calibration curve",
            spec.method,
            if spec.method.uses_curve() { "requires" } else { "does not take" }
        )));
    }
    if cal.is_empty() {
        return Err(Error::Calibration("calibration set is empty".into()));
    }
    let weighted = collect_weighted_scores(cal.iter().map(|(p, m)| (&p.scores, *m)))?;
    let global = weighted_quantile_threshold(&weighted.samples, weighted.n_images, spec.alpha, spec.loss_bound)?;

    let strata = if spec.method.is_stratified() {
        let inputs: Vec<StratumInput<'_>> = cal
            .iter()
            .map(|(p, m)| StratumInput {
                scores: &p.scores,
                mask: m,
                total_mass: p.total_mass,
            })
            .collect();
        Some(StrataModel::fit(
            &inputs,
            spec.n_strata,
            spec.alpha,
            spec.loss_bound,
            spec.min_stratum_size,
            global.tau,
        )?)
    } else {
        None
    };

    Ok(FittedMethod {
        spec: *spec,
        tau: global.tau,
        curve,
        strata,
        n_cal: weighted.n_images,
        n_excluded: weighted.excluded.len(),
    })
}

/// Fits `spec`: the curve on `val` (CCRA family only), thresholds on `cal`.
pub fn fit(spec: &MethodSpec, val: &[Sample], cal: &[Sample]) -> Result<FittedMethod> {
    spec.validate()?;
    let curve = if spec.method.uses_curve() {
        Some(fit_curve(spec, val)?)
    } else {
        None
    };
    let prepared: Vec<PreparedImage> = cal
        .iter()
        .map(|s| prepare_image(spec.method.score_kind(), curve.as_ref(), &s.probs))
        .collect();
    let pairs: Vec<_> = prepared.iter().zip(cal).map(|(p, s)| (p, &s.mask)).collect();
    fit_prepared(spec, curve, &pairs)
}

impl FittedMethod {
    pub fn prepare(&self, probs: &ProbabilityMap) -> PreparedImage {
        prepare_image(self.spec.method.score_kind(), self.curve.as_ref(), probs)
    }

    /// Threshold and stratum applied to a prepared image.
    pub fn threshold_for(&self, image: &PreparedImage) -> (f64, Option<usize>) {
        match &self.strata {
            Some(strata) => {
                let (k, tau) = strata.threshold_for(image.total_mass);
                (tau, Some(k))
            }
            None => (self.tau, None),
        }
    }

    pub fn predict_prepared(&self, image: &PreparedImage) -> Prediction {
        let (tau, stratum) = self.threshold_for(image);
        let set = if image.degenerate {
            PredictionSet::full(image.scores.height(), image.scores.width())
        } else {
            threshold_set(&image.scores, tau)
        };
        Prediction {
            set,
            stratum,
            degenerate: image.degenerate,
        }
    }
}

pub fn predict(fitted: &FittedMethod, probs: &ProbabilityMap) -> Prediction {
    fitted.predict_prepared(&fitted.prepare(probs))
}
