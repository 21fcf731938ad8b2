//! Pixel conformity scores and prediction-set construction.
//!
//! Two scores are supported. The CRC score is the raw probability. The
//! CRA score of pixel `j` is the share of the image's total probability
//! mass held by pixels whose probability is at most `p_j`:
//!
//! ```text
//! s_j = Σ_{j'} p_{j'} · 1{p_{j'} ≤ p_j} / Σ_{j'} p_{j'}
//! ```
//!
//! Tied probabilities share one score. The adaptive set of [`adaptive_set`]
//! (fewest pixels, whole tie groups, reaching `(1 − α′)` of the mass) is
//! exactly `{j : s_j > α′}`; note that it is *not* `{j : s_j ≥ 1 − α′}`.

use crate::dataset_io::{GroundTruthMask, ProbabilityMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Crc,
    Cra,
}

/// Per-pixel conformity scores in `[0, 1]`; larger means more likely in the set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    height: usize,
    width: usize,
    values: Vec<f64>,
    kind: ScoreKind,
}

impl ScoreField {
    /// Wraps precomputed scores. Values must be finite and in `[0, 1]`.
    pub fn from_values(
        height: usize,
        width: usize,
        values: Vec<f64>,
        kind: ScoreKind,
    ) -> Result<Self> {
        if height == 0 || width == 0 || height * width != values.len() {
            return Err(Error::Validation(format!(
                "score shape {height}x{width} does not match {} values",
                values.len()
            )));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::Validation(format!("score {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
            kind,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pixels selected for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    height: usize,
    width: usize,
    members: Vec<bool>,
}

impl PredictionSet {
    pub fn new(height: usize, width: usize, members: Vec<bool>) -> Self {
        assert_eq!(height * width, members.len(), "prediction set shape mismatch");
        Self {
            height,
            width,
            members,
        }
    }

    /// Every pixel included.
    pub fn full(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![true; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn contains(&self, pixel: usize) -> bool {
        self.members[pixel]
    }

    /// Number of pixels in the set.
    pub fn size(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        self.members.len() == other.members.len()
            && self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }

    pub fn to_mask(&self) -> GroundTruthMask {
        GroundTruthMask::from_bools(self.height, self.width, &self.members)
            .expect("prediction set has a valid shape")
    }
}

/// CRC score: the probability itself.
pub fn crc_score(probs: &ProbabilityMap) -> ScoreField {
    ScoreField {
        height: probs.height(),
        width: probs.width(),
        values: probs.values().iter().map(|&p| f64::from(p)).collect(),
        kind: ScoreKind::Crc,
    }
}

/// CRA score: normalized mass of all pixels with probability `≤ p_j`.
///
/// One stable ascending sort and a single cumulative pass. The total is the
/// final cumulative sum, so the top tie group scores exactly 1.
pub fn cra_score(probs: &ProbabilityMap) -> Result<ScoreField> {
    let p = probs.values();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));

    let mut cumulative = Vec::with_capacity(p.len());
    let mut running = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let value = p[order[start]];
        let mut end = start;
        while end < order.len() && p[order[end]] == value {
            running += f64::from(value);
            end += 1;
        }
        cumulative.push((start, end, running));
        start = end;
    }

    let total = running;
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let mut values = vec![0.0; p.len()];
    for (start, end, cum) in cumulative {
        let score = cum / total;
        for &pixel in &order[start..end] {
            values[pixel] = score;
        }
    }
    Ok(ScoreField {
        height: probs.height(),
        width: probs.width(),
        values,
        kind: ScoreKind::Cra,
    })
}

/// `{j : score_j ≥ tau}`.
pub fn threshold_set(scores: &ScoreField, tau: f64) -> PredictionSet {
    PredictionSet::new(
        scores.height,
        scores.width,
        scores.values.iter().map(|&s| s >= tau).collect(),
    )
}

/// Smallest set of pixels, added in descending probability with whole tie
/// groups, whose mass reaches `(1 − alpha_prime)` of the image total.
pub fn adaptive_set(probs: &ProbabilityMap, alpha_prime: f64) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&alpha_prime) {
        return Err(Error::Parameter(format!(
            "alpha_prime = {alpha_prime} must lie in [0, 1]"
        )));
    }
    let p = probs.values();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));

    let total: f64 = order.iter().map(|&j| f64::from(p[j])).sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let target = (1.0 - alpha_prime) * total;

    let mut members = vec![false; p.len()];
    let mut captured = 0.0f64;
    let mut start = 0;
    while start < order.len() && captured < target {
        let value = p[order[start]];
        while start < order.len() && p[order[start]] == value {
            members[order[start]] = true;
            captured += f64::from(value);
            start += 1;
        }
    }
    Ok(PredictionSet::new(probs.height(), probs.width(), members))
}
