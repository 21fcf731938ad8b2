//! Strata by total predicted mass, each with its own CRA-score threshold.
//!
//! Stratum `k` (0-based) covers masses in `[edge_{k-1}, edge_k)`, the first
//! stratum extends down to 0 and the last is unbounded above. Edges sit at
//! the `k/K` empirical quantiles of calibration masses, averaging the two
//! neighbours when `n·k/K` is an integer.

use std::path::Path;

use crate::dataset_io::GroundTruthMask;
use crate::error::{Error, Result};
use crate::risk_quantile::{collect_weighted_scores, weighted_quantile_threshold};
use crate::scores::ScoreField;

pub const DEFAULT_STRATA: usize = 4;
pub const DEFAULT_MIN_STRATUM_SIZE: usize = 20;

/// Edges at the `1/K, …, (K−1)/K` quantiles of `masses`.
pub fn fit_strata(masses: &[f64], n_strata: usize) -> Result<Vec<f64>> {
    if n_strata == 0 {
        return Err(Error::Parameter("number of strata must be at least 1".into()));
    }
    if n_strata > masses.len() {
        return Err(Error::Parameter(format!(
            "{n_strata} strata requested but only {} calibration images",
            masses.len()
        )));
    }
    if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(Error::Validation(format!("total mass {m} is not a finite non-negative number")));
    }
    let mut sorted = masses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok((1..n_strata)
        .map(|k| {
            let h = (n * k) as f64 / n_strata as f64;
            if (n * k).is_multiple_of(n_strata) {
                let h = h as usize;
                0.5 * (sorted[h - 1] + sorted[h])
            } else {
                sorted[h.ceil() as usize - 1]
            }
        })
        .collect())
}

/// Index of the left-closed interval containing `mass`.
pub fn assign_stratum(edges: &[f64], mass: f64) -> usize {
    edges.partition_point(|&e| e <= mass)
}

/// A calibration image as seen by the stratified fit.
#[derive(Debug, Clone, Copy)]
pub struct StratumInput<'a> {
    pub scores: &'a ScoreField,
    pub mask: &'a GroundTruthMask,
    pub total_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrataModel {
    edges: Vec<f64>,
    per_stratum_tau: Vec<f64>,
    per_stratum_n: Vec<usize>,
    fallback: Vec<bool>,
}

impl StrataModel {
    pub fn from_parts(
        edges: Vec<f64>,
        per_stratum_tau: Vec<f64>,
        per_stratum_n: Vec<usize>,
        fallback: Vec<bool>,
    ) -> Result<Self> {
        let k = edges.len() + 1;
        if per_stratum_tau.len() != k || per_stratum_n.len() != k || fallback.len() != k {
            return Err(Error::Validation(format!(
                "{} edges need {k} thresholds and counts",
                edges.len()
            )));
        }
        if edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Validation("stratum edges must be nondecreasing".into()));
        }
        Ok(Self {
            edges,
            per_stratum_tau,
            per_stratum_n,
            fallback,
        })
    }

    /// Fits edges on the retained calibration images (non-empty masks) and
    /// one threshold per stratum. Strata with fewer than `min_stratum_size`
    /// retained images use `global_tau`.
    pub fn fit(
        images: &[StratumInput<'_>],
        n_strata: usize,
        alpha: f64,
        loss_bound: f64,
        min_stratum_size: usize,
        global_tau: f64,
    ) -> Result<Self> {
        let retained: Vec<&StratumInput<'_>> =
            images.iter().filter(|im| im.mask.positives() > 0).collect();
        let masses: Vec<f64> = retained.iter().map(|im| im.total_mass).collect();
        let edges = fit_strata(&masses, n_strata)?;

        let mut groups: Vec<Vec<&StratumInput<'_>>> = vec![Vec::new(); n_strata];
        for im in retained {
            groups[assign_stratum(&edges, im.total_mass)].push(im);
        }
        let mut per_stratum_tau = Vec::with_capacity(n_strata);
        let mut per_stratum_n = Vec::with_capacity(n_strata);
        let mut fallback = Vec::with_capacity(n_strata);
        for group in &groups {
            per_stratum_n.push(group.len());
            if group.is_empty() || group.len() < min_stratum_size {
                per_stratum_tau.push(global_tau);
                fallback.push(true);
                continue;
            }
            let weighted = collect_weighted_scores(group.iter().map(|im| (im.scores, im.mask)))?;
            let fitted =
                weighted_quantile_threshold(&weighted.samples, weighted.n_images, alpha, loss_bound)?;
            per_stratum_tau.push(fitted.tau);
            fallback.push(false);
        }
        Self::from_parts(edges, per_stratum_tau, per_stratum_n, fallback)
    }

    pub fn n_strata(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn per_stratum_tau(&self) -> &[f64] {
        &self.per_stratum_tau
    }

    pub fn per_stratum_n(&self) -> &[usize] {
        &self.per_stratum_n
    }

    /// Which strata reuse the global threshold.
    pub fn fallback(&self) -> &[bool] {
        &self.fallback
    }

    pub fn assign(&self, total_mass: f64) -> usize {
        assign_stratum(&self.edges, total_mass)
    }

    /// Stratum and its threshold for an image of the given total mass.
    pub fn threshold_for(&self, total_mass: f64) -> (usize, f64) {
        let k = self.assign(total_mass);
        (k, self.per_stratum_tau[k])
    }

    /// Writes `stratum,lower_edge,upper_edge,n,tau` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["stratum", "lower_edge", "upper_edge", "n", "tau"])?;
        for k in 0..self.n_strata() {
            let lower = if k == 0 { 0.0 } else { self.edges[k - 1] };
            let upper = self.edges.get(k).copied().unwrap_or(f64::INFINITY);
            w.write_record([
                k.to_string(),
                lower.to_string(),
                upper.to_string(),
                self.per_stratum_n[k].to_string(),
                self.per_stratum_tau[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a model written by [`write_csv`](Self::write_csv). Fallback flags
    /// are rebuilt from `min_stratum_size` with the same rule as [`fit`](Self::fit).
    pub fn read_csv(path: impl AsRef<Path>, min_stratum_size: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let bad = |msg: String| Error::Model(format!("{}: {msg}", path.display()));
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
            let stratum: usize = field(0).parse().map_err(|_| bad(format!("bad stratum in {rec:?}")))?;
            let upper: f64 = field(2).parse().map_err(|_| bad(format!("bad upper_edge in {rec:?}")))?;
            let n: usize = field(3).parse().map_err(|_| bad(format!("bad n in {rec:?}")))?;
            let tau: f64 = field(4).parse().map_err(|_| bad(format!("bad tau in {rec:?}")))?;
            let fallback = n == 0 || n < min_stratum_size;
            if stratum != rows.len() {
                return Err(bad(format!("strata out of order at row {}", rows.len())));
            }
            rows.push((upper, n, tau, fallback));
        }
        if rows.is_empty() {
            return Err(bad("no strata".into()));
        }
        let edges = rows[..rows.len() - 1].iter().map(|r| r.0).collect();
        Self::from_parts(
            edges,
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.3).collect(),
        )
    }
}
