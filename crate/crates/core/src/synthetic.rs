//! Synthetic segmentation data with known pixel probabilities.
//!
//! Each image holds one or more soft disc-shaped objects. The true
//! inclusion probability falls off logistically with distance from a blob
//! centre, the ground-truth mask is one Bernoulli draw per pixel, and the
//! model probabilities seen by the methods are a logit-space distortion of
//! the truth. Images are i.i.d., so every exchangeability-based guarantee
//! applies exactly.
//!
//! Image `i` draws from ChaCha8 stream `i` under the master seed, so
//! generation order does not matter.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset_io::{
    write_mask, write_probability_map, DatasetManifest, GroundTruthMask, ManifestRecord,
    ProbabilityMap, Sample,
};
use crate::error::{Error, Result};

/// Probabilities are kept inside `[PROB_CLIP, 1 − PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Miscalibration {
    None,
    /// Multiply logits by `γ` (over-confident model when `γ > 1`).
    Sharpen(f64),
    /// Divide logits by `γ`.
    Flatten(f64),
}

impl Miscalibration {
    fn logit_scale(self) -> f64 {
        match self {
            Miscalibration::None => 1.0,
            Miscalibration::Sharpen(g) => g,
            Miscalibration::Flatten(g) => 1.0 / g,
        }
    }
}

impl fmt::Display for Miscalibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Miscalibration::None => f.write_str("none"),
            Miscalibration::Sharpen(g) => write!(f, "sharpen:{g}"),
            Miscalibration::Flatten(g) => write!(f, "flatten:{g}"),
        }
    }
}

impl FromStr for Miscalibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(Miscalibration::None);
        }
        let (mode, gamma) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("bad miscalibration '{s}' (none, sharpen:G, flatten:G)")))?;
        let gamma: f64 = gamma
            .parse()
            .map_err(|_| Error::Parameter(format!("bad exponent in '{s}'")))?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("exponent in '{s}' must be positive")));
        }
        match mode {
            "sharpen" => Ok(Miscalibration::Sharpen(gamma)),
            "flatten" => Ok(Miscalibration::Flatten(gamma)),
            _ => Err(Error::Parameter(format!("unknown miscalibration mode '{mode}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    /// Blob area as a fraction of the image, drawn uniformly per blob.
    pub object_scale_range: (f64, f64),
    pub miscalibration: Miscalibration,
    /// Standard deviation of per-pixel Gaussian noise added to the logit.
    pub noise_sd: f64,
    pub seed: u64,
    pub n_blobs: usize,
    /// Logistic edge width as a fraction of the blob radius.
    pub edge_range: (f64, f64),
    /// Probability at a blob centre.
    pub peak_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 100,
            height: 32,
            width: 32,
            object_scale_range: (0.01, 0.3),
            miscalibration: Miscalibration::None,
            noise_sd: 0.0,
            seed: 0,
            n_blobs: 1,
            edge_range: (0.1, 0.6),
            peak_range: (0.6, 0.99),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.height == 0 || self.width == 0 {
            return bad(format!("image size {}x{} has a zero side", self.height, self.width));
        }
        let (lo, hi) = self.object_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("object scale range ({lo}, {hi}) must satisfy 0 < min <= max <= 1"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd = {} must be >= 0", self.noise_sd));
        }
        if self.n_blobs == 0 {
            return bad("need at least one blob per image".into());
        }
        let (elo, ehi) = self.edge_range;
        if !(elo > 0.0 && elo <= ehi) {
            return bad(format!("edge range ({elo}, {ehi}) must be positive and ordered"));
        }
        let (plo, phi) = self.peak_range;
        if !(plo > 0.0 && plo <= phi && phi <= 1.0) {
            return bad(format!("peak range ({plo}, {phi}) must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    /// The real `P(j ∈ Y)`.
    pub true_probs: ProbabilityMap,
    /// Distorted probabilities handed to the methods.
    pub model_probs: ProbabilityMap,
    pub mask: GroundTruthMask,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

pub fn generate_one(config: &SynthConfig, index: usize) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let (h, w) = (config.height, config.width);

    struct Blob {
        cy: f64,
        cx: f64,
        radius: f64,
        edge: f64,
        peak: f64,
    }
    let blobs: Vec<Blob> = (0..config.n_blobs)
        .map(|_| {
            let (lo, hi) = config.object_scale_range;
            let area = rng.random_range(lo..=hi) * (h * w) as f64;
            let radius = (area / std::f64::consts::PI).sqrt();
            let (elo, ehi) = config.edge_range;
            let (plo, phi) = config.peak_range;
            Blob {
                cy: rng.random_range(0.0..h as f64),
                cx: rng.random_range(0.0..w as f64),
                radius,
                edge: (rng.random_range(elo..=ehi) * radius).max(0.25),
                peak: rng.random_range(plo..=phi),
            }
        })
        .collect();

    let mut truth = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let miss: f64 = blobs
                .iter()
                .map(|b| {
                    let d = ((py - b.cy).powi(2) + (px - b.cx).powi(2)).sqrt();
                    1.0 - b.peak * sigmoid((b.radius - d) / b.edge)
                })
                .product();
            truth.push(clip(1.0 - miss) as f32);
        }
    }

    let mask: Vec<u8> = truth
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < f64::from(p)))
        .collect();

    let identity = config.noise_sd == 0.0 && config.miscalibration.logit_scale() == 1.0;
    let model: Vec<f32> = if identity {
        truth.clone()
    } else {
        let scale = config.miscalibration.logit_scale();
        let noise = Normal::new(0.0, config.noise_sd).expect("validated noise_sd");
        truth
            .iter()
            .map(|&p| {
                let z = logit(f64::from(p)) + noise.sample(&mut rng);
                clip(sigmoid(z * scale)) as f32
            })
            .collect()
    };

    SynthSample {
        true_probs: ProbabilityMap::new(h, w, truth).expect("clipped probabilities"),
        model_probs: ProbabilityMap::new(h, w, model).expect("clipped probabilities"),
        mask: GroundTruthMask::new(h, w, mask).expect("binary mask"),
    }
}

/// Generates `config.n_images` i.i.d. images.
pub fn generate(config: &SynthConfig) -> Result<Vec<SynthSample>> {
    config.validate()?;
    Ok((0..config.n_images)
        .into_par_iter()
        .map(|i| generate_one(config, i))
        .collect())
}

pub fn sample_id(index: usize) -> String {
    format!("img{index:05}")
}

/// Model-facing view: model probabilities plus masks, with generated ids.
pub fn to_samples(synth: &[SynthSample]) -> Vec<Sample> {
    synth
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Sample::new(sample_id(i), s.model_probs.clone(), s.mask.clone())
                .expect("generated maps share a shape")
        })
        .collect()
}

/// Writes `<id>_prob.npy`, `<id>_mask.npy` and `manifest.csv` under `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, synth: &[SynthSample]) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(synth.len());
    for (i, s) in synth.iter().enumerate() {
        let id = sample_id(i);
        let prob_path = format!("{id}_prob.npy");
        let mask_path = format!("{id}_mask.npy");
        write_probability_map(dir.join(&prob_path), &s.model_probs)?;
        write_mask(dir.join(&mask_path), &s.mask)?;
        records.push(ManifestRecord {
            sample_id: id,
            prob_path: prob_path.into(),
            mask_path: mask_path.into(),
        });
    }
    let manifest = DatasetManifest::new(dir, records)?;
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob_calibration::{cross_entropy, fit_isotonic, pixel_pairs};

    fn config(n: usize) -> SynthConfig {
        SynthConfig {
            n_images: n,
            height: 16,
            width: 16,
            seed: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn identity_distortion_keeps_truth() {
        for s in generate(&config(20)).unwrap() {
            assert_eq!(s.model_probs, s.true_probs);
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let cfg = SynthConfig {
            noise_sd: 0.5,
            miscalibration: Miscalibration::Sharpen(2.0),
            ..config(12)
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a[7], generate_one(&cfg, 7));
        let other = generate(&SynthConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a[0], other[0]);
        assert_ne!(a[1], other[0]);
    }

    #[test]
    fn parses_miscalibration() {
        assert_eq!("none".parse::<Miscalibration>().unwrap(), Miscalibration::None);
        assert_eq!("sharpen:2.0".parse::<Miscalibration>().unwrap(), Miscalibration::Sharpen(2.0));
        assert_eq!("flatten:1.5".parse::<Miscalibration>().unwrap(), Miscalibration::Flatten(1.5));
        assert!("sharpen:-1".parse::<Miscalibration>().is_err());
        assert!("blur:2".parse::<Miscalibration>().is_err());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig { height: 0, ..config(1) }).is_err());
        assert!(generate(&SynthConfig { object_scale_range: (0.0, 0.2), ..config(1) }).is_err());
        assert!(generate(&SynthConfig { noise_sd: -1.0, ..config(1) }).is_err());
    }

    #[test]
    fn mask_frequency_matches_truth() {
        // 1000 images of 16x16: per probability decile the empirical mask
        // rate must be within 0.02 of the mean true probability.
        let data = generate(&config(1000)).unwrap();
        let mut sum_p = [0.0f64; 10];
        let mut sum_y = [0.0f64; 10];
        let mut count = [0usize; 10];
        for s in &data {
            for (&p, &y) in s.true_probs.values().iter().zip(s.mask.values()) {
                let b = ((f64::from(p) * 10.0) as usize).min(9);
                sum_p[b] += f64::from(p);
                sum_y[b] += f64::from(y);
                count[b] += 1;
            }
        }
        for b in 0..10 {
            if count[b] < 1000 {
                continue;
            }
            let dev = (sum_y[b] - sum_p[b]).abs() / count[b] as f64;
            assert!(dev < 0.02, "bin {b}: deviation {dev} over {} pixels", count[b]);
        }
    }

    #[test]
    fn isotonic_fit_improves_miscalibrated_probabilities() {
        for mis in [Miscalibration::Sharpen(2.0), Miscalibration::Flatten(2.0)] {
            let cfg = SynthConfig { miscalibration: mis, noise_sd: 0.3, ..config(400) };
            let data = to_samples(&generate(&cfg).unwrap());
            let (fit_part, held_out) = data.split_at(200);
            let curve = fit_isotonic(&pixel_pairs(fit_part), 200).unwrap();
            let held = pixel_pairs(held_out);
            let raw_ce = cross_entropy(|p| p.clamp(1e-6, 1.0 - 1e-6), &held);
            let cal_ce = cross_entropy(|p| curve.evaluate(p), &held);
            assert!(cal_ce < raw_ce, "{mis}: calibrated {cal_ce} vs raw {raw_ce}");
        }
    }

    #[test]
    fn writes_manifest_and_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&config(3)).unwrap();
        let manifest = write_dataset(dir.path(), &data).unwrap();
        assert_eq!(manifest.len(), 3);
        let loaded = DatasetManifest::load(dir.path().join("manifest.csv")).unwrap();
        let samples = loaded.load_all().unwrap();
        assert_eq!(samples, to_samples(&data));
    }
}
