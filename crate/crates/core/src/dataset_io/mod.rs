//! Probability maps, ground-truth masks and their on-disk representation.
//!
//! Arrays are stored in the v1.0 `.npy` layout (`<f4` for probabilities,
//! `|u1` for masks), datasets are described by a CSV manifest, and
//! [`split_dataset`] produces reproducible validation/calibration/test
//! partitions.

mod manifest;
mod npy;
mod split;

pub use manifest::{DatasetManifest, ManifestRecord};
pub use npy::{
    decode_array, encode_array, read_array, read_mask, read_probability_map, write_array,
    write_mask, write_probability_map, ArrayData,
};
pub use split::{split_dataset, split_ids, split_indices, SplitIndices, SplitSpec};

use crate::error::{Error, Result};

/// Per-pixel inclusion probabilities for one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_shape(height, width, values.len())?;
        if let Some((idx, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::Validation(format!(
                "probability at pixel {idx} is {v}, expected a finite value in [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Sum of all pixel probabilities.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum()
    }

    /// Applies `f` to every pixel, revalidating the result.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Binary per-pixel labels for one image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl GroundTruthMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        check_shape(height, width, values.len())?;
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::Validation(format!(
                "mask value at pixel {idx} is {v}, expected 0 or 1"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn from_bools(height: usize, width: usize, values: &[bool]) -> Result<Self> {
        Self::new(height, width, values.iter().map(|&b| u8::from(b)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn is_positive(&self, pixel: usize) -> bool {
        self.values[pixel] == 1
    }

    /// Number of ground-truth pixels, `|Y|`.
    pub fn positives(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

/// One labelled image: model probabilities plus its ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub probs: ProbabilityMap,
    pub mask: GroundTruthMask,
}

impl Sample {
    pub fn new(id: impl Into<String>, probs: ProbabilityMap, mask: GroundTruthMask) -> Result<Self> {
        let id = id.into();
        if probs.height() != mask.height() || probs.width() != mask.width() {
            return Err(Error::Validation(format!(
                "sample {id}: probability map is {}x{} but mask is {}x{}",
                probs.height(),
                probs.width(),
                mask.height(),
                mask.width()
            )));
        }
        Ok(Self { id, probs, mask })
    }
}

fn check_shape(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Validation(format!(
            "shape {height}x{width} has a zero dimension"
        )));
    }
    if height.checked_mul(width) != Some(len) {
        return Err(Error::Validation(format!(
            "shape {height}x{width} does not match {len} values"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_map_rejects_out_of_range_and_nan() {
        assert!(ProbabilityMap::new(1, 3, vec![0.0, 0.5, 1.0]).is_ok());
        assert!(matches!(
            ProbabilityMap::new(1, 2, vec![0.2, 1.5]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ProbabilityMap::new(1, 1, vec![f32::NAN]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ProbabilityMap::new(0, 4, vec![]),
            Err(Error::Validation(_))
        ));
        assert!(ProbabilityMap::new(2, 2, vec![0.1; 3]).is_err());
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(matches!(
            GroundTruthMask::new(1, 2, vec![1, 2]),
            Err(Error::Validation(_))
        ));
        let m = GroundTruthMask::new(2, 2, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(m.positives(), 3);
    }

    #[test]
    fn sample_requires_matching_shapes() {
        let p = ProbabilityMap::new(2, 2, vec![0.1; 4]).unwrap();
        let m = GroundTruthMask::new(1, 4, vec![0; 4]).unwrap();
        assert!(Sample::new("a", p, m).is_err());
    }
}
