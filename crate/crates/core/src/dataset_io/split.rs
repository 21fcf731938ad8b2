use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetManifest;
use crate::error::{Error, Result};

/// Disjoint validation / calibration / test id lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub val_ids: Vec<String>,
    pub cal_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Index form of a split, used internally by the trial runner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub val: Vec<usize>,
    pub cal: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with a seeded stream and cuts it into
/// `round(val_frac·n)` validation, `round(cal_frac·n)` calibration and the
/// remaining test indices.
pub fn split_indices(n: usize, val_frac: f64, cal_frac: f64, seed: u64) -> Result<SplitIndices> {
    for (name, f) in [("val_frac", val_frac), ("cal_frac", cal_frac)] {
        if !(f.is_finite() && (0.0..1.0).contains(&f)) {
            return Err(Error::Parameter(format!("{name} = {f} must lie in [0, 1)")));
        }
    }
    if val_frac + cal_frac >= 1.0 {
        return Err(Error::Parameter(format!(
            "val_frac + cal_frac = {} must be below 1",
            val_frac + cal_frac
        )));
    }
    let n_val = (val_frac * n as f64).round() as usize;
    let n_cal = (cal_frac * n as f64).round() as usize;
    let short = |detail: &str| Error::Split {
        available: n,
        detail: detail.to_string(),
    };
    if val_frac > 0.0 && n_val == 0 {
        return Err(short("validation split is empty"));
    }
    if cal_frac > 0.0 && n_cal == 0 {
        return Err(short("calibration split is empty"));
    }
    if n_val + n_cal >= n {
        return Err(short("test split is empty"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_val + n_cal);
    let cal = order.split_off(n_val);
    Ok(SplitIndices {
        val: order,
        cal,
        test,
    })
}

pub fn split_ids(ids: &[String], val_frac: f64, cal_frac: f64, seed: u64) -> Result<SplitSpec> {
    let idx = split_indices(ids.len(), val_frac, cal_frac, seed)?;
    let pick = |v: &[usize]| v.iter().map(|&i| ids[i].clone()).collect();
    Ok(SplitSpec {
        val_ids: pick(&idx.val),
        cal_ids: pick(&idx.cal),
        test_ids: pick(&idx.test),
        seed,
    })
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SplitRow {
    sample_id: String,
    part: String,
}

impl SplitSpec {
    /// Writes `sample_id,part` rows with parts `val`, `cal` and `test`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for (part, ids) in [("val", &self.val_ids), ("cal", &self.cal_ids), ("test", &self.test_ids)] {
            for id in ids {
                w.serialize(SplitRow {
                    sample_id: id.clone(),
                    part: part.to_string(),
                })?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a split written by [`SplitSpec::write_csv`]; the seed is not
    /// stored and comes back as 0.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut spec = SplitSpec {
            val_ids: Vec::new(),
            cal_ids: Vec::new(),
            test_ids: Vec::new(),
            seed: 0,
        };
        for row in csv::Reader::from_path(path.as_ref())?.deserialize() {
            let row: SplitRow = row?;
            match row.part.as_str() {
                "val" => spec.val_ids.push(row.sample_id),
                "cal" => spec.cal_ids.push(row.sample_id),
                "test" => spec.test_ids.push(row.sample_id),
                other => return Err(Error::Manifest(format!("unknown split part '{other}'"))),
            }
        }
        Ok(spec)
    }
}

pub fn split_dataset(
    manifest: &DatasetManifest,
    val_frac: f64,
    cal_frac: f64,
    seed: u64,
) -> Result<SplitSpec> {
    split_ids(&manifest.ids(), val_frac, cal_frac, seed)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn seventy_thirty_split() {
        let s = split_ids(&ids(10), 0.0, 0.7, 1).unwrap();
        assert_eq!((s.val_ids.len(), s.cal_ids.len(), s.test_ids.len()), (0, 7, 3));
    }

    #[test]
    fn split_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.csv");
        let s = split_ids(&ids(10), 0.2, 0.5, 1).unwrap();
        s.write_csv(&path).unwrap();
        assert_eq!(SplitSpec::read_csv(&path).unwrap(), SplitSpec { seed: 0, ..s });
    }

    #[test]
    fn three_way_split() {
        let s = split_ids(&ids(10), 0.2, 0.5, 1).unwrap();
        assert_eq!((s.val_ids.len(), s.cal_ids.len(), s.test_ids.len()), (2, 5, 3));
    }

    #[test]
    fn same_seed_same_split() {
        assert_eq!(
            split_ids(&ids(50), 0.2, 0.5, 9).unwrap(),
            split_ids(&ids(50), 0.2, 0.5, 9).unwrap()
        );
        assert_ne!(
            split_ids(&ids(50), 0.2, 0.5, 9).unwrap(),
            split_ids(&ids(50), 0.2, 0.5, 10).unwrap()
        );
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            split_ids(&ids(2), 0.2, 0.5, 1),
            Err(Error::Split { .. })
        ));
        assert!(matches!(
            split_ids(&ids(3), 0.0, 0.9, 1),
            Err(Error::Split { .. })
        ));
        assert!(matches!(
            split_ids(&ids(10), 0.5, 0.5, 1),
            Err(Error::Parameter(_))
        ));
    }

    proptest! {
        #[test]
        fn split_partitions_ids(n in 3usize..200, v in 0.0f64..0.4, c in 0.05f64..0.5, seed: u64) {
            if let Ok(s) = split_ids(&ids(n), v, c, seed) {
                let all: Vec<_> = s.val_ids.iter().chain(&s.cal_ids).chain(&s.test_ids).cloned().collect();
                prop_assert_eq!(all.len(), n);
                let uniq: HashSet<_> = all.iter().collect();
                prop_assert_eq!(uniq.len(), n);
                prop_assert!((s.val_ids.len() as f64 - v * n as f64).abs() <= 1.0);
                prop_assert!((s.cal_ids.len() as f64 - c * n as f64).abs() <= 1.0);
            }
        }
    }
}
