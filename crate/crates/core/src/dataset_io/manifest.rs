use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_mask, read_probability_map, Sample};
use crate::error::{Error, Result};

/// One manifest row. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub prob_path: PathBuf,
    pub mask_path: PathBuf,
}

/// CSV index of a dataset (`sample_id,prob_path,mask_path`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    root: PathBuf,
    records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Builds a manifest rooted at `root`, checking id uniqueness.
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.sample_id.is_empty() {
                return Err(Error::Manifest("empty sample_id".into()));
            }
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate sample_id '{}'",
                    r.sample_id
                )));
            }
        }
        Ok(Self {
            root: root.into(),
            records,
        })
    }

    /// Reads a manifest and verifies that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["sample_id", "prob_path", "mask_path"] {
            return Err(Error::Manifest(format!(
                "{}: expected header sample_id,prob_path,mask_path",
                path.display()
            )));
        }
        let records = reader
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestRecord>, _>>()?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let manifest = Self::new(root, records)?;
        for r in &manifest.records {
            for p in [&r.prob_path, &r.mask_path] {
                let full = manifest.root.join(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!(
                        "sample '{}' references missing file {}",
                        r.sample_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        for r in &self.records {
            writer.serialize(r)?;
        }
        if self.records.is_empty() {
            writer.write_record(["sample_id", "prob_path", "mask_path"])?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.sample_id.clone()).collect()
    }

    pub fn get(&self, sample_id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn load_sample(&self, record: &ManifestRecord) -> Result<Sample> {
        let probs = read_probability_map(self.root.join(&record.prob_path))?;
        let mask = read_mask(self.root.join(&record.mask_path))?;
        Sample::new(record.sample_id.clone(), probs, mask)
    }

    /// Loads every sample in manifest order.
    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.records.iter().map(|r| self.load_sample(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{write_mask, write_probability_map, GroundTruthMask, ProbabilityMap};

    fn record(id: &str) -> ManifestRecord {
        ManifestRecord {
            sample_id: id.into(),
            prob_path: format!("{id}_prob.npy").into(),
            mask_path: format!("{id}_mask.npy").into(),
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        assert!(DatasetManifest::new(".", vec![record("a"), record("a")]).is_err());
    }

    #[test]
    fn save_load_roundtrip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        for id in ["a", "b"] {
            write_probability_map(
                dir.path().join(format!("{id}_prob.npy")),
                &ProbabilityMap::new(1, 2, vec![0.3, 0.9]).unwrap(),
            )
            .unwrap();
            write_mask(
                dir.path().join(format!("{id}_mask.npy")),
                &GroundTruthMask::new(1, 2, vec![0, 1]).unwrap(),
            )
            .unwrap();
        }
        let m = DatasetManifest::new(dir.path(), vec![record("a"), record("b")]).unwrap();
        let path = dir.path().join("manifest.csv");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,prob_path,mask_path\n"));

        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(loaded.records(), m.records());
        let samples = loaded.load_all().unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].mask.positives(), 1);
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(dir.path(), vec![record("ghost")]).unwrap();
        let path = dir.path().join("manifest.csv");
        m.save(&path).unwrap();
        assert!(matches!(
            DatasetManifest::load(&path),
            Err(Error::Manifest(_))
        ));
    }
}
