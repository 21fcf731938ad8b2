//! Model directories: `spec.csv` (key,value rows), plus `curve.csv` and
//! `strata.csv` when the method uses them.

use std::collections::BTreeMap;
use std::path::Path;

use super::{FittedMethod, MethodKind, MethodSpec};
use crate::error::{Error, Result};
use crate::prob_calibration::CalibrationCurve;
use crate::stratification::StrataModel;

pub const SPEC_FILE: &str = "spec.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const STRATA_FILE: &str = "strata.csv";

impl FittedMethod {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let spec = &self.spec;
        let rows: [(&str, String); 10] = [
            ("method", spec.method.name().to_string()),
            ("alpha", spec.alpha.to_string()),
            ("loss_bound", spec.loss_bound.to_string()),
            ("k", spec.n_strata.to_string()),
            ("n_bins", spec.n_bins.to_string()),
            ("min_stratum_size", spec.min_stratum_size.to_string()),
            ("clip_epsilon", spec.clip_epsilon.to_string()),
            ("tau", self.tau.to_string()),
            ("n_cal", self.n_cal.to_string()),
            ("n_excluded", self.n_excluded.to_string()),
        ];
        let path = dir.join(SPEC_FILE);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        for (file, present) in [(CURVE_FILE, self.curve.is_some()), (STRATA_FILE, self.strata.is_some())] {
            let stale = dir.join(file);
            if !present && stale.exists() {
                std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
            }
        }
        if let Some(curve) = &self.curve {
            curve.write_csv(dir.join(CURVE_FILE))?;
        }
        if let Some(strata) = &self.strata {
            strata.write_csv(dir.join(STRATA_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Model(format!("{} is not a directory", dir.display())));
        }
        let path = dir.join(SPEC_FILE);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let mut kv = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            match (rec.get(0), rec.get(1)) {
                (Some(k), Some(v)) => {
                    kv.insert(k.trim().to_string(), v.trim().to_string());
                }
                _ => return Err(Error::Model(format!("{}: malformed row {rec:?}", path.display()))),
            }
        }
        let get = |key: &str| -> Result<&str> {
            kv.get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Model(format!("{}: missing key '{key}'", path.display())))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Model(format!("spec key '{key}' has bad value '{v}'")))
        }

        let spec = MethodSpec {
            method: get("method")?.parse::<MethodKind>()?,
            alpha: num("alpha", get("alpha")?)?,
            loss_bound: num("loss_bound", get("loss_bound")?)?,
            n_strata: num("k", get("k")?)?,
            n_bins: num("n_bins", get("n_bins")?)?,
            min_stratum_size: num("min_stratum_size", get("min_stratum_size")?)?,
            clip_epsilon: num("clip_epsilon", get("clip_epsilon")?)?,
        };
        spec.validate()?;

        let curve_path = dir.join(CURVE_FILE);
        let curve = match (spec.method.uses_curve(), curve_path.is_file()) {
            (true, true) => Some(CalibrationCurve::read_csv(&curve_path, spec.clip_epsilon)?),
            (true, false) => {
                return Err(Error::Model(format!("{} requires {CURVE_FILE}", spec.method)))
            }
            (false, _) => None,
        };
        let strata_path = dir.join(STRATA_FILE);
        let strata = match (spec.method.is_stratified(), strata_path.is_file()) {
            (true, true) => Some(StrataModel::read_csv(&strata_path, spec.min_stratum_size)?),
            (true, false) => {
                return Err(Error::Model(format!("{} requires {STRATA_FILE}", spec.method)))
            }
            (false, _) => None,
        };

        Ok(FittedMethod {
            spec,
            tau: num("tau", get("tau")?)?,
            curve,
            strata,
            n_cal: num("n_cal", get("n_cal")?)?,
            n_excluded: num("n_excluded", get("n_excluded")?)?,
        })
    }
}
