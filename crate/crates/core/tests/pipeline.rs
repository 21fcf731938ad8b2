//! End-to-end library use: generate, save, reload, fit and predict.

use segrc::dataset_io::{split_dataset, DatasetManifest, Sample};
use segrc::methods::{fit, predict, FittedMethod, MethodKind, MethodSpec};
use segrc::synthetic::{generate, write_dataset, Miscalibration, SynthConfig};

fn load(manifest: &DatasetManifest, ids: &[String]) -> Vec<Sample> {
    ids.iter()
        .map(|id| manifest.load_sample(manifest.get(id).unwrap()).unwrap())
        .collect()
}

#[test]
fn every_method_survives_a_disk_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = generate(&SynthConfig {
        n_images: 150,
        height: 16,
        width: 16,
        miscalibration: Miscalibration::Flatten(2.0),
        noise_sd: 0.3,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let manifest = write_dataset(tmp.path().join("data"), &synth).unwrap();
    let manifest = DatasetManifest::load(manifest.root().join("manifest.csv")).unwrap();
    let split = split_dataset(&manifest, 0.2, 0.5, 11).unwrap();
    let (val, cal, test) = (
        load(&manifest, &split.val_ids),
        load(&manifest, &split.cal_ids),
        load(&manifest, &split.test_ids),
    );

    for method in MethodKind::ALL {
        let spec = MethodSpec {
            n_bins: 100,
            ..MethodSpec::new(method, 0.1)
        };
        let fitted = fit(&spec, &val, &cal).unwrap();
        let dir = tmp.path().join(method.name());
        fitted.save(&dir).unwrap();
        let loaded = FittedMethod::load(&dir).unwrap();
        for s in &test {
            assert_eq!(predict(&fitted, &s.probs), predict(&loaded, &s.probs), "{method}");
        }
    }
}

#[test]
fn lower_alpha_never_shrinks_sets() {
    let synth = generate(&SynthConfig {
        n_images: 120,
        height: 12,
        width: 12,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let samples = segrc::synthetic::to_samples(&synth);
    let (val, rest) = samples.split_at(20);
    let (cal, test) = rest.split_at(60);
    for method in MethodKind::ALL {
        let strict = fit(&MethodSpec::new(method, 0.05), val, cal).unwrap();
        let loose = fit(&MethodSpec::new(method, 0.3), val, cal).unwrap();
        if method.is_stratified() {
            continue;
        }
        assert!(strict.tau <= loose.tau);
        for s in test {
            assert!(predict(&loose, &s.probs).set.is_subset_of(&predict(&strict, &s.probs).set));
        }
    }
}
