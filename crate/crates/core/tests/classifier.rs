use std::fs;

use npt::bench::{BenchmarkConfig, Profile};
use npt::classifier::{train_classifier, ClassifierArch, ClassifierHyper, ClassifierModel, FeatureLayer};
use npt::modelfile::{load_classifier, save_classifier};
use npt::nn::Trainable;
use npt::spectra::{generate_synthetic_dataset, LabeledSpectrum, Spectrum};

const W: usize = 256;

fn peak(center: f64, scale: f64) -> Spectrum {
    Spectrum::new(
        (0..W)
            .map(|i| {
                let z = (i as f64 / W as f64 - center) / 0.03;
                scale * (-0.5 * z * z).exp()
            })
            .collect(),
    )
    .unwrap()
}

fn separable(n: usize) -> Vec<LabeledSpectrum> {
    let mut out = Vec::new();
    for class in 0..2 {
        for i in 0..n {
            out.push(LabeledSpectrum {
                spectrum: peak(if class == 0 { 0.25 } else { 0.75 }, 0.8 + 0.01 * i as f64),
                class,
                concentration_mg_per_l: class as f64,
                environment_id: "clean".into(),
                sample_index: class * n + i,
                ground_truth: None,
            });
        }
    }
    out
}

fn hyper(epochs: usize) -> ClassifierHyper {
    ClassifierHyper {
        batch_size: 8,
        epochs,
        lr: 1e-3,
        validation_fraction: 0.2,
    }
}

#[test]
fn separable_classes_are_learned() {
    let (model, report) = train_classifier(&separable(20), &ClassifierArch::default(), &hyper(20), 3).unwrap();
    assert_eq!(report.validation_accuracy, 1.0, "{report:?}");
    assert_eq!(model.accuracy(&separable(20)).unwrap(), 1.0);
}

#[test]
fn training_is_deterministic() {
    let a = train_classifier(&separable(6), &ClassifierArch::default(), &hyper(2), 9).unwrap();
    let b = train_classifier(&separable(6), &ClassifierArch::default(), &hyper(2), 9).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn training_rejects_single_class() {
    let one: Vec<LabeledSpectrum> = separable(4).into_iter().filter(|s| s.class == 0).collect();
    assert!(train_classifier(&one, &ClassifierArch::default(), &hyper(1), 1).is_err());
}

#[test]
fn feature_shapes_follow_pooling() {
    let m = ClassifierModel::new(ClassifierArch::default(), 1).unwrap();
    let x = peak(0.5, 1.0);
    assert_eq!(m.extract_features(&x, FeatureLayer::Conv1).unwrap().shape(), (16, W / 5));
    assert_eq!(m.extract_features(&x, FeatureLayer::Conv2).unwrap().shape(), (32, W / 25));
    assert_eq!(m.extract_features(&x, FeatureLayer::Conv3).unwrap().shape(), (64, W / 50));
}

#[test]
fn features_are_pure() {
    let m = ClassifierModel::new(ClassifierArch::default(), 2).unwrap();
    let zero = Spectrum::new(vec![0.0; W]).unwrap();
    let a = m.extract_features(&zero, FeatureLayer::Conv2).unwrap();
    assert!(a.data().iter().all(|v| v.is_finite()));
    assert_eq!(a, m.extract_features(&zero, FeatureLayer::Conv2).unwrap());
    let x = peak(0.3, 1.0);
    let f1 = m.extract_features(&x, FeatureLayer::Conv3).unwrap();
    let _ = m.extract_features(&peak(0.7, 2.0), FeatureLayer::Conv3).unwrap();
    assert_eq!(f1, m.extract_features(&x, FeatureLayer::Conv3).unwrap());
}

#[test]
fn receptive_fields_increase_with_depth() {
    let r = ClassifierArch::default().receptive_fields();
    assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
}

#[test]
fn accuracy_ignores_sample_order() {
    let (model, _) = train_classifier(&separable(8), &ClassifierArch::default(), &hyper(3), 5).unwrap();
    let mut samples = separable(8);
    let a = model.accuracy(&samples).unwrap();
    samples.reverse();
    samples.swap(0, 5);
    assert_eq!(a, model.accuracy(&samples).unwrap());
    let first = &samples[0];
    if model.classify(&first.spectrum).unwrap() == first.class {
        assert_eq!(model.accuracy(std::slice::from_ref(first)).unwrap(), 1.0);
    }
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nptm");
    let m = ClassifierModel::new(ClassifierArch::default(), 17).unwrap();
    let sha = save_classifier(&m, "analysis", 17, &path).unwrap();
    let (back, header, sha2) = load_classifier(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(sha, sha2);
    assert_eq!(header.blocks, m.block_shapes());
    let x = peak(0.4, 1.0);
    assert_eq!(m.logits(&x).unwrap(), back.logits(&x).unwrap());

    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(load_classifier(&path).is_err());
    assert!(load_classifier(&dir.path().join("missing.nptm")).is_err());
}

#[test]
fn pooled_environments_reach_desk_accuracy() {
    let cfg = BenchmarkConfig::for_profile(Profile::Desk);
    let mut samples = Vec::new();
    for env in ["A", "B", "C"] {
        samples.extend(generate_synthetic_dataset(&cfg.synthetic, env, 5).unwrap().samples);
    }
    let (_, report) =
        train_classifier(&samples, &cfg.models.classifier_arch, &cfg.models.extractor_hyper, 5).unwrap();
    assert!(report.validation_accuracy >= 0.85, "{report:?}");
}
