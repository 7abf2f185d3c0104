use npt::baselines::{d2d_pairs, denoise_dataset, train_raw_dncnn, wavelet_pipeline, PipelineSettings};
use npt::bench::split_pools;
use npt::classifier::{train_classifier, ClassifierArch, ClassifierHyper};
use npt::cnpt::{train_cnpt, CnptArch, TransferHyper};
use npt::nn::Trainable;
use npt::spectra::{generate_synthetic_dataset, SpectralDataset, SyntheticConfig};
use npt::wavelet::WaveletConfig;

fn synth(env: &str, n: usize, clean: bool) -> SpectralDataset {
    let mut cfg = SyntheticConfig {
        bins: 256,
        samples_per_class: n,
        ..SyntheticConfig::default()
    };
    if clean {
        cfg.baseline_amplitude = 0.0;
        cfg.white_noise_sigma = 0.0;
    }
    generate_synthetic_dataset(&cfg, env, 4).unwrap()
}

fn arch() -> CnptArch {
    CnptArch {
        width: 8,
        depth: 5,
        ..CnptArch::default()
    }
}

fn transfer_hyper() -> TransferHyper {
    TransferHyper {
        batch_size: 8,
        epochs: 2,
        lr: 1e-3,
        validation_fraction: 0.2,
    }
}

fn classifier_hyper(epochs: usize) -> ClassifierHyper {
    ClassifierHyper {
        batch_size: 16,
        epochs,
        lr: 1e-3,
        validation_fraction: 0.2,
    }
}

#[test]
fn denoising_drops_ground_truth_and_keeps_labels() {
    let ds = synth("A", 4, false);
    let out = denoise_dataset(&ds, &WaveletConfig::default()).unwrap();
    assert_eq!(out.len(), ds.len());
    for (a, b) in out.samples.iter().zip(&ds.samples) {
        assert!(a.ground_truth.is_none());
        assert_eq!(a.class, b.class);
        assert_eq!(a.sample_index, b.sample_index);
        assert_ne!(a.spectrum, b.spectrum);
    }
}

#[test]
fn wavelet_pipeline_is_deterministic() {
    let (s, t) = (synth("B", 4, false), synth("A", 4, false));
    let h = classifier_hyper(1);
    let settings = PipelineSettings {
        wavelet: &WaveletConfig::default(),
        classifier_arch: &ClassifierArch::default(),
        classifier_hyper: &h,
        cnpt_arch: &arch(),
        cnpt_hyper: &transfer_hyper(),
    };
    let (p1, r1) = wavelet_pipeline(&s, &t, &[0, 4, 9], &settings, 3).unwrap();
    let (p2, r2) = wavelet_pipeline(&s, &t, &[0, 4, 9], &settings, 3).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(p1.transfer, p2.transfer);
    assert_eq!(p1.accuracy(&s).unwrap(), p2.accuracy(&s).unwrap());
}

#[test]
fn noise_free_pipeline_matches_clean_accuracy() {
    let ds = synth("A", 16, true);
    let (method, eval) = split_pools(&ds, 0.5, 1);
    let h = classifier_hyper(60);
    let (clean_model, _) = train_classifier(&method.samples, &ClassifierArch::default(), &h, 2).unwrap();
    let clean = clean_model.accuracy(&eval.samples).unwrap();
    assert!(clean >= 0.9, "{clean}");

    let short = TransferHyper {
        epochs: 5,
        ..transfer_hyper()
    };
    let settings = PipelineSettings {
        wavelet: &WaveletConfig::default(),
        classifier_arch: &ClassifierArch::default(),
        classifier_hyper: &h,
        cnpt_arch: &arch(),
        cnpt_hyper: &short,
    };
    let classes: Vec<usize> = (0..10).collect();
    let (pipeline, _) = wavelet_pipeline(&method, &method, &classes, &settings, 2).unwrap();
    let piped = pipeline.accuracy(&eval).unwrap();
    assert!((piped - clean).abs() <= 0.02 + 1e-12, "pipeline {piped} vs clean {clean}");
}

#[test]
fn raw_and_generated_networks_share_architecture() {
    let (s, t) = (synth("C", 4, false), synth("B", 4, false));
    let classes = [1, 5];
    let (raw, _) = train_raw_dncnn(&s, &t, &classes, &arch(), &transfer_hyper(), 5).unwrap();
    let pairs = d2d_pairs(&s, &t, &classes, 5).unwrap();
    assert_eq!(pairs.len(), 8);
    let (other, _) = train_cnpt(&pairs, &arch(), &transfer_hyper(), 6).unwrap();
    assert_eq!(raw.arch, other.arch);
    assert_eq!(raw.block_shapes(), other.block_shapes());
}
