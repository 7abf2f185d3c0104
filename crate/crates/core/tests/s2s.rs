use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use npt::classifier::{ClassifierArch, ClassifierModel, FeatureLayer};
use npt::s2s::{
    build_s2s_casebase, generate_s2s_case, load_casebase, loss_terms, save_casebase, source_loss, target_loss,
    total_loss, total_loss_grad, CaseBaseManifest, StyleLossConfig,
};
use npt::spectra::{generate_synthetic_dataset, SpectralDataset, Spectrum, SyntheticConfig};

const W: usize = 256;

fn synth(env: &str, n: usize) -> SpectralDataset {
    let cfg = SyntheticConfig {
        bins: W,
        samples_per_class: n,
        ..SyntheticConfig::default()
    };
    generate_synthetic_dataset(&cfg, env, 7).unwrap()
}

fn extractor(seed: u64) -> ClassifierModel {
    ClassifierModel::new(ClassifierArch::default(), seed).unwrap()
}

fn quick(iters: usize) -> StyleLossConfig {
    StyleLossConfig {
        lbfgs_iters: iters,
        ..StyleLossConfig::default()
    }
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `Σ_ij (Gram(a) − Gram(b))²` with the Gram matrices formed by explicit
/// row products.
fn gram_sq_diff(a: &ndsig::Tensor1D, b: &ndsig::Tensor1D) -> f64 {
    let (p, _) = a.shape();
    let mut s = 0.0;
    for i in 0..p {
        for j in 0..p {
            let ga: f64 = a.channel(i).iter().zip(a.channel(j)).map(|(x, y)| x * y).sum();
            let gb: f64 = b.channel(i).iter().zip(b.channel(j)).map(|(x, y)| x * y).sum();
            s += (ga - gb).powi(2);
        }
    }
    s
}

#[test]
fn identical_inputs_give_zero_loss_and_a_fixed_point() {
    let ds = synth("A", 4);
    let ex = extractor(1);
    let t = &ds.samples[0];
    let cfg = quick(20);
    assert_eq!(total_loss(&t.spectrum, &t.spectrum, &t.spectrum, &ex, &cfg).unwrap(), 0.0);
    let case = generate_s2s_case(t, t, &ex, &cfg).unwrap();
    let sup = case
        .generated
        .values()
        .iter()
        .zip(t.spectrum.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(sup <= 1e-6, "{sup}");
}

#[test]
fn losses_match_feature_recomputation() {
    let a = synth("A", 4);
    let b = synth("C", 4);
    let ex = extractor(2);
    let cfg = StyleLossConfig::default();
    let (g, s, t) = (&b.samples[1].spectrum, &a.samples[0].spectrum, &b.samples[0].spectrum);

    let f = |x: &Spectrum, l: FeatureLayer| ex.extract_features(x, l).unwrap();
    let ls = sq_diff(f(g, FeatureLayer::Conv3).data(), f(s, FeatureLayer::Conv3).data());
    let mut lt = sq_diff(f(g, FeatureLayer::Conv3).data(), f(t, FeatureLayer::Conv3).data());
    for (layer, w) in [(FeatureLayer::Conv1, 1.0), (FeatureLayer::Conv2, 0.2)] {
        let (fg, ft) = (f(g, layer), f(t, layer));
        let (p, m) = fg.shape();
        lt += w * gram_sq_diff(&fg, &ft) / (4.0 * (p * p * m * m) as f64);
    }
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
    assert!(rel(source_loss(g, s, &ex, &cfg).unwrap(), ls) <= 1e-12);
    assert!(rel(target_loss(g, t, &ex, &cfg).unwrap(), lt) <= 1e-12);
    assert!(rel(total_loss(g, s, t, &ex, &cfg).unwrap(), ls + 2e5 * lt) <= 1e-12);
    assert!(source_loss(g, s, &ex, &cfg).unwrap() > 0.0);
    assert_eq!(source_loss(s, s, &ex, &cfg).unwrap(), 0.0);
    assert_eq!(target_loss(t, t, &ex, &cfg).unwrap(), 0.0);
}

#[test]
fn weights_select_single_terms() {
    let a = synth("A", 4);
    let b = synth("B", 4);
    let ex = extractor(3);
    let (g, s, t) = (a.samples[2].spectrum.values(), a.samples[0].spectrum.values(), b.samples[0].spectrum.values());
    let ([ls, lt, _], _) = loss_terms(g, s, t, &ex, &StyleLossConfig::default(), false).unwrap();
    let only_t = StyleLossConfig { alpha: 0.0, ..StyleLossConfig::default() };
    let only_s = StyleLossConfig { beta: 0.0, ..StyleLossConfig::default() };
    assert_eq!(loss_terms(g, s, t, &ex, &only_t, false).unwrap().0[2], 2e5 * lt);
    assert_eq!(loss_terms(g, s, t, &ex, &only_s, false).unwrap().0[2], ls);
}

#[test]
fn total_loss_gradient_matches_central_differences() {
    let a = synth("A", 4);
    let b = synth("B", 4);
    let cfg = StyleLossConfig::default();
    for seed in 0..10u64 {
        let ex = extractor(100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = a.samples[(seed % 4) as usize].spectrum.values();
        let t = b.samples[(seed % 4) as usize].spectrum.values();
        let g: Vec<f64> = s.iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
        let (_, grad) = total_loss_grad(&g, s, t, &ex, &cfg).unwrap();
        let f = |x: &[f64]| loss_terms(x, s, t, &ex, &cfg, false).unwrap().0[2];
        let h = 1e-5;
        let f0 = f(&g);
        let mut checked = 0;
        for _ in 0..16 {
            let i = rng.gen_range(0..W);
            let at = |d: f64| {
                let mut x = g.clone();
                x[i] += d;
                f(&x)
            };
            let (fp, fm) = (at(h), at(-h));
            let numeric = (fp - fm) / (2.0 * h);
            let scale = numeric.abs().max(grad[i].abs()).max(1e-6 * f0.abs());
            // Away from ReLU and pooling switches the one-sided slopes
            // differ by a curvature term that halves with the step.
            let gap = (fp - f0) / h - (f0 - fm) / h;
            let gap_half = (at(h / 2.0) - f0) / (h / 2.0) - (f0 - at(-h / 2.0)) / (h / 2.0);
            if (gap - 2.0 * gap_half).abs() > 0.1 * gap.abs() + 1e-6 * scale {
                continue;
            }
            checked += 1;
            assert!((numeric - grad[i]).abs() <= 1e-4 * scale, "seed {seed} bin {i}: {} vs {numeric}", grad[i]);
        }
        assert!(checked >= 12, "seed {seed}: only {checked} smooth coordinates");
    }
}

/// With zero biases every block is positively homogeneous of degree one.
fn homogeneous_extractor(arch: ClassifierArch, seed: u64) -> ClassifierModel {
    let mut m = ClassifierModel::new(arch, seed).unwrap();
    for c in &mut m.convs {
        c.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    m
}

#[test]
fn doubling_inputs_scales_terms_by_their_degree() {
    let ex = homogeneous_extractor(ClassifierArch::default(), 4);
    let a = synth("A", 4);
    let b = synth("C", 4);
    let (g, t) = (a.samples[1].spectrum.values(), b.samples[2].spectrum.values());
    let twice = |x: &[f64]| x.iter().map(|v| 2.0 * v).collect::<Vec<f64>>();
    let position = StyleLossConfig { gram_layers: vec![], ..StyleLossConfig::default() };
    let gram = StyleLossConfig { target_position_weight: 0.0, ..StyleLossConfig::default() };
    for (cfg, factor) in [(position, 4.0), (gram, 16.0)] {
        let base = loss_terms(g, t, t, &ex, &cfg, false).unwrap().0[1];
        let scaled = loss_terms(&twice(g), &twice(t), &twice(t), &ex, &cfg, false).unwrap().0[1];
        assert!(base > 0.0);
        assert!((scaled / base - factor).abs() <= 1e-9 * factor, "{} vs {factor}", scaled / base);
    }
}

#[test]
fn single_channel_gram_term_reduces_to_energy_difference() {
    let arch = ClassifierArch {
        channels: [1, 1, 1, 1],
        ..ClassifierArch::default()
    };
    let ex = ClassifierModel::new(arch, 6).unwrap();
    let cfg = StyleLossConfig {
        alpha: 0.0,
        beta: 1.0,
        gram_layers: vec![(FeatureLayer::Conv1, 1.0)],
        target_position_weight: 0.0,
        ..StyleLossConfig::default()
    };
    let a = synth("A", 4);
    let b = synth("B", 4);
    let (g, t) = (&a.samples[3].spectrum, &b.samples[0].spectrum);
    let (fg, ft) = (
        ex.extract_features(g, FeatureLayer::Conv1).unwrap(),
        ex.extract_features(t, FeatureLayer::Conv1).unwrap(),
    );
    let m = fg.length() as f64;
    let eg: f64 = fg.data().iter().map(|v| v * v).sum();
    let et: f64 = ft.data().iter().map(|v| v * v).sum();
    let want = (eg - et).powi(2) / (4.0 * m * m);
    let got = loss_terms(g.values(), t.values(), t.values(), &ex, &cfg, false).unwrap().0[2];
    assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "{got} vs {want}");
}

#[test]
fn generation_makes_progress_with_monotone_trajectory() {
    let a = synth("B", 4);
    let b = synth("A", 4);
    let ex = extractor(8);
    let cfg = quick(80);
    for k in [0, 5, 9] {
        let (s, t) = (&a.samples[k * 4], &b.samples[k * 4 + 1]);
        let case = generate_s2s_case(s, t, &ex, &cfg).unwrap();
        let p = &case.provenance;
        assert!(p.final_loss <= 0.5 * p.initial_loss, "{} vs {}", p.final_loss, p.initial_loss);
        assert!(p.trajectory.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(case.class(), t.class);
    }
}

#[test]
fn mismatched_classes_are_rejected() {
    let a = synth("A", 4);
    let b = synth("B", 4);
    assert!(generate_s2s_case(&a.samples[0], &b.samples[4], &extractor(1), &quick(5)).is_err());
}

fn pick(ds: &SpectralDataset, per_class: usize, classes: &[usize]) -> SpectralDataset {
    let idx: Vec<usize> = classes.iter().flat_map(|&c| ds.indices_of_class(c).into_iter().take(per_class)).collect();
    ds.select(&idx)
}

#[test]
fn case_base_counts_and_determinism() {
    let classes = [1, 4, 7];
    let a = pick(&synth("A", 20), 20, &classes);
    let b = pick(&synth("B", 20), 20, &classes);
    let ex = extractor(9);
    let cfg = quick(3);
    let base = build_s2s_casebase(&a, &b, &classes, &ex, &cfg, 5).unwrap();
    assert_eq!(base.cases.len() + base.rejected.len(), 60);
    for c in classes {
        let n = base.cases.iter().filter(|x| x.class() == c).count();
        assert!(n <= 20 && n + base.rejected.len() >= 20);
    }
    let again = build_s2s_casebase(&a, &b, &classes, &ex, &cfg, 5).unwrap();
    assert_eq!(base, again);
}

#[test]
fn case_base_round_trip() {
    let classes = [0, 9];
    let a = pick(&synth("A", 4), 2, &classes);
    let b = pick(&synth("C", 4), 2, &classes);
    let ex = extractor(10);
    let cfg = quick(4);
    let base = build_s2s_casebase(&a, &b, &classes, &ex, &cfg, 1).unwrap();
    let manifest = CaseBaseManifest {
        source_environment: "A".into(),
        target_environment: "C".into(),
        bins: W,
        classes: classes.to_vec(),
        seed: 1,
        extractor_sha256: "0".repeat(64),
        config: cfg,
        cases: base.cases.iter().map(|c| c.provenance.clone()).collect(),
        rejected: base.rejected.clone(),
    };
    let dir = tempfile::tempdir().unwrap();
    save_casebase(&base, &manifest, dir.path()).unwrap();
    let (m2, cases) = load_casebase(dir.path()).unwrap();
    assert_eq!(m2, manifest);
    assert_eq!(cases.len(), base.cases.len());
    for ((g, t, class), c) in cases.iter().zip(&base.cases) {
        assert_eq!(g, &c.generated);
        assert_eq!(t, &c.target.spectrum);
        assert_eq!(*class, c.class());
    }
}

#[test]
fn empty_class_request_is_an_error() {
    let a = pick(&synth("A", 4), 2, &[0]);
    let b = pick(&synth("B", 4), 2, &[0]);
    let err = build_s2s_casebase(&a, &b, &[0, 3], &extractor(1), &quick(2), 1);
    assert!(err.is_err());
}
