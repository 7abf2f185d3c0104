//! Benchmark matrix: transfer directions × training ratios × seeds, every
//! method evaluated with the target environment's analysis model on a
//! held-out source split.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{d2d_pairs, denoise_dataset, wavelet_transfer, PipelineSettings};
use crate::classifier::{train_classifier, ClassifierArch, ClassifierHyper, ClassifierModel};
use crate::cnpt::{train_ae, train_cnpt, AeArch, CnptArch, TransferHyper, TransferPair};
use crate::error::{NptError, Result};
use crate::nn::stratified_split;
use crate::s2s::{build_s2s_casebase, S2SCaseBase, StyleLossConfig};
use crate::seed::{derive_seed, sha256_hex};
use crate::spectra::{generate_synthetic_dataset, SpectralDataset, Spectrum, SyntheticConfig};
use crate::svg::{line_chart, Series};
use crate::wavelet::WaveletConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = NptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(NptError::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub classifier_arch: ClassifierArch,
    pub classifier_hyper: ClassifierHyper,
    pub extractor_hyper: ClassifierHyper,
    pub cnpt_arch: CnptArch,
    pub cnpt_hyper: TransferHyper,
    pub ae_arch: AeArch,
    pub ae_hyper: TransferHyper,
    pub style: StyleLossConfig,
    pub wavelet: WaveletConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub profile: Profile,
    pub synthetic: SyntheticConfig,
    /// Ordered `(source, target)` environment pairs.
    pub directions: Vec<(String, String)>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Fraction of each class and environment held out for evaluation.
    pub eval_fraction: f64,
    pub models: ModelSettings,
}

fn all_directions(envs: &[&str]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for s in envs {
        for t in envs {
            if s != t {
                out.push((s.to_string(), t.to_string()));
            }
        }
    }
    out
}

impl BenchmarkConfig {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self {
                profile,
                synthetic: SyntheticConfig::default(),
                directions: all_directions(&["A", "B", "C"]),
                ratios: vec![0.3, 0.5],
                seeds: vec![1, 2, 3],
                eval_fraction: 0.5,
                models: ModelSettings {
                    classifier_arch: ClassifierArch::default(),
                    classifier_hyper: ClassifierHyper::default(),
                    extractor_hyper: ClassifierHyper::default(),
                    cnpt_arch: CnptArch::default(),
                    cnpt_hyper: TransferHyper::default(),
                    ae_arch: AeArch::default(),
                    ae_hyper: TransferHyper::default(),
                    style: StyleLossConfig::default(),
                    wavelet: WaveletConfig::default(),
                },
            },
            Profile::Desk => {
                let classifier_hyper = ClassifierHyper {
                    batch_size: 32,
                    epochs: 30,
                    lr: 1e-3,
                    validation_fraction: 0.2,
                };
                let transfer_hyper = TransferHyper {
                    batch_size: 16,
                    epochs: 25,
                    lr: 1e-3,
                    validation_fraction: 0.2,
                };
                Self {
                    profile,
                    synthetic: SyntheticConfig {
                        bins: 256,
                        samples_per_class: 48,
                        ..SyntheticConfig::default()
                    },
                    directions: all_directions(&["A", "B", "C"]),
                    ratios: vec![0.3, 0.5],
                    seeds: vec![1, 2, 3],
                    eval_fraction: 0.5,
                    models: ModelSettings {
                        classifier_arch: ClassifierArch::default(),
                        classifier_hyper: classifier_hyper.clone(),
                        extractor_hyper: classifier_hyper,
                        cnpt_arch: CnptArch {
                            width: 16,
                            ..CnptArch::default()
                        },
                        cnpt_hyper: transfer_hyper.clone(),
                        ae_arch: AeArch::default(),
                        ae_hyper: transfer_hyper,
                        style: StyleLossConfig {
                            lbfgs_iters: 80,
                            ..StyleLossConfig::default()
                        },
                        wavelet: WaveletConfig::default(),
                    },
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.models.style.validate()?;
        if self.directions.is_empty() || self.ratios.is_empty() || self.seeds.is_empty() {
            return Err(NptError::Config("directions, ratios and seeds must be non-empty".into()));
        }
        for (s, t) in &self.directions {
            self.synthetic.environment(s)?;
            self.synthetic.environment(t)?;
        }
        for &r in &self.ratios {
            class_subset(r, self.synthetic.classes)?;
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(NptError::Config("eval_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(NptError::Missing(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| NptError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| NptError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }
}

/// `round(ratio · classes)` classes spread evenly over the label range.
pub fn class_subset(ratio: f64, classes: usize) -> Result<Vec<usize>> {
    let k = (ratio * classes as f64).round() as usize;
    if !(ratio > 0.0 && ratio <= 1.0) || k < 1 || (ratio * classes as f64 - k as f64).abs() > 1e-9 {
        return Err(NptError::Config(format!(
            "ratio {ratio} does not select a whole number of the {classes} classes"
        )));
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    Ok((0..k)
        .map(|i| ((i * (classes - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "D_S")]
    SourceRaw,
    Wavelet,
    #[serde(rename = "DnCNN")]
    RawDncnn,
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "GC-AE")]
    GcAe,
    #[serde(rename = "GC-DnCNN")]
    GcDncnn,
    #[serde(rename = "D_T")]
    TargetRef,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SourceRaw,
        Method::Wavelet,
        Method::RawDncnn,
        Method::Ae,
        Method::GcAe,
        Method::GcDncnn,
        Method::TargetRef,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::SourceRaw => "D_S",
            Method::Wavelet => "Wavelet",
            Method::RawDncnn => "DnCNN",
            Method::Ae => "AE",
            Method::GcAe => "GC-AE",
            Method::GcDncnn => "GC-DnCNN",
            Method::TargetRef => "D_T",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    /// Accuracy per seed, `None` where the method failed.
    pub per_seed: Vec<Option<f64>>,
    /// Mean over the seeds that succeeded.
    pub mean: Option<f64>,
    pub failures: Vec<String>,
}

/// Generated-case diagnostics for one seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseStats {
    pub cases: usize,
    pub rejected: usize,
    /// Fraction of cases with `‖G − G*‖ < ‖S − G*‖`.
    pub oracle_win_fraction: Option<f64>,
    pub median_rel_err_generated: Option<f64>,
    pub median_rel_err_source: Option<f64>,
    pub median_loss_ratio: f64,
}

/// Plot material from the first seed of a cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellExample {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub transferred: Vec<f64>,
    pub cnpt_loss_curve: Vec<f64>,
    pub case_trajectory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub source: String,
    pub target: String,
    pub ratio: f64,
    pub classes: Vec<usize>,
    pub methods: BTreeMap<Method, MethodResult>,
    pub case_stats: Vec<Option<CaseStats>>,
    /// Largest `|R(x)|` of the generated-case network over evaluation inputs,
    /// per seed.
    pub gc_residual_sup: Vec<Option<f64>>,
    pub example: Option<CellExample>,
}

impl CellReport {
    pub fn mean(&self, m: Method) -> Option<f64> {
        self.methods.get(&m).and_then(|r| r.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellReport>,
    pub runtime_seconds: f64,
}

impl BenchmarkReport {
    pub fn cell(&self, source: &str, target: &str, ratio: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.source == source && c.target == target && (c.ratio - ratio).abs() < 1e-12)
    }
}

/// Seed of the synthetic data generated for a run seed.
pub fn data_seed(seed: u64) -> u64 {
    derive_seed(seed, &["data"])
}

/// Seed of one `(direction, ratio)` cell: pairing, case generation and
/// transfer-network training derive from it.
pub fn cell_seed(seed: u64, source: &str, target: &str, ratio: f64) -> u64 {
    derive_seed(seed, &["cell", source, target, &format!("{ratio}")])
}

/// Method-pool and evaluation-pool halves of one environment's data.
struct EnvData {
    method: SpectralDataset,
    eval: SpectralDataset,
}

/// Per class, `fraction` of the samples go to the evaluation pool and the
/// rest to the method pool. Returns `(method, eval)`.
pub fn split_pools(ds: &SpectralDataset, fraction: f64, seed: u64) -> (SpectralDataset, SpectralDataset) {
    let groups: Vec<usize> = ds.samples.iter().map(|s| s.class).collect();
    let (method, eval) = stratified_split(&groups, fraction, seed, &format!("eval-split:{}", ds.environment_id));
    (ds.select(&method), ds.select(&eval))
}

fn split_env(ds: &SpectralDataset, fraction: f64, seed: u64) -> EnvData {
    let (method, eval) = split_pools(ds, fraction, seed);
    EnvData { method, eval }
}

/// Models shared by every cell of one seed.
struct SeedContext {
    envs: BTreeMap<String, EnvData>,
    analysis: BTreeMap<String, Result<ClassifierModel>>,
    wavelet_analysis: BTreeMap<String, Result<ClassifierModel>>,
    extractors: BTreeMap<(String, String), Result<ClassifierModel>>,
}

/// Unordered environment pair, smaller id first.
pub fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn share<T: Clone>(r: &Result<T>) -> Result<T> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(NptError::Numeric(format!("shared stage failed: {e}"))),
    }
}

fn build_seed_context(cfg: &BenchmarkConfig, seed: u64) -> Result<SeedContext> {
    let m = &cfg.models;
    let data_seed = data_seed(seed);
    let mut env_ids: Vec<String> = cfg.directions.iter().flat_map(|(s, t)| [s.clone(), t.clone()]).collect();
    env_ids.sort();
    env_ids.dedup();
    let mut envs = BTreeMap::new();
    for e in &env_ids {
        let ds = generate_synthetic_dataset(&cfg.synthetic, e, data_seed)?;
        envs.insert(e.clone(), split_env(&ds, cfg.eval_fraction, seed));
    }
    let mut targets: Vec<String> = cfg.directions.iter().map(|(_, t)| t.clone()).collect();
    targets.sort();
    targets.dedup();
    let mut pairs: Vec<(String, String)> = cfg.directions.iter().map(|(s, t)| pair_key(s, t)).collect();
    pairs.sort();
    pairs.dedup();

    enum Job<'a> {
        Analysis(&'a str),
        WaveletAnalysis(&'a str),
        Extractor(&'a (String, String)),
    }
    let jobs: Vec<Job<'_>> = targets
        .iter()
        .map(|t| Job::Analysis(t))
        .chain(targets.iter().map(|t| Job::WaveletAnalysis(t)))
        .chain(pairs.iter().map(Job::Extractor))
        .collect();
    let results: Vec<Result<ClassifierModel>> = jobs
        .par_iter()
        .map(|job| match job {
            Job::Analysis(t) => {
                let d = &envs[*t].method;
                let s = derive_seed(seed, &["analysis", t]);
                Ok(train_classifier(&d.samples, &m.classifier_arch, &m.classifier_hyper, s)?.0)
            }
            Job::WaveletAnalysis(t) => {
                let d = denoise_dataset(&envs[*t].method, &m.wavelet)?;
                let s = derive_seed(seed, &["wavelet-analysis", t]);
                Ok(train_classifier(&d.samples, &m.classifier_arch, &m.classifier_hyper, s)?.0)
            }
            Job::Extractor((a, b)) => {
                let mut samples = envs[a].method.samples.clone();
                if a != b {
                    samples.extend(envs[b].method.samples.iter().cloned());
                }
                let s = derive_seed(seed, &["extractor", a, b]);
                Ok(train_classifier(&samples, &m.classifier_arch, &m.extractor_hyper, s)?.0)
            }
        })
        .collect();
    log::debug!("seed {seed}: shared models done");
    let mut ctx = SeedContext {
        envs,
        analysis: BTreeMap::new(),
        wavelet_analysis: BTreeMap::new(),
        extractors: BTreeMap::new(),
    };
    for (job, r) in jobs.iter().zip(results) {
        match job {
            Job::Analysis(t) => {
                ctx.analysis.insert(t.to_string(), r);
            }
            Job::WaveletAnalysis(t) => {
                ctx.wavelet_analysis.insert(t.to_string(), r);
            }
            Job::Extractor(k) => {
                ctx.extractors.insert((*k).clone(), r);
            }
        }
    }
    Ok(ctx)
}

fn transformed_accuracy(
    analysis: &ClassifierModel,
    eval: &SpectralDataset,
    f: impl Fn(&Spectrum) -> Result<Spectrum> + Sync,
) -> Result<f64> {
    let spectra = eval.samples.par_iter().map(|s| f(&s.spectrum)).collect::<Result<Vec<_>>>()?;
    let mut processed = eval.samples.clone();
    for (s, p) in processed.iter_mut().zip(spectra) {
        s.spectrum = p;
    }
    analysis.accuracy(&processed)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Oracle comparison against `G* = X + N_S + ξ_T` when ground truth is
/// available, looked up by sample id.
pub fn case_stats(base: &S2SCaseBase, source: &SpectralDataset) -> CaseStats {
    let by_id: BTreeMap<String, &crate::spectra::LabeledSpectrum> = source.samples.iter().map(|s| (s.id(), s)).collect();
    let mut wins = 0usize;
    let (mut rg, mut rs) = (Vec::new(), Vec::new());
    let mut complete = true;
    for c in &base.cases {
        let (Some(s), Some(gt_t)) = (by_id.get(&c.provenance.source_id), c.target.ground_truth.as_ref()) else {
            complete = false;
            break;
        };
        let Some(gt_s) = s.ground_truth.as_ref() else {
            complete = false;
            break;
        };
        let gstar: Vec<f64> = (0..gt_s.signal.len())
            .map(|i| gt_s.signal.values()[i] + gt_s.environmental.values()[i] + gt_t.baseline.values()[i])
            .collect();
        let gstar = Spectrum::new(gstar).expect("finite ground truth");
        let dg = c.generated.l2_distance(&gstar);
        let ds = s.spectrum.l2_distance(&gstar);
        if dg < ds {
            wins += 1;
        }
        let norm = gstar.l2_norm().max(f64::MIN_POSITIVE);
        rg.push(dg / norm);
        rs.push(ds / norm);
    }
    let ratios: Vec<f64> = base
        .cases
        .iter()
        .map(|c| {
            if c.provenance.initial_loss > 0.0 {
                c.provenance.final_loss / c.provenance.initial_loss
            } else {
                0.0
            }
        })
        .collect();
    let have = complete && !base.cases.is_empty();
    CaseStats {
        cases: base.cases.len(),
        rejected: base.rejected.len(),
        oracle_win_fraction: have.then(|| wins as f64 / base.cases.len() as f64),
        median_rel_err_generated: have.then(|| median(rg.clone())),
        median_rel_err_source: have.then(|| median(rs.clone())),
        median_loss_ratio: if ratios.is_empty() { 0.0 } else { median(ratios) },
    }
}

/// Results of one `(direction, ratio, seed)` job.
struct SeedCell {
    acc: BTreeMap<Method, Result<f64>>,
    stats: Option<CaseStats>,
    gc_sup: Option<f64>,
    example: Option<CellExample>,
}

fn run_seed_cell(
    cfg: &BenchmarkConfig,
    ctx: &SeedContext,
    (src, tgt): (&str, &str),
    ratio: f64,
    seed: u64,
    want_example: bool,
) -> SeedCell {
    let m = &cfg.models;
    let classes = class_subset(ratio, cfg.synthetic.classes).expect("validated ratio");
    let cell_seed = cell_seed(seed, src, tgt, ratio);
    let ds = &ctx.envs[src];
    let dt = &ctx.envs[tgt];
    let ds_method = ds.method.filter_classes(&classes);
    let dt_method = dt.method.filter_classes(&classes);
    let mut acc: BTreeMap<Method, Result<f64>> = BTreeMap::new();
    let mut out = SeedCell {
        acc: BTreeMap::new(),
        stats: None,
        gc_sup: None,
        example: None,
    };

    let analysis = share(&ctx.analysis[tgt]);
    acc.insert(
        Method::TargetRef,
        analysis.as_ref().map_err(clone_err).and_then(|a| a.accuracy(&dt.eval.samples)),
    );
    acc.insert(
        Method::SourceRaw,
        analysis.as_ref().map_err(clone_err).and_then(|a| a.accuracy(&ds.eval.samples)),
    );

    let wavelet = share(&ctx.wavelet_analysis[tgt]).and_then(|wa| {
        let settings = PipelineSettings {
            wavelet: &m.wavelet,
            classifier_arch: &m.classifier_arch,
            classifier_hyper: &m.classifier_hyper,
            cnpt_arch: &m.cnpt_arch,
            cnpt_hyper: &m.cnpt_hyper,
        };
        let (p, _) = wavelet_transfer(&ds_method, &dt_method, &classes, wa, &settings, derive_seed(cell_seed, &["wavelet"]))?;
        p.accuracy(&ds.eval)
    });
    acc.insert(Method::Wavelet, wavelet);
    log::debug!("{src}->{tgt} {ratio}: wavelet done");

    let raw_pairs = d2d_pairs(&ds_method, &dt_method, &classes, cell_seed);
    let casebase = share(&ctx.extractors[&pair_key(src, tgt)])
        .and_then(|ex| build_s2s_casebase(&ds_method, &dt_method, &classes, &ex, &m.style, cell_seed));
    log::debug!("{src}->{tgt} {ratio}: case-base done");
    if let Ok(base) = &casebase {
        out.stats = Some(case_stats(base, &ds_method));
    }
    let gc_pairs: Result<Vec<TransferPair>> = casebase.as_ref().map_err(clone_err).map(|b| {
        b.cases
            .iter()
            .map(|c| TransferPair {
                input: c.generated.clone(),
                target: c.target.spectrum.clone(),
            })
            .collect()
    });

    let net_seed = derive_seed(cell_seed, &["transfer-net"]);
    let ae_seed = derive_seed(cell_seed, &["ae"]);
    let eval_with = |f: &(dyn Fn(&Spectrum) -> Result<Spectrum> + Sync)| -> Result<f64> {
        let a = analysis.as_ref().map_err(clone_err)?;
        transformed_accuracy(a, &ds.eval, f)
    };

    let raw = raw_pairs.as_ref().map_err(clone_err).and_then(|p| train_cnpt(p, &m.cnpt_arch, &m.cnpt_hyper, net_seed));
    acc.insert(
        Method::RawDncnn,
        raw.and_then(|(model, _)| eval_with(&|s| model.transfer(s))),
    );

    log::debug!("{src}->{tgt} {ratio}: raw network done");
    let gc = gc_pairs.as_ref().map_err(clone_err).and_then(|p| train_cnpt(p, &m.cnpt_arch, &m.cnpt_hyper, net_seed));
    match gc {
        Ok((model, report)) => {
            let sup = ds
                .eval
                .samples
                .par_iter()
                .map(|s| model.residual(&s.spectrum).map(|r| r.values().iter().fold(0.0f64, |a, v| a.max(v.abs()))))
                .collect::<Result<Vec<f64>>>();
            out.gc_sup = sup.ok().map(|v| v.into_iter().fold(0.0, f64::max));
            if want_example {
                if let (Ok(base), Some(first)) = (&casebase, ds.eval.samples.first()) {
                    let target = dt.eval.samples.iter().find(|t| t.class == first.class).unwrap_or(&dt.eval.samples[0]);
                    out.example = model.transfer(&first.spectrum).ok().map(|tr| CellExample {
                        source: first.spectrum.values().to_vec(),
                        target: target.spectrum.values().to_vec(),
                        transferred: tr.into_vec(),
                        cnpt_loss_curve: report.loss_curve.clone(),
                        case_trajectory: base.cases.first().map(|c| c.provenance.trajectory.clone()).unwrap_or_default(),
                    });
                }
            }
            acc.insert(Method::GcDncnn, eval_with(&|s| model.transfer(s)));
        }
        Err(e) => {
            acc.insert(Method::GcDncnn, Err(e));
        }
    }

    log::debug!("{src}->{tgt} {ratio}: generated-case network done");
    let ae = raw_pairs.as_ref().map_err(clone_err).and_then(|p| train_ae(p, &m.ae_arch, &m.ae_hyper, ae_seed));
    acc.insert(Method::Ae, ae.and_then(|(model, _)| eval_with(&|s| model.transfer(s))));
    let gc_ae = gc_pairs.as_ref().map_err(clone_err).and_then(|p| train_ae(p, &m.ae_arch, &m.ae_hyper, ae_seed));
    acc.insert(Method::GcAe, gc_ae.and_then(|(model, _)| eval_with(&|s| model.transfer(s))));

    log::debug!("{src}->{tgt} {ratio}: autoencoders done");
    out.acc = acc;
    out
}

fn clone_err(e: &NptError) -> NptError {
    NptError::Numeric(e.to_string())
}

/// Runs the whole matrix. Stage failures are recorded in the affected
/// cells; only invalid configuration aborts.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut cells: Vec<CellReport> = Vec::new();
    for (s, t) in &cfg.directions {
        for &ratio in &cfg.ratios {
            let mut methods = BTreeMap::new();
            for m in Method::ALL {
                methods.insert(m, MethodResult::default());
            }
            cells.push(CellReport {
                source: s.clone(),
                target: t.clone(),
                ratio,
                classes: class_subset(ratio, cfg.synthetic.classes)?,
                methods,
                case_stats: Vec::new(),
                gc_residual_sup: Vec::new(),
                example: None,
            });
        }
    }
    for (si, &seed) in cfg.seeds.iter().enumerate() {
        log::info!("seed {seed}: training shared models");
        let ctx = build_seed_context(cfg, seed)?;
        let jobs: Vec<(usize, &str, &str, f64)> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.source.as_str(), c.target.as_str(), c.ratio))
            .collect();
        let results: Vec<SeedCell> = jobs
            .par_iter()
            .map(|&(_, s, t, r)| {
                log::info!("seed {seed}: {s}->{t} ratio {r}");
                run_seed_cell(cfg, &ctx, (s, t), r, seed, si == 0)
            })
            .collect();
        for (cell, res) in cells.iter_mut().zip(results) {
            for (m, r) in res.acc {
                let entry = cell.methods.entry(m).or_default();
                match r {
                    Ok(v) => entry.per_seed.push(Some(v)),
                    Err(e) => {
                        log::warn!("{}->{} ratio {} seed {seed} {}: {e}", cell.source, cell.target, cell.ratio, m.label());
                        entry.per_seed.push(None);
                        entry.failures.push(format!("seed {seed}: {e}"));
                    }
                }
            }
            cell.case_stats.push(res.stats);
            cell.gc_residual_sup.push(res.gc_sup);
            if res.example.is_some() {
                cell.example = res.example;
            }
        }
    }
    for cell in &mut cells {
        for r in cell.methods.values_mut() {
            let ok: Vec<f64> = r.per_seed.iter().flatten().copied().collect();
            r.mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        }
    }
    Ok(BenchmarkReport {
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.seeds.clone(),
        cells,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Table layout: one row per `(ratio, direction)`, one column per method,
/// mean accuracy in percent.
pub fn report_csv(report: &BenchmarkReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["ratio".to_string(), "direction".into()];
    header.extend(Method::ALL.iter().map(|m| m.label().to_string()));
    w.write_record(&header)?;
    let mut rows: Vec<&CellReport> = report.cells.iter().collect();
    rows.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    for c in rows {
        let mut row = vec![format!("{:.0}%", c.ratio * 100.0), format!("{}->{}", c.source, c.target)];
        row.extend(Method::ALL.iter().map(|&m| match c.mean(m) {
            Some(v) => format!("{:.2}", 100.0 * v),
            None => "failed".to_string(),
        }));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| NptError::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// One SVG per direction: example spectra before and after transfer, and
/// the loss trajectories behind them.
pub fn report_svgs(report: &BenchmarkReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut seen: Vec<(String, String)> = Vec::new();
    for c in &report.cells {
        let key = (c.source.clone(), c.target.clone());
        if seen.contains(&key) {
            continue;
        }
        let Some(ex) = report
            .cells
            .iter()
            .filter(|d| d.source == c.source && d.target == c.target)
            .find_map(|d| d.example.as_ref())
        else {
            continue;
        };
        seen.push(key);
        let title = format!("{} -> {}", c.source, c.target);
        let svg = line_chart(
            &title,
            &[
                (
                    "spectra",
                    vec![
                        Series { label: "source", values: &ex.source },
                        Series { label: "target-env sample", values: &ex.target },
                        Series { label: "transferred", values: &ex.transferred },
                    ],
                ),
                ("transfer network training loss", vec![Series { label: "loss", values: &ex.cnpt_loss_curve }]),
                ("case generation loss", vec![Series { label: "L-BFGS", values: &ex.case_trajectory }]),
            ],
        );
        out.push((format!("{}_to_{}.svg", c.source, c.target), svg));
    }
    out
}

/// Writes `report.json`, `report.csv`, per-direction plots and a manifest.
pub fn emit_report(report: &BenchmarkReport, cfg: &BenchmarkConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| NptError::io(&plots, e))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: &[u8]| -> Result<()> {
        fs::write(&path, bytes).map_err(|e| NptError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put(dir.join("report.json"), serde_json::to_string_pretty(report)?.as_bytes())?;
    put(dir.join("report.csv"), report_csv(report)?.as_bytes())?;
    for (name, svg) in report_svgs(report) {
        put(plots.join(name), svg.as_bytes())?;
    }
    let manifest = crate::manifest::Manifest::new("benchmark", cfg.hash(), cfg.seeds.clone())
        .with("config", serde_json::to_value(cfg)?);
    put(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(written)
}
