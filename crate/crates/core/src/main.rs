use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use npt::baselines::{d2d_pairs, denoise_dataset, wavelet_transfer, PipelineSettings};
use npt::bench::{
    cell_seed, class_subset, data_seed, emit_report, pair_key, run_benchmark, split_pools, BenchmarkConfig,
    BenchmarkReport, Profile,
};
use npt::classifier::{train_classifier, ClassifierModel, FeatureLayer};
use npt::cnpt::{train_ae, train_cnpt, TransferPair};
use npt::manifest::Manifest;
use npt::modelfile::{load_ae, load_classifier, load_cnpt, read_model_file, save_ae, save_classifier, save_cnpt};
use npt::s2s::{build_s2s_casebase, load_casebase, save_casebase, CaseBaseManifest};
use npt::seed::{derive_seed, sha256_hex};
use npt::spectra::{generate_synthetic_dataset, load_dataset, save_dataset, SpectralDataset, Spectrum, SAMPLES_FILE};
use npt::wavelet::wavelet_denoise;
use npt::{NptError, Result};

const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "npt", version, about = "Generated-case noise-pattern transfer for 1D spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Benchmark configuration (JSON). Defaults to the selected profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    profile: Option<Profile>,
    #[arg(long, global = true, default_value = "npt-out")]
    out: PathBuf,
    /// Comma-separated seed list; single-run commands use the first.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Transfer direction as `SOURCE:TARGET`.
    #[arg(long, global = true)]
    direction: Option<String>,
    #[arg(long, global = true)]
    ratio: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic environments named by the directions.
    SynthData,
    /// Train the target analysis model and the pair feature extractor.
    TrainClassifier,
    /// Build the generated case-base for one direction and ratio.
    GenCases,
    /// Train the transfer network and the autoencoder on generated cases.
    TrainCnpt,
    /// Train the raw-pair network, the autoencoder and the wavelet pipeline.
    TrainBaselines,
    /// Apply a transfer model to a dataset.
    Transfer {
        /// Model file; defaults to the generated-case network of the cell.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset directory; defaults to the source evaluation pool.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Accuracy of every trained method on the source evaluation pool.
    Evaluate {
        /// Also score this dataset directory with the analysis model.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the full matrix and write report.json, report.csv and plots.
    Benchmark,
    /// Re-emit the CSV and plots from an existing report.json.
    Report,
    /// Gram matrices of the initial, target and final state of each case.
    InspectFeatures {
        #[arg(long, default_value = "conv1")]
        layer: FeatureLayer,
    },
}

struct Run {
    cfg: BenchmarkConfig,
    out: PathBuf,
}

struct Cell {
    seed: u64,
    source: String,
    target: String,
    ratio: f64,
}

impl Cell {
    fn tag(&self) -> String {
        format!("{}-{}-r{}", self.source, self.target, (self.ratio * 100.0).round())
    }

    fn seed_dir(&self, out: &Path, stage: &str) -> PathBuf {
        out.join(stage).join(format!("seed-{}", self.seed))
    }

    fn cell_dir(&self, out: &Path, stage: &str) -> PathBuf {
        self.seed_dir(out, stage).join(self.tag())
    }
}

fn resolve_config(cli: &Cli) -> Result<BenchmarkConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = BenchmarkConfig::load(path)?;
            if let Some(p) = cli.profile.filter(|&p| p != cfg.profile) {
                return Err(NptError::Config(format!(
                    "--profile {p:?} disagrees with the configuration file ({:?})",
                    cfg.profile
                )));
            }
            cfg
        }
        None => BenchmarkConfig::for_profile(cli.profile.unwrap_or(Profile::Desk)),
    };
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(d) = &cli.direction {
        let (s, t) = d
            .split_once(':')
            .ok_or_else(|| NptError::Config(format!("direction {d:?} is not SOURCE:TARGET")))?;
        cfg.directions = vec![(s.to_string(), t.to_string())];
    }
    if let Some(r) = cli.ratio {
        cfg.ratios = vec![r];
    }
    cfg.validate()?;
    Ok(cfg)
}

impl Run {
    fn cell(&self) -> Cell {
        let (s, t) = &self.cfg.directions[0];
        Cell {
            seed: self.cfg.seeds[0],
            source: s.clone(),
            target: t.clone(),
            ratio: self.cfg.ratios[0],
        }
    }

    fn manifest(&self, artifact: &str, seed: u64) -> Manifest {
        Manifest::new(artifact, self.cfg.hash(), vec![seed])
    }

    fn data(&self, seed: u64, env: &str) -> Result<SpectralDataset> {
        load_dataset(&self.out.join("data").join(format!("seed-{seed}")).join(env))
    }

    /// `(method, eval)` pools of one environment.
    fn pools(&self, seed: u64, env: &str) -> Result<(SpectralDataset, SpectralDataset)> {
        Ok(split_pools(&self.data(seed, env)?, self.cfg.eval_fraction, seed))
    }

    fn classifier_path(&self, cell: &Cell, name: &str) -> PathBuf {
        cell.seed_dir(&self.out, "classifiers").join(format!("{name}.nptm"))
    }

    fn analysis_path(&self, cell: &Cell) -> PathBuf {
        self.classifier_path(cell, &format!("analysis-{}", cell.target))
    }

    fn extractor_path(&self, cell: &Cell) -> PathBuf {
        let (a, b) = pair_key(&cell.source, &cell.target);
        self.classifier_path(cell, &format!("extractor-{a}-{b}"))
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| NptError::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| NptError::io(path, e))
}

fn synth_data(run: &Run) -> Result<()> {
    let mut envs: Vec<&str> = run.cfg.directions.iter().flat_map(|(s, t)| [s.as_str(), t.as_str()]).collect();
    envs.sort();
    envs.dedup();
    for &seed in &run.cfg.seeds {
        let dir = run.out.join("data").join(format!("seed-{seed}"));
        let mut sums = serde_json::Map::new();
        for env in &envs {
            let ds = generate_synthetic_dataset(&run.cfg.synthetic, env, data_seed(seed))?;
            let edir = dir.join(env);
            save_dataset(&ds, &edir)?;
            let path = edir.join(SAMPLES_FILE);
            let bytes = fs::read(&path).map_err(|e| NptError::io(&path, e))?;
            let sum = sha256_hex(&bytes);
            println!("{}\t{sum}", edir.display());
            sums.insert(env.to_string(), json!(sum));
        }
        run.manifest("synthetic-data", seed)
            .with("samples_sha256", serde_json::Value::Object(sums))
            .write(&dir)?;
    }
    Ok(())
}

fn train_classifiers(run: &Run) -> Result<()> {
    let cell = run.cell();
    let m = &run.cfg.models;
    let (src_method, _) = run.pools(cell.seed, &cell.source)?;
    let (tgt_method, _) = run.pools(cell.seed, &cell.target)?;

    let seed = derive_seed(cell.seed, &["analysis", &cell.target]);
    let (analysis, a_report) = train_classifier(&tgt_method.samples, &m.classifier_arch, &m.classifier_hyper, seed)?;
    let a_sha = save_classifier(&analysis, "analysis", seed, &run.analysis_path(&cell))?;
    log::info!("analysis model: validation accuracy {:.4}", a_report.validation_accuracy);

    let (a, b) = pair_key(&cell.source, &cell.target);
    let mut samples = src_method.samples.clone();
    if a != b {
        samples.extend(tgt_method.samples.iter().cloned());
    }
    let ex_seed = derive_seed(cell.seed, &["extractor", &a, &b]);
    let (extractor, e_report) = train_classifier(&samples, &m.classifier_arch, &m.extractor_hyper, ex_seed)?;
    let e_sha = save_classifier(&extractor, "extractor", ex_seed, &run.extractor_path(&cell))?;
    log::info!("feature extractor: validation accuracy {:.4}", e_report.validation_accuracy);

    run.manifest("classifiers", cell.seed)
        .with("analysis", json!({ "target": cell.target, "sha256": a_sha, "report": a_report }))
        .with("extractor", json!({ "pair": [a, b], "sha256": e_sha, "report": e_report }))
        .write(&cell.seed_dir(&run.out, "classifiers"))
}

fn gen_cases(run: &Run) -> Result<()> {
    let cell = run.cell();
    let classes = class_subset(cell.ratio, run.cfg.synthetic.classes)?;
    let (src, _) = run.pools(cell.seed, &cell.source)?;
    let (tgt, _) = run.pools(cell.seed, &cell.target)?;
    let src = src.filter_classes(&classes);
    let tgt = tgt.filter_classes(&classes);
    let (extractor, _, ex_sha) = load_classifier(&run.extractor_path(&cell))?;
    let cseed = cell_seed(cell.seed, &cell.source, &cell.target, cell.ratio);
    let base = build_s2s_casebase(&src, &tgt, &classes, &extractor, &run.cfg.models.style, cseed)?;
    let stats = npt::bench::case_stats(&base, &src);
    let dir = cell.cell_dir(&run.out, "cases");
    let manifest = CaseBaseManifest {
        source_environment: cell.source.clone(),
        target_environment: cell.target.clone(),
        bins: src.bins,
        classes: classes.clone(),
        seed: cseed,
        extractor_sha256: ex_sha,
        config: run.cfg.models.style.clone(),
        cases: base.cases.iter().map(|c| c.provenance.clone()).collect(),
        rejected: base.rejected.clone(),
    };
    save_casebase(&base, &manifest, &dir.join("casebase"))?;
    println!(
        "{} cases, {} rejected, oracle wins {:.1}%",
        base.cases.len(),
        base.rejected.len(),
        100.0 * stats.oracle_win_fraction.unwrap_or(f64::NAN)
    );
    run.manifest("case-base", cell.seed)
        .with("cell", json!(cell.tag()))
        .with("stats", serde_json::to_value(&stats)?)
        .write(&dir)
}

fn case_pairs(run: &Run, cell: &Cell) -> Result<Vec<TransferPair>> {
    let (_, cases) = load_casebase(&cell.cell_dir(&run.out, "cases").join("casebase"))?;
    Ok(cases.into_iter().map(|(g, t, _)| TransferPair { input: g, target: t }).collect())
}

fn train_cnpt_cmd(run: &Run) -> Result<()> {
    let cell = run.cell();
    let m = &run.cfg.models;
    let pairs = case_pairs(run, &cell)?;
    let cseed = cell_seed(cell.seed, &cell.source, &cell.target, cell.ratio);
    let net_seed = derive_seed(cseed, &["transfer-net"]);
    let ae_seed = derive_seed(cseed, &["ae"]);
    let dir = cell.cell_dir(&run.out, "cnpt");
    let (model, report) = train_cnpt(&pairs, &m.cnpt_arch, &m.cnpt_hyper, net_seed)?;
    let sha = save_cnpt(&model, "cnpt", net_seed, &dir.join("cnpt.nptm"))?;
    let (ae, ae_report) = train_ae(&pairs, &m.ae_arch, &m.ae_hyper, ae_seed)?;
    let ae_sha = save_ae(&ae, "gc-ae", ae_seed, &dir.join("gc-ae.nptm"))?;
    println!("best validation loss {:.6} at epoch {}", report.best_validation_loss, report.best_epoch);
    run.manifest("transfer-networks", cell.seed)
        .with("cell", json!(cell.tag()))
        .with("cnpt", json!({ "sha256": sha, "report": report }))
        .with("gc_ae", json!({ "sha256": ae_sha, "report": ae_report }))
        .write(&dir)
}

fn train_baselines(run: &Run) -> Result<()> {
    let cell = run.cell();
    let m = &run.cfg.models;
    let classes = class_subset(cell.ratio, run.cfg.synthetic.classes)?;
    let (src, _) = run.pools(cell.seed, &cell.source)?;
    let (tgt_all, _) = run.pools(cell.seed, &cell.target)?;
    let src = src.filter_classes(&classes);
    let tgt = tgt_all.filter_classes(&classes);
    let cseed = cell_seed(cell.seed, &cell.source, &cell.target, cell.ratio);
    let dir = cell.cell_dir(&run.out, "baselines");

    let pairs = d2d_pairs(&src, &tgt, &classes, cseed)?;
    let net_seed = derive_seed(cseed, &["transfer-net"]);
    let (dncnn, d_report) = train_cnpt(&pairs, &m.cnpt_arch, &m.cnpt_hyper, net_seed)?;
    let d_sha = save_cnpt(&dncnn, "dncnn", net_seed, &dir.join("dncnn.nptm"))?;
    let ae_seed = derive_seed(cseed, &["ae"]);
    let (ae, ae_report) = train_ae(&pairs, &m.ae_arch, &m.ae_hyper, ae_seed)?;
    let ae_sha = save_ae(&ae, "ae", ae_seed, &dir.join("ae.nptm"))?;

    let wa_seed = derive_seed(cell.seed, &["wavelet-analysis", &cell.target]);
    let denoised = denoise_dataset(&tgt_all, &m.wavelet)?;
    let (wa, wa_report) = train_classifier(&denoised.samples, &m.classifier_arch, &m.classifier_hyper, wa_seed)?;
    let settings = PipelineSettings {
        wavelet: &m.wavelet,
        classifier_arch: &m.classifier_arch,
        classifier_hyper: &m.classifier_hyper,
        cnpt_arch: &m.cnpt_arch,
        cnpt_hyper: &m.cnpt_hyper,
    };
    let w_seed = derive_seed(cseed, &["wavelet"]);
    let (pipeline, w_report) = wavelet_transfer(&src, &tgt, &classes, wa, &settings, w_seed)?;
    let wa_sha = save_classifier(&pipeline.analysis, "wavelet-analysis", wa_seed, &dir.join("wavelet-analysis.nptm"))?;
    let wt_sha = save_cnpt(&pipeline.transfer, "wavelet-cnpt", w_seed, &dir.join("wavelet-cnpt.nptm"))?;

    run.manifest("baselines", cell.seed)
        .with("cell", json!(cell.tag()))
        .with("dncnn", json!({ "sha256": d_sha, "report": d_report }))
        .with("ae", json!({ "sha256": ae_sha, "report": ae_report }))
        .with("wavelet", json!({
            "config": m.wavelet,
            "analysis_sha256": wa_sha,
            "analysis_report": wa_report,
            "transfer_sha256": wt_sha,
            "transfer_report": w_report,
        }))
        .write(&dir)
}

/// A loaded transfer model of any kind.
enum Transfer {
    Residual(npt::cnpt::CnptModel),
    Wavelet(npt::cnpt::CnptModel, npt::wavelet::WaveletConfig),
    Ae(npt::cnpt::AeModel),
}

impl Transfer {
    fn load(path: &Path, wavelet: &npt::wavelet::WaveletConfig) -> Result<(Self, String)> {
        let (header, _, _) = read_model_file(path)?;
        Ok(match header.role.as_str() {
            "cnpt" | "dncnn" => {
                let (m, _, sha) = load_cnpt(path)?;
                (Transfer::Residual(m), sha)
            }
            "wavelet-cnpt" => {
                let (m, _, sha) = load_cnpt(path)?;
                (Transfer::Wavelet(m, wavelet.clone()), sha)
            }
            "ae" | "gc-ae" => {
                let (m, _, sha) = load_ae(path)?;
                (Transfer::Ae(m), sha)
            }
            other => return Err(NptError::format(path, format!("{other:?} is not a transfer model"))),
        })
    }

    fn apply(&self, s: &Spectrum) -> Result<Spectrum> {
        match self {
            Transfer::Residual(m) => m.transfer(s),
            Transfer::Wavelet(m, w) => m.transfer(&wavelet_denoise(s, w)?),
            Transfer::Ae(m) => m.transfer(s),
        }
    }

    fn apply_dataset(&self, ds: &SpectralDataset) -> Result<SpectralDataset> {
        use rayon::prelude::*;
        let spectra = ds.samples.par_iter().map(|s| self.apply(&s.spectrum)).collect::<Result<Vec<_>>>()?;
        let mut out = ds.clone();
        for (s, v) in out.samples.iter_mut().zip(spectra) {
            s.spectrum = v;
            s.ground_truth = None;
        }
        Ok(out)
    }
}

fn transfer_cmd(run: &Run, model: Option<&Path>, input: Option<&Path>) -> Result<()> {
    let cell = run.cell();
    let model = model.map(Path::to_path_buf).unwrap_or_else(|| cell.cell_dir(&run.out, "cnpt").join("cnpt.nptm"));
    let (t, sha) = Transfer::load(&model, &run.cfg.models.wavelet)?;
    let ds = match input {
        Some(p) => load_dataset(p)?,
        None => run.pools(cell.seed, &cell.source)?.1,
    };
    let out = t.apply_dataset(&ds)?;
    let name = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let dir = cell.cell_dir(&run.out, "transfer").join(name);
    save_dataset(&out, &dir.join("dataset"))?;
    println!("{} spectra written to {}", out.len(), dir.join("dataset").display());
    run.manifest("transferred-dataset", cell.seed)
        .with("model", json!({ "path": model, "sha256": sha }))
        .with("input", json!(input.map(|p| p.display().to_string()).unwrap_or_else(|| "source evaluation pool".into())))
        .write(&dir)
}

fn evaluate(run: &Run, input: Option<&Path>) -> Result<()> {
    let cell = run.cell();
    let (analysis, _, _) = load_classifier(&run.analysis_path(&cell))?;
    let (_, src_eval) = run.pools(cell.seed, &cell.source)?;
    let (_, tgt_eval) = run.pools(cell.seed, &cell.target)?;
    let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
    acc.insert("D_S", analysis.accuracy(&src_eval.samples)?);
    acc.insert("D_T", analysis.accuracy(&tgt_eval.samples)?);
    let score = |model: &ClassifierModel, t: &Transfer| -> Result<f64> {
        model.accuracy(&t.apply_dataset(&src_eval)?.samples)
    };
    let candidates = [
        ("GC-DnCNN", cell.cell_dir(&run.out, "cnpt").join("cnpt.nptm")),
        ("GC-AE", cell.cell_dir(&run.out, "cnpt").join("gc-ae.nptm")),
        ("DnCNN", cell.cell_dir(&run.out, "baselines").join("dncnn.nptm")),
        ("AE", cell.cell_dir(&run.out, "baselines").join("ae.nptm")),
    ];
    for (name, path) in candidates {
        if path.exists() {
            let (t, _) = Transfer::load(&path, &run.cfg.models.wavelet)?;
            acc.insert(name, score(&analysis, &t)?);
        } else {
            log::info!("{name}: {} not found, skipped", path.display());
        }
    }
    let bdir = cell.cell_dir(&run.out, "baselines");
    let (wa_path, wt_path) = (bdir.join("wavelet-analysis.nptm"), bdir.join("wavelet-cnpt.nptm"));
    if wa_path.exists() && wt_path.exists() {
        let (wa, _, _) = load_classifier(&wa_path)?;
        let (t, _) = Transfer::load(&wt_path, &run.cfg.models.wavelet)?;
        acc.insert("Wavelet", score(&wa, &t)?);
    }
    if let Some(p) = input {
        acc.insert("input", analysis.accuracy(&load_dataset(p)?.samples)?);
    }
    for (k, v) in &acc {
        println!("{k}\t{:.2}", 100.0 * v);
    }
    let dir = cell.cell_dir(&run.out, "eval");
    write_json(&dir.join("accuracy.json"), &serde_json::to_value(&acc)?)?;
    run.manifest("evaluation", cell.seed).with("cell", json!(cell.tag())).write(&dir)
}

fn benchmark(run: &Run) -> Result<()> {
    let report = run_benchmark(&run.cfg)?;
    for p in emit_report(&report, &run.cfg, &run.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn report(run: &Run) -> Result<()> {
    let path = run.out.join("report.json");
    if !path.exists() {
        return Err(NptError::Missing(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| NptError::io(&path, e))?;
    let report: BenchmarkReport = serde_json::from_str(&text).map_err(|e| NptError::format(&path, e.to_string()))?;
    for p in emit_report(&report, &run.cfg, &run.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn inspect_features(run: &Run, layer: FeatureLayer) -> Result<()> {
    let cell = run.cell();
    let (extractor, _, _) = load_classifier(&run.extractor_path(&cell))?;
    let (manifest, cases) = load_casebase(&cell.cell_dir(&run.out, "cases").join("casebase"))?;
    let source = run.data(cell.seed, &cell.source)?;
    let by_id: BTreeMap<String, &Spectrum> = source.samples.iter().map(|s| (s.id(), &s.spectrum)).collect();
    let dir = cell.cell_dir(&run.out, "inspect");
    fs::create_dir_all(&dir).map_err(|e| NptError::io(&dir, e))?;
    let path = dir.join(format!("gram-{}.csv", layer.tag()));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["case", "state", "row", "col", "value"])?;
    for (i, ((g, t, _), prov)) in cases.iter().zip(&manifest.cases).enumerate() {
        let initial = by_id
            .get(&prov.source_id)
            .ok_or_else(|| NptError::Invalid(format!("source sample {} not in the dataset", prov.source_id)))?;
        for (state, s) in [("initial", *initial), ("target", t), ("final", g)] {
            let gram = ndsig::GramMatrix::from_features(&extractor.extract_features(s, layer)?);
            let c = gram.channels();
            for r in 0..c {
                for k in 0..c {
                    w.write_record([i.to_string(), state.to_string(), r.to_string(), k.to_string(), format!("{:.12e}", gram.get(r, k))])?;
                }
            }
        }
    }
    w.flush().map_err(|e| NptError::io(&path, e))?;
    println!("{}", path.display());
    run.manifest("gram-inspection", cell.seed)
        .with("cell", json!(cell.tag()))
        .with("layer", json!(layer.tag()))
        .write(&dir)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let run = Run {
        cfg: resolve_config(cli)?,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::SynthData => synth_data(&run),
        Command::TrainClassifier => train_classifiers(&run),
        Command::GenCases => gen_cases(&run),
        Command::TrainCnpt => train_cnpt_cmd(&run),
        Command::TrainBaselines => train_baselines(&run),
        Command::Transfer { model, input } => transfer_cmd(&run, model.as_deref(), input.as_deref()),
        Command::Evaluate { input } => evaluate(&run, input.as_deref()),
        Command::Benchmark => benchmark(&run),
        Command::Report => report(&run),
        Command::InspectFeatures { layer } => inspect_features(&run, *layer),
    }
}

fn init_threads() {
    let Ok(v) = std::env::var("NPT_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("NPT_THREADS ignored: {e}");
            }
        }
        _ => log::warn!("NPT_THREADS={v:?} is not a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
