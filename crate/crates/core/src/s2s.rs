//! Generated cases: a sample `G` optimised to keep the source sample's
//! signal and environment curve while taking on the target sample's
//! sample-level noise, so that `(G, T)` differ only in environment noise.

use std::fs;
use std::path::Path;

use ndsig::{lbfgs_minimize, LbfgsConfig, Tape, Tensor1D, Var};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, FeatureLayer};
use crate::error::{NptError, Result};
use crate::nn::Trainable;
use crate::seed::rng_for;
use crate::spectra::{pair_d2d_cases, LabeledSpectrum, SpectralDataset, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GInit {
    /// Start from the source intensities.
    Source,
    /// Uniform noise over the source's value range.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleLossConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Layers whose Gram matrices are matched to the target, with weights.
    pub gram_layers: Vec<(FeatureLayer, f64)>,
    pub position_layer: FeatureLayer,
    /// Layer of the target position term; `None` uses `position_layer`.
    #[serde(default)]
    pub target_position_layer: Option<FeatureLayer>,
    /// Weight of the target position term inside the target loss.
    pub target_position_weight: f64,
    pub lbfgs_iters: usize,
    pub init: GInit,
    pub init_seed: u64,
}

impl Default for StyleLossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2e5,
            gram_layers: vec![(FeatureLayer::Conv1, 1.0), (FeatureLayer::Conv2, 0.2)],
            position_layer: FeatureLayer::Conv3,
            target_position_layer: None,
            target_position_weight: 1.0,
            lbfgs_iters: 150,
            init: GInit::Source,
            init_seed: 0,
        }
    }
}

impl StyleLossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) || self.alpha + self.beta == 0.0 {
            return Err(NptError::Config("alpha and beta must be non-negative and not both zero".into()));
        }
        if !ok(self.target_position_weight) || self.gram_layers.iter().any(|&(_, w)| !ok(w)) {
            return Err(NptError::Config("loss weights must be non-negative".into()));
        }
        if self.lbfgs_iters == 0 {
            return Err(NptError::Config("lbfgs_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn target_layer(&self) -> FeatureLayer {
        self.target_position_layer.unwrap_or(self.position_layer)
    }

    fn deepest(&self) -> FeatureLayer {
        self.gram_layers
            .iter()
            .map(|&(l, _)| l)
            .chain([self.position_layer, self.target_layer()])
            .max_by_key(|l| l.index())
            .expect("position layer present")
    }
}

/// Fixed feature targets for one `(S, T)` pair.
struct References {
    pos_source: Tensor1D,
    pos_target: Tensor1D,
    grams_target: Vec<Tensor1D>,
}

fn features(extractor: &ClassifierModel, x: &[f64], upto: FeatureLayer) -> Result<Vec<Tensor1D>> {
    let mut tape = Tape::new();
    let vars = extractor.register(&mut tape, false)?;
    let xv = tape.constant(Tensor1D::from_signal(x)?);
    let taps = extractor.forward_taps(&mut tape, &vars, xv, Some(upto))?;
    Ok(taps.blocks.iter().map(|&b| tape.value(b).clone()).collect())
}

fn references(extractor: &ClassifierModel, s: &[f64], t: &[f64], cfg: &StyleLossConfig) -> Result<References> {
    let deepest = cfg.deepest();
    let fs = features(extractor, s, deepest)?;
    let ft = features(extractor, t, deepest)?;
    let p = cfg.position_layer.index();
    Ok(References {
        pos_source: fs[p].clone(),
        pos_target: ft[cfg.target_layer().index()].clone(),
        grams_target: cfg
            .gram_layers
            .iter()
            .map(|&(l, _)| ndsig::GramMatrix::from_features(&ft[l.index()]).into_tensor())
            .collect(),
    })
}

/// Loss terms as vars on `tape`, given `G`'s block outputs.
struct LossVars {
    source: Var,
    target: Var,
    total: Var,
}

fn loss_vars(tape: &mut Tape, blocks: &[Var], refs: &References, cfg: &StyleLossConfig) -> Result<LossVars> {
    let fp = blocks[cfg.position_layer.index()];
    let ps = tape.constant(refs.pos_source.clone());
    let pt = tape.constant(refs.pos_target.clone());
    let source = tape.mse_sum(fp, ps)?;
    let pos_t = tape.mse_sum(blocks[cfg.target_layer().index()], pt)?;
    let mut target = tape.scale(pos_t, cfg.target_position_weight)?;
    for (&(layer, w), gram_t) in cfg.gram_layers.iter().zip(&refs.grams_target) {
        let f = blocks[layer.index()];
        let (p, m) = tape.value(f).shape();
        let g = tape.gram(f)?;
        let gt = tape.constant(gram_t.clone());
        let e = tape.mse_sum(g, gt)?;
        let norm = 4.0 * (p * p) as f64 * (m * m) as f64;
        let term = tape.scale(e, w / norm)?;
        target = tape.add(target, term)?;
    }
    let a = tape.scale(source, cfg.alpha)?;
    let b = tape.scale(target, cfg.beta)?;
    let total = tape.add(a, b)?;
    Ok(LossVars { source, target, total })
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(NptError::Invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// `(L_s, L_t, α·L_s + β·L_t)` at `g`, and optionally the gradient of the
/// total with respect to `g`.
pub fn loss_terms(
    g: &[f64],
    s: &[f64],
    t: &[f64],
    extractor: &ClassifierModel,
    cfg: &StyleLossConfig,
    with_grad: bool,
) -> Result<([f64; 3], Option<Vec<f64>>)> {
    check_lengths(g, s)?;
    check_lengths(g, t)?;
    let refs = references(extractor, s, t, cfg)?;
    eval_with_refs(g, &refs, extractor, cfg, with_grad)
}

fn eval_with_refs(
    g: &[f64],
    refs: &References,
    extractor: &ClassifierModel,
    cfg: &StyleLossConfig,
    with_grad: bool,
) -> Result<([f64; 3], Option<Vec<f64>>)> {
    let mut tape = Tape::new();
    let vars = extractor.register(&mut tape, false)?;
    let gv = tape.leaf(Tensor1D::from_signal(g)?, with_grad);
    let taps = extractor.forward_taps(&mut tape, &vars, gv, Some(cfg.deepest()))?;
    let lv = loss_vars(&mut tape, &taps.blocks, refs, cfg)?;
    let vals = [lv.source, lv.target, lv.total].map(|v| tape.value(v).item());
    if !with_grad || !vals[2].is_finite() {
        return Ok((vals, None));
    }
    tape.backward(lv.total)?;
    Ok((vals, Some(tape.grad(gv).expect("input gradient").to_vec())))
}

pub fn source_loss(g: &Spectrum, s: &Spectrum, extractor: &ClassifierModel, cfg: &StyleLossConfig) -> Result<f64> {
    Ok(loss_terms(g.values(), s.values(), s.values(), extractor, cfg, false)?.0[0])
}

pub fn target_loss(g: &Spectrum, t: &Spectrum, extractor: &ClassifierModel, cfg: &StyleLossConfig) -> Result<f64> {
    Ok(loss_terms(g.values(), t.values(), t.values(), extractor, cfg, false)?.0[1])
}

pub fn total_loss(
    g: &Spectrum,
    s: &Spectrum,
    t: &Spectrum,
    extractor: &ClassifierModel,
    cfg: &StyleLossConfig,
) -> Result<f64> {
    Ok(loss_terms(g.values(), s.values(), t.values(), extractor, cfg, false)?.0[2])
}

/// Gradient of the total loss with respect to `g`.
pub fn total_loss_grad(
    g: &[f64],
    s: &[f64],
    t: &[f64],
    extractor: &ClassifierModel,
    cfg: &StyleLossConfig,
) -> Result<(f64, Vec<f64>)> {
    let (v, grad) = loss_terms(g, s, t, extractor, cfg, true)?;
    let grad = grad.ok_or_else(|| NptError::Numeric("non-finite loss".into()))?;
    Ok((v[2], grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseProvenance {
    pub source_id: String,
    pub target_id: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub trajectory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct S2SCase {
    pub generated: Spectrum,
    pub target: LabeledSpectrum,
    pub provenance: CaseProvenance,
}

impl S2SCase {
    pub fn class(&self) -> usize {
        self.target.class
    }
}

/// Minimises the total loss over `G` with L-BFGS, starting from `S`.
/// Fails (the case is rejected) on non-finite iterates or if the loss
/// ends above where it started.
pub fn generate_s2s_case(
    source: &LabeledSpectrum,
    target: &LabeledSpectrum,
    extractor: &ClassifierModel,
    cfg: &StyleLossConfig,
) -> Result<S2SCase> {
    cfg.validate()?;
    let (s, t) = (source.spectrum.values(), target.spectrum.values());
    check_lengths(s, t)?;
    if source.class != target.class {
        return Err(NptError::Invalid(format!(
            "source class {} differs from target class {}",
            source.class, target.class
        )));
    }
    let refs = references(extractor, s, t, cfg)?;
    let g0: Vec<f64> = match cfg.init {
        GInit::Source => s.to_vec(),
        GInit::Random => {
            let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let mut rng = rng_for(cfg.init_seed, &["g-init", &source.id(), &target.id()]);
            (0..s.len()).map(|_| rng.gen_range(lo..=hi)).collect()
        }
    };
    let n = g0.len();
    let objective = |x: &[f64]| -> ndsig::Result<(f64, Vec<f64>)> {
        match eval_with_refs(x, &refs, extractor, cfg, true) {
            Ok((v, Some(g))) => Ok((v[2], g)),
            Ok((_, None)) => Ok((f64::NAN, vec![0.0; n])),
            Err(NptError::Engine(e)) => Err(e),
            Err(e) => Err(ndsig::EngineError::InvalidArgument(e.to_string())),
        }
    };
    let lcfg = LbfgsConfig::default().with_max_iters(cfg.lbfgs_iters);
    let out = lbfgs_minimize(objective, &g0, &lcfg).map_err(|e| {
        NptError::Numeric(format!("case {} -> {}: {e}", source.id(), target.id()))
    })?;
    if out.x.iter().any(|v| !v.is_finite()) || !out.value.is_finite() {
        return Err(NptError::Numeric(format!(
            "case {} -> {}: non-finite iterate",
            source.id(),
            target.id()
        )));
    }
    if out.value > out.initial_value {
        return Err(NptError::Numeric(format!(
            "case {} -> {}: final loss {} above initial {}",
            source.id(),
            target.id(),
            out.value,
            out.initial_value
        )));
    }
    Ok(S2SCase {
        generated: Spectrum::new(out.x)?,
        target: target.clone(),
        provenance: CaseProvenance {
            source_id: source.id(),
            target_id: target.id(),
            initial_loss: out.initial_value,
            final_loss: out.value,
            iterations: out.iterations,
            trajectory: out.trajectory,
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct S2SCaseBase {
    pub cases: Vec<S2SCase>,
    /// `(pair index, reason)` for every rejected pair.
    pub rejected: Vec<(usize, String)>,
}

/// One generated case per same-class pairing of `source` and `target`
/// samples over `classes`. Cases run in parallel; output follows pair
/// order.
pub fn build_s2s_casebase(
    source: &SpectralDataset,
    target: &SpectralDataset,
    classes: &[usize],
    extractor: &ClassifierModel,
    cfg: &StyleLossConfig,
    seed: u64,
) -> Result<S2SCaseBase> {
    cfg.validate()?;
    let pairs = pair_d2d_cases(source, target, classes, seed)?;
    let results: Vec<Result<S2SCase>> = pairs
        .par_iter()
        .map(|p| generate_s2s_case(&p.source, &p.target, extractor, cfg))
        .collect();
    let mut base = S2SCaseBase {
        cases: Vec::with_capacity(results.len()),
        rejected: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => base.cases.push(c),
            Err(e @ NptError::Numeric(_)) => {
                log::warn!("rejected generated case {i}: {e}");
                base.rejected.push((i, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if base.cases.is_empty() {
        return Err(NptError::Numeric(format!(
            "all {} generated cases were rejected",
            base.rejected.len()
        )));
    }
    Ok(base)
}

pub const CASES_FILE: &str = "cases.csv";
pub const CASEBASE_MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseBaseManifest {
    pub source_environment: String,
    pub target_environment: String,
    #[serde(rename = "W")]
    pub bins: usize,
    pub classes: Vec<usize>,
    pub seed: u64,
    pub extractor_sha256: String,
    pub config: StyleLossConfig,
    pub cases: Vec<CaseProvenance>,
    pub rejected: Vec<(usize, String)>,
}

/// Writes `cases.csv` (a `G` row and a `T` row per case) and a manifest.
pub fn save_casebase(base: &S2SCaseBase, manifest: &CaseBaseManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NptError::io(dir, e))?;
    let path = dir.join(CASES_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["case".to_string(), "role".into(), "class".into(), "sample_id".into()];
    header.extend((0..manifest.bins).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for (i, c) in base.cases.iter().enumerate() {
        for (role, id, values) in [
            ("G", &c.provenance.source_id, c.generated.values()),
            ("T", &c.provenance.target_id, c.target.spectrum.values()),
        ] {
            let mut row = vec![i.to_string(), role.to_string(), c.class().to_string(), id.clone()];
            row.extend(values.iter().map(|&v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| NptError::io(&path, e))?;
    let mpath = dir.join(CASEBASE_MANIFEST);
    fs::write(&mpath, serde_json::to_string_pretty(manifest)?).map_err(|e| NptError::io(&mpath, e))?;
    Ok(())
}

/// `(G, T, class)` triples from a saved case-base.
pub fn load_casebase(dir: &Path) -> Result<(CaseBaseManifest, Vec<(Spectrum, Spectrum, usize)>)> {
    let mpath = dir.join(CASEBASE_MANIFEST);
    let path = dir.join(CASES_FILE);
    for p in [&mpath, &path] {
        if !p.exists() {
            return Err(NptError::Missing(p.clone()));
        }
    }
    let text = fs::read_to_string(&mpath).map_err(|e| NptError::io(&mpath, e))?;
    let manifest: CaseBaseManifest =
        serde_json::from_str(&text).map_err(|e| NptError::format(&mpath, e.to_string()))?;
    let mut reader = csv::Reader::from_path(&path)?;
    let mut rows: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != manifest.bins + 4 {
            return Err(NptError::format(&path, "row length does not match W"));
        }
        let class = rec[2].parse().map_err(|_| NptError::format(&path, "bad class"))?;
        let values = rec
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|_| NptError::format(&path, format!("not a number: {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((rec[1].to_string(), class, values));
    }
    if rows.len() % 2 != 0 {
        return Err(NptError::format(&path, "unpaired case rows"));
    }
    let mut out = Vec::with_capacity(rows.len() / 2);
    for pair in rows.chunks(2) {
        let [(r0, c, g), (r1, _, t)] = pair else { unreachable!() };
        if r0 != "G" || r1 != "T" {
            return Err(NptError::format(&path, "expected a G row followed by a T row"));
        }
        out.push((Spectrum::new(g.clone())?, Spectrum::new(t.clone())?, *c));
    }
    Ok((manifest, out))
}
