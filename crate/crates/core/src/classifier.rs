//! Four-block 1D CNN used both as the frozen feature extractor for case
//! generation and as the concentration-class analysis model.

use ndsig::{ConvLayerParams, Tape, Tensor1D, Var};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NptError, Result};
use crate::nn::{conv, conv_shapes, fit, stratified_split, BlockShape, FitConfig, Trainable};
use crate::seed::rng_for;
use crate::spectra::{LabeledSpectrum, Spectrum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub channels: [usize; 4],
    pub pools: [usize; 4],
    pub kernel: usize,
    pub classes: usize,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        Self {
            channels: [16, 32, 64, 64],
            pools: [5, 5, 2, 2],
            kernel: 7,
            classes: 10,
        }
    }
}

impl ClassifierArch {
    /// Shortest input that survives every pooling stage.
    pub fn min_input_len(&self) -> usize {
        self.pools.iter().product()
    }

    /// Receptive field in input bins of one position of each block output.
    pub fn receptive_fields(&self) -> [usize; 4] {
        let mut rf = 1;
        let mut jump = 1;
        let mut out = [0; 4];
        for (b, &p) in self.pools.iter().enumerate() {
            rf += (self.kernel - 1) * jump;
            rf += (p - 1) * jump;
            jump *= p;
            out[b] = rf;
        }
        out
    }
}

/// Block outputs that can be tapped for features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLayer {
    Conv1,
    Conv2,
    Conv3,
}

impl FeatureLayer {
    pub fn index(self) -> usize {
        match self {
            FeatureLayer::Conv1 => 0,
            FeatureLayer::Conv2 => 1,
            FeatureLayer::Conv3 => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        ["conv1", "conv2", "conv3"][self.index()]
    }
}

impl std::str::FromStr for FeatureLayer {
    type Err = NptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv1" => Ok(FeatureLayer::Conv1),
            "conv2" => Ok(FeatureLayer::Conv2),
            "conv3" => Ok(FeatureLayer::Conv3),
            other => Err(NptError::Invalid(format!("unknown feature layer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub arch: ClassifierArch,
    pub convs: Vec<ConvLayerParams>,
    pub dense_weight: Vec<f64>,
    pub dense_bias: Vec<f64>,
}

impl Trainable for ClassifierModel {
    fn block_shapes(&self) -> Vec<BlockShape> {
        let mut s: Vec<BlockShape> = self
            .convs
            .iter()
            .enumerate()
            .flat_map(|(i, p)| conv_shapes(&format!("conv{}", i + 1), p))
            .collect();
        let c = self.arch.channels[3];
        s.push(BlockShape::new("dense.weight", self.arch.classes, c));
        s.push(BlockShape::new("dense.bias", self.arch.classes, 1));
        s
    }

    fn block_values(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for p in &self.convs {
            v.push(&p.weights);
            v.push(&p.bias);
        }
        v.push(&self.dense_weight);
        v.push(&self.dense_bias);
        v
    }

    fn block_values_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for p in &mut self.convs {
            v.push(&mut p.weights);
            v.push(&mut p.bias);
        }
        v.push(&mut self.dense_weight);
        v.push(&mut self.dense_bias);
        v
    }
}

/// Registered block outputs and logits of one forward pass.
pub struct Taps {
    pub blocks: Vec<Var>,
    pub logits: Option<Var>,
}

impl ClassifierModel {
    pub fn new(arch: ClassifierArch, seed: u64) -> Result<Self> {
        if arch.kernel % 2 == 0 || arch.classes < 2 || arch.pools.contains(&0) {
            return Err(NptError::Config("invalid classifier architecture".into()));
        }
        let mut rng = rng_for(seed, &["classifier-init"]);
        let mut convs = Vec::with_capacity(4);
        let mut cin = 1;
        for &c in &arch.channels {
            convs.push(ConvLayerParams::he_uniform(cin, c, arch.kernel, &mut rng)?);
            cin = c;
        }
        let bound = (6.0 / cin as f64).sqrt();
        let dense_weight = (0..arch.classes * cin).map(|_| rng.gen_range(-bound..bound)).collect();
        Ok(Self {
            dense_bias: vec![0.0; arch.classes],
            arch,
            convs,
            dense_weight,
        })
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len < self.arch.min_input_len() {
            return Err(NptError::Invalid(format!(
                "spectrum of length {len} is shorter than the classifier minimum {}",
                self.arch.min_input_len()
            )));
        }
        Ok(())
    }

    /// Runs the network on `x` with parameters already registered as
    /// `vars`, stopping after block `upto` if given.
    pub fn forward_taps(&self, tape: &mut Tape, vars: &[Var], x: Var, upto: Option<FeatureLayer>) -> Result<Taps> {
        self.check_input(tape.value(x).length())?;
        let last = upto.map_or(3, FeatureLayer::index);
        let mut h = x;
        let mut blocks = Vec::with_capacity(4);
        for b in 0..=last {
            h = conv(tape, h, &vars[2 * b..2 * b + 2], &self.convs[b], 1)?;
            h = tape.relu(h)?;
            h = tape.max_pool1d(h, self.arch.pools[b])?;
            blocks.push(h);
        }
        let logits = if upto.is_none() {
            let g = tape.global_avg_pool(h)?;
            Some(tape.dense(g, vars[8], vars[9])?)
        } else {
            None
        };
        Ok(Taps { blocks, logits })
    }

    pub fn logits(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false)?;
        let x = tape.constant(Tensor1D::from_signal(spectrum.values())?);
        let taps = self.forward_taps(&mut tape, &vars, x, None)?;
        Ok(tape.value(taps.logits.expect("full forward")).data().to_vec())
    }

    /// Argmax of the logits; the lowest index wins ties.
    pub fn classify(&self, spectrum: &Spectrum) -> Result<usize> {
        let z = self.logits(spectrum)?;
        let mut best = 0;
        for (i, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Fraction of samples classified correctly.
    pub fn accuracy(&self, samples: &[LabeledSpectrum]) -> Result<f64> {
        if samples.is_empty() {
            return Err(NptError::Invalid("accuracy of an empty set".into()));
        }
        let hits = samples
            .par_iter()
            .map(|s| self.classify(&s.spectrum).map(|c| usize::from(c == s.class)))
            .collect::<Result<Vec<usize>>>()?;
        Ok(hits.iter().sum::<usize>() as f64 / samples.len() as f64)
    }

    pub fn extract_features(&self, spectrum: &Spectrum, layer: FeatureLayer) -> Result<Tensor1D> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false)?;
        let x = tape.constant(Tensor1D::from_signal(spectrum.values())?);
        let taps = self.forward_taps(&mut tape, &vars, x, Some(layer))?;
        Ok(tape.value(taps.blocks[layer.index()]).clone())
    }

    pub fn all_finite(&self) -> bool {
        self.block_values().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHyper {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub validation_fraction: f64,
}

impl Default for ClassifierHyper {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 200,
            lr: 3e-4,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub loss_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub seed: u64,
}

/// Softmax cross-entropy training with Adam on a class-stratified split.
/// Returns the parameters from the epoch with the best validation accuracy.
pub fn train_classifier(
    samples: &[LabeledSpectrum],
    arch: &ClassifierArch,
    hyper: &ClassifierHyper,
    seed: u64,
) -> Result<(ClassifierModel, TrainReport)> {
    let mut classes: Vec<usize> = samples.iter().map(|s| s.class).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(NptError::Invalid(format!(
            "classifier training needs at least two classes, found {}",
            classes.len()
        )));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= arch.classes) {
        return Err(NptError::Invalid(format!("class label {c} exceeds the {} outputs", arch.classes)));
    }
    let len = samples[0].spectrum.len();
    if samples.iter().any(|s| s.spectrum.len() != len) {
        return Err(NptError::Invalid("training spectra differ in length".into()));
    }
    let mut model = ClassifierModel::new(arch.clone(), seed)?;
    model.check_input(len)?;

    let groups: Vec<usize> = samples.iter().map(|s| s.class).collect();
    let (tr_idx, va_idx) = stratified_split(&groups, hyper.validation_fraction, seed, "classifier");
    let train: Vec<LabeledSpectrum> = tr_idx.iter().map(|&i| samples[i].clone()).collect();
    let val: Vec<LabeledSpectrum> = va_idx.iter().map(|&i| samples[i].clone()).collect();
    let val_set = if val.is_empty() { &train } else { &val };

    let cfg = FitConfig {
        epochs: hyper.epochs,
        batch_size: hyper.batch_size,
        lr: hyper.lr,
        seed,
        chunk: None,
        stream: "classifier",
    };
    let outcome = fit(
        &mut model,
        &train,
        &cfg,
        |m, tape, vars, items| {
            let mut total: Option<Var> = None;
            for s in items {
                let x = tape.constant(Tensor1D::from_signal(s.spectrum.values())?);
                let taps = m.forward_taps(tape, vars, x, None)?;
                let l = tape.softmax_cross_entropy(taps.logits.expect("full forward"), s.class)?;
                total = Some(match total {
                    Some(t) => tape.add(t, l)?,
                    None => l,
                });
            }
            Ok(total.expect("non-empty chunk"))
        },
        |m| m.accuracy(val_set),
    )?;
    let report = TrainReport {
        train_accuracy: model.accuracy(&train)?,
        validation_accuracy: outcome.best_score,
        loss_curve: outcome.epoch_losses,
        validation_curve: outcome.val_scores,
        epochs_run: hyper.epochs,
        best_epoch: outcome.best_epoch,
        seed,
    };
    Ok((model, report))
}
