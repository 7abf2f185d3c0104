//! Noise-pattern transfer networks: a deep residual CNN that estimates the
//! environment-noise difference of an input, and a small convolutional
//! autoencoder that maps inputs to targets directly.

use ndsig::{ConvLayerParams, Tape, Tensor1D, Var};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NptError, Result};
use crate::nn::{conv, conv_shapes, fit, stratified_split, BlockShape, FitConfig, Trainable};
use crate::seed::rng_for;
use crate::spectra::Spectrum;

/// An `(input, target)` training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferPair {
    pub input: Spectrum,
    pub target: Spectrum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferHyper {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub validation_fraction: f64,
}

impl Default for TransferHyper {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 100,
            lr: 1e-3,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub loss_curve: Vec<f64>,
    /// Mean validation loss per epoch.
    pub validation_curve: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub train_cases: usize,
    pub validation_cases: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnptArch {
    pub depth: usize,
    pub width: usize,
    pub kernel: usize,
    pub batch_norm: bool,
}

impl Default for CnptArch {
    fn default() -> Self {
        Self {
            depth: 17,
            width: 64,
            kernel: 7,
            batch_norm: false,
        }
    }
}

/// Per-channel affine normalisation with population statistics for
/// inference.
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnptModel {
    pub arch: CnptArch,
    pub layers: Vec<ConvLayerParams>,
    /// One entry per hidden layer when batch normalisation is enabled.
    pub norms: Vec<NormParams>,
    pub train_len: Option<usize>,
}

impl Trainable for CnptModel {
    fn block_shapes(&self) -> Vec<BlockShape> {
        let mut s: Vec<BlockShape> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, p)| conv_shapes(&format!("conv{}", i + 1), p))
            .collect();
        for (i, n) in self.norms.iter().enumerate() {
            s.push(BlockShape::new(format!("norm{}.gamma", i + 2), n.gamma.len(), 1));
            s.push(BlockShape::new(format!("norm{}.beta", i + 2), n.beta.len(), 1));
        }
        s
    }

    fn block_values(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for p in &self.layers {
            v.push(&p.weights);
            v.push(&p.bias);
        }
        for n in &self.norms {
            v.push(&n.gamma);
            v.push(&n.beta);
        }
        v
    }

    fn block_values_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for p in &mut self.layers {
            v.push(&mut p.weights);
            v.push(&mut p.bias);
        }
        for n in &mut self.norms {
            v.push(&mut n.gamma);
            v.push(&mut n.beta);
        }
        v
    }
}

impl CnptModel {
    pub fn new(arch: CnptArch, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = rng_for(seed, &["cnpt-init"]);
        let n = model.layers.len();
        for (i, l) in model.layers.iter_mut().enumerate() {
            *l = ConvLayerParams::he_uniform(l.in_channels, l.out_channels, l.kernel_width, &mut rng)?;
            if i + 1 == n {
                // Start close to the identity transfer.
                for w in &mut l.weights {
                    *w *= 0.1;
                }
            }
        }
        Ok(model)
    }

    /// All-zero parameters: the identity transfer.
    pub fn zeros(arch: CnptArch) -> Result<Self> {
        if arch.depth < 2 || arch.width == 0 || arch.kernel % 2 == 0 {
            return Err(NptError::Config("invalid transfer network architecture".into()));
        }
        let mut layers = Vec::with_capacity(arch.depth);
        for i in 0..arch.depth {
            let cin = if i == 0 { 1 } else { arch.width };
            let cout = if i + 1 == arch.depth { 1 } else { arch.width };
            layers.push(ConvLayerParams::zeros(cin, cout, arch.kernel)?);
        }
        let norms = if arch.batch_norm {
            (1..arch.depth - 1)
                .map(|_| NormParams {
                    gamma: vec![1.0; arch.width],
                    beta: vec![0.0; arch.width],
                    mean: vec![0.0; arch.width],
                    var: vec![1.0; arch.width],
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            arch,
            layers,
            norms,
            train_len: None,
        })
    }

    fn norm_vars<'a>(&self, vars: &'a [Var], layer: usize) -> &'a [Var] {
        let base = 2 * self.layers.len() + 2 * (layer - 1);
        &vars[base..base + 2]
    }

    /// Residual estimates for several inputs. With batch normalisation the
    /// statistics are taken over the whole group (`train`) or from the
    /// stored population values.
    fn forward_group(&self, tape: &mut Tape, vars: &[Var], xs: &[Var], train: bool) -> Result<Vec<Var>> {
        let n = self.layers.len();
        let mut hs = xs.to_vec();
        for (l, p) in self.layers.iter().enumerate() {
            for h in hs.iter_mut() {
                *h = conv(tape, *h, &vars[2 * l..2 * l + 2], p, 1)?;
            }
            if l + 1 == n {
                break;
            }
            if self.arch.batch_norm && l > 0 {
                let nv = self.norm_vars(vars, l);
                if train {
                    let lens: Vec<usize> = hs.iter().map(|&h| tape.value(h).length()).collect();
                    let cat = tape.concat(&hs)?;
                    let (normed, _, _) = tape.channel_norm(cat, nv[0], nv[1])?;
                    let mut start = 0;
                    for (h, len) in hs.iter_mut().zip(lens) {
                        *h = tape.crop(normed, start, len)?;
                        start += len;
                    }
                } else {
                    let np = &self.norms[l - 1];
                    for h in hs.iter_mut() {
                        *h = self.apply_population_norm(tape, *h, np)?;
                    }
                }
            }
            for h in hs.iter_mut() {
                *h = tape.relu(*h)?;
            }
        }
        Ok(hs)
    }

    fn apply_population_norm(&self, tape: &mut Tape, h: Var, np: &NormParams) -> Result<Var> {
        let v = tape.value(h);
        let (c, len) = v.shape();
        let mut data = v.data().to_vec();
        for ch in 0..c {
            let s = np.gamma[ch] / (np.var[ch] + ndsig::NORM_EPS).sqrt();
            let o = np.beta[ch] - np.mean[ch] * s;
            for x in &mut data[ch * len..(ch + 1) * len] {
                *x = *x * s + o;
            }
        }
        Ok(tape.constant(Tensor1D::new(c, len, data)?))
    }

    /// Estimated residual `R(x)`.
    pub fn residual(&self, spectrum: &Spectrum) -> Result<Spectrum> {
        if let Some(w) = self.train_len.filter(|&w| w != spectrum.len()) {
            log::warn!("transfer input of length {} differs from training length {w}", spectrum.len());
        }
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false)?;
        let x = tape.constant(Tensor1D::from_signal(spectrum.values())?);
        let r = self.forward_group(&mut tape, &vars, &[x], false)?[0];
        let out = tape.value(r).data().to_vec();
        Spectrum::new(out).map_err(|_| NptError::Numeric("non-finite residual".into()))
    }

    /// `x − R(x)`.
    pub fn transfer(&self, spectrum: &Spectrum) -> Result<Spectrum> {
        let r = self.residual(spectrum)?;
        Spectrum::new(spectrum.values().iter().zip(r.values()).map(|(x, r)| x - r).collect())
    }

    pub fn transfer_all(&self, spectra: &[Spectrum]) -> Result<Vec<Spectrum>> {
        spectra.par_iter().map(|s| self.transfer(s)).collect()
    }

    /// Recomputes population statistics for every normalisation layer over
    /// `inputs`, one layer at a time.
    fn refresh_population_stats(&mut self, inputs: &[Spectrum]) -> Result<()> {
        if !self.arch.batch_norm {
            return Ok(());
        }
        let mut acts: Vec<Tensor1D> = inputs
            .iter()
            .map(|s| Tensor1D::from_signal(s.values()))
            .collect::<std::result::Result<_, _>>()?;
        let n = self.layers.len();
        for l in 0..n - 1 {
            let p = self.layers[l].clone();
            acts = acts
                .into_iter()
                .map(|a| {
                    let mut tape = Tape::new();
                    let x = tape.constant(a);
                    let w = tape.constant(p.weight_tensor());
                    let b = tape.constant(p.bias_tensor());
                    let y = tape.conv1d(x, w, b, p.kernel_width, 1)?;
                    Ok(tape.value(y).clone())
                })
                .collect::<Result<_>>()?;
            if l > 0 {
                let c = self.arch.width;
                let total: usize = acts.iter().map(Tensor1D::length).sum();
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for a in &acts {
                    for (ch, m) in mean.iter_mut().enumerate() {
                        *m += a.channel(ch).iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= total as f64);
                for a in &acts {
                    for (ch, v) in var.iter_mut().enumerate() {
                        *v += a.channel(ch).iter().map(|x| (x - mean[ch]).powi(2)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= total as f64);
                let np = &mut self.norms[l - 1];
                np.mean = mean;
                np.var = var;
                let np = np.clone();
                for a in &mut acts {
                    let len = a.length();
                    let d = a.data_mut();
                    for ch in 0..c {
                        let s = np.gamma[ch] / (np.var[ch] + ndsig::NORM_EPS).sqrt();
                        let o = np.beta[ch] - np.mean[ch] * s;
                        for x in &mut d[ch * len..(ch + 1) * len] {
                            *x = *x * s + o;
                        }
                    }
                }
            }
            for a in &mut acts {
                a.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
            }
        }
        Ok(())
    }
}

fn check_pairs(pairs: &[TransferPair]) -> Result<usize> {
    if pairs.len() < 2 {
        return Err(NptError::Invalid(format!("need at least two training pairs, got {}", pairs.len())));
    }
    let w = pairs[0].input.len();
    if pairs.iter().any(|p| p.input.len() != w || p.target.len() != w) {
        return Err(NptError::Invalid("training pairs differ in length".into()));
    }
    Ok(w)
}

fn split_pairs(pairs: &[TransferPair], hyper: &TransferHyper, seed: u64, stream: &str) -> (Vec<TransferPair>, Vec<TransferPair>) {
    let groups = vec![0; pairs.len()];
    let (tr, va) = stratified_split(&groups, hyper.validation_fraction, seed, stream);
    (
        tr.iter().map(|&i| pairs[i].clone()).collect(),
        va.iter().map(|&i| pairs[i].clone()).collect(),
    )
}

/// Sum over `items` of `½‖out − want‖²`, where `out` comes from `forward`.
fn half_sq_sum(tape: &mut Tape, outs: &[Var], wants: Vec<Tensor1D>) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (&o, w) in outs.iter().zip(wants) {
        let wv = tape.constant(w);
        let l = tape.mse_sum(o, wv)?;
        let l = tape.scale(l, 0.5)?;
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    Ok(total.expect("non-empty group"))
}

fn residual_target(p: &TransferPair) -> Result<Tensor1D> {
    let d: Vec<f64> = p.input.values().iter().zip(p.target.values()).map(|(a, b)| a - b).collect();
    Ok(Tensor1D::from_signal(&d)?)
}

/// Mean of `½‖R(input) − (input − target)‖²` over `pairs`.
pub fn cnpt_loss(model: &CnptModel, pairs: &[TransferPair]) -> Result<f64> {
    let losses = pairs
        .par_iter()
        .map(|p| {
            let r = model.residual(&p.input)?;
            let want = residual_target(p)?;
            Ok(0.5 * r.values().iter().zip(want.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / pairs.len() as f64)
}

/// Trains the residual network on `(G, T)` pairs: `R(G)` regresses onto
/// `G − T`. Keeps the epoch with the lowest validation loss.
pub fn train_cnpt(
    pairs: &[TransferPair],
    arch: &CnptArch,
    hyper: &TransferHyper,
    seed: u64,
) -> Result<(CnptModel, TransferReport)> {
    let w = check_pairs(pairs)?;
    let mut model = CnptModel::new(arch.clone(), seed)?;
    model.train_len = Some(w);
    let (train, val) = split_pairs(pairs, hyper, seed, "cnpt");
    let val_set = if val.is_empty() { train.clone() } else { val.clone() };
    let train_inputs: Vec<Spectrum> = train.iter().map(|p| p.input.clone()).collect();
    let cfg = FitConfig {
        epochs: hyper.epochs,
        batch_size: hyper.batch_size,
        lr: hyper.lr,
        seed,
        chunk: arch.batch_norm.then_some(hyper.batch_size),
        stream: "cnpt",
    };
    let outcome = fit(
        &mut model,
        &train,
        &cfg,
        |m, tape, vars, items| {
            let xs: Vec<Var> = items
                .iter()
                .map(|p| Ok(tape.constant(Tensor1D::from_signal(p.input.values())?)))
                .collect::<Result<_>>()?;
            let outs = m.forward_group(tape, vars, &xs, true)?;
            let wants = items.iter().map(|p| residual_target(p)).collect::<Result<Vec<_>>>()?;
            half_sq_sum(tape, &outs, wants)
        },
        |m| {
            let mut m = m.clone();
            m.refresh_population_stats(&train_inputs)?;
            Ok(-cnpt_loss(&m, &val_set)?)
        },
    )?;
    model.refresh_population_stats(&train_inputs)?;
    Ok((
        model,
        TransferReport {
            loss_curve: outcome.epoch_losses,
            validation_curve: outcome.val_scores.iter().map(|v| -v).collect(),
            best_epoch: outcome.best_epoch,
            best_validation_loss: -outcome.best_score,
            train_cases: train.len(),
            validation_cases: val.len(),
            seed,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeArch {
    pub channels: [usize; 3],
    pub kernel: usize,
}

impl Default for AeArch {
    fn default() -> Self {
        Self {
            channels: [16, 32, 64],
            kernel: 7,
        }
    }
}

/// Stride-2 encoder and nearest-upsampling decoder; outputs the
/// transferred spectrum directly.
#[derive(Clone, Debug, PartialEq)]
pub struct AeModel {
    pub arch: AeArch,
    pub encoder: Vec<ConvLayerParams>,
    pub decoder: Vec<ConvLayerParams>,
}

impl Trainable for AeModel {
    fn block_shapes(&self) -> Vec<BlockShape> {
        let enc = self.encoder.iter().enumerate().flat_map(|(i, p)| conv_shapes(&format!("enc{}", i + 1), p));
        let dec = self.decoder.iter().enumerate().flat_map(|(i, p)| conv_shapes(&format!("dec{}", i + 1), p));
        enc.chain(dec).collect()
    }

    fn block_values(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|p| [p.weights.as_slice(), p.bias.as_slice()])
            .collect()
    }

    fn block_values_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|p| [p.weights.as_mut_slice(), p.bias.as_mut_slice()])
            .collect()
    }
}

impl AeModel {
    pub fn zeros(arch: AeArch) -> Result<Self> {
        let c = arch.channels;
        let k = arch.kernel;
        let encoder = vec![
            ConvLayerParams::zeros(1, c[0], k)?,
            ConvLayerParams::zeros(c[0], c[1], k)?,
            ConvLayerParams::zeros(c[1], c[2], k)?,
        ];
        let decoder = vec![
            ConvLayerParams::zeros(c[2], c[1], k)?,
            ConvLayerParams::zeros(c[1], c[0], k)?,
            ConvLayerParams::zeros(c[0], 1, k)?,
        ];
        Ok(Self { arch, encoder, decoder })
    }

    pub fn new(arch: AeArch, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(arch)?;
        let mut rng = rng_for(seed, &["ae-init"]);
        for l in m.encoder.iter_mut().chain(m.decoder.iter_mut()) {
            *l = ConvLayerParams::he_uniform(l.in_channels, l.out_channels, l.kernel_width, &mut rng)?;
        }
        Ok(m)
    }

    /// True when every weight is zero, so the output is a constant set by
    /// the biases alone.
    pub fn is_untrained(&self) -> bool {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .all(|p| p.weights.iter().all(|&w| w == 0.0))
    }

    fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let len = tape.value(x).length();
        let mut h = x;
        for (i, p) in self.encoder.iter().enumerate() {
            h = conv(tape, h, &vars[2 * i..2 * i + 2], p, 2)?;
            h = tape.relu(h)?;
        }
        let off = 2 * self.encoder.len();
        let last = self.decoder.len() - 1;
        for (i, p) in self.decoder.iter().enumerate() {
            h = tape.upsample(h, 2)?;
            h = conv(tape, h, &vars[off + 2 * i..off + 2 * i + 2], p, 1)?;
            if i < last {
                h = tape.relu(h)?;
            }
        }
        Ok(tape.crop(h, 0, len)?)
    }

    pub fn transfer(&self, spectrum: &Spectrum) -> Result<Spectrum> {
        if self.is_untrained() {
            log::warn!("autoencoder has all-zero weights; output is constant");
        }
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false)?;
        let x = tape.constant(Tensor1D::from_signal(spectrum.values())?);
        let y = self.forward(&mut tape, &vars, x)?;
        Spectrum::new(tape.value(y).data().to_vec()).map_err(|_| NptError::Numeric("non-finite output".into()))
    }

    pub fn transfer_all(&self, spectra: &[Spectrum]) -> Result<Vec<Spectrum>> {
        spectra.par_iter().map(|s| self.transfer(s)).collect()
    }
}

/// Mean of `½‖AE(input) − target‖²` over `pairs`.
pub fn ae_loss(model: &AeModel, pairs: &[TransferPair]) -> Result<f64> {
    let losses = pairs
        .par_iter()
        .map(|p| {
            let y = model.transfer(&p.input)?;
            Ok(0.5 * y.values().iter().zip(p.target.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / pairs.len() as f64)
}

pub fn train_ae(pairs: &[TransferPair], arch: &AeArch, hyper: &TransferHyper, seed: u64) -> Result<(AeModel, TransferReport)> {
    check_pairs(pairs)?;
    let mut model = AeModel::new(arch.clone(), seed)?;
    let (train, val) = split_pairs(pairs, hyper, seed, "ae");
    let val_set = if val.is_empty() { train.clone() } else { val.clone() };
    let cfg = FitConfig {
        epochs: hyper.epochs,
        batch_size: hyper.batch_size,
        lr: hyper.lr,
        seed,
        chunk: None,
        stream: "ae",
    };
    let outcome = fit(
        &mut model,
        &train,
        &cfg,
        |m, tape, vars, items| {
            let mut outs = Vec::with_capacity(items.len());
            for p in items {
                let x = tape.constant(Tensor1D::from_signal(p.input.values())?);
                outs.push(m.forward(tape, vars, x)?);
            }
            let wants = items
                .iter()
                .map(|p| Ok(Tensor1D::from_signal(p.target.values())?))
                .collect::<Result<Vec<_>>>()?;
            half_sq_sum(tape, &outs, wants)
        },
        |m| Ok(-ae_loss(m, &val_set)?),
    )?;
    Ok((
        model,
        TransferReport {
            loss_curve: outcome.epoch_losses,
            validation_curve: outcome.val_scores.iter().map(|v| -v).collect(),
            best_epoch: outcome.best_epoch,
            best_validation_loss: -outcome.best_score,
            train_cases: train.len(),
            validation_cases: val.len(),
            seed,
        },
    ))
}
