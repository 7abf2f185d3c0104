//! Parameter plumbing shared by the three network roles and the minibatch
//! training loop with best-validation snapshotting.

use ndsig::{adam_step, AdamState, ConvLayerParams, ParamSlot, Tape, Tensor1D, Var};
use rand::seq::SliceRandom;

use crate::error::{NptError, Result};
use crate::seed::rng_for;

/// Name and `(rows, cols)` of one parameter block.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl BlockShape {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
        }
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }
}

/// A network whose parameters are a fixed, ordered list of blocks.
pub trait Trainable: Clone {
    fn block_shapes(&self) -> Vec<BlockShape>;
    fn block_values(&self) -> Vec<&[f64]>;
    fn block_values_mut(&mut self) -> Vec<&mut [f64]>;

    /// Pushes every block onto `tape` as a leaf, in block order.
    fn register(&self, tape: &mut Tape, requires_grad: bool) -> Result<Vec<Var>> {
        self.block_shapes()
            .iter()
            .zip(self.block_values())
            .map(|(s, v)| Ok(tape.leaf(Tensor1D::new(s.rows, s.cols, v.to_vec())?, requires_grad)))
            .collect()
    }

    fn param_count(&self) -> usize {
        self.block_shapes().iter().map(BlockShape::count).sum()
    }
}

pub(crate) fn conv_shapes(prefix: &str, p: &ConvLayerParams) -> [BlockShape; 2] {
    [
        BlockShape::new(format!("{prefix}.weight"), p.out_channels, p.in_channels * p.kernel_width),
        BlockShape::new(format!("{prefix}.bias"), p.out_channels, 1),
    ]
}

/// Convolution applied with registered `(weight, bias)` vars.
pub(crate) fn conv(tape: &mut Tape, x: Var, wb: &[Var], p: &ConvLayerParams, stride: usize) -> Result<Var> {
    Ok(tape.conv1d(x, wb[0], wb[1], p.kernel_width, stride)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Samples per tape. `None` builds one tape per sample; coupled layers
    /// such as batch normalisation need the whole batch on one tape.
    pub chunk: Option<usize>,
    /// Label mixed into the shuffling stream.
    pub stream: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitOutcome {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation score per epoch (higher is better).
    pub val_scores: Vec<f64>,
    pub best_epoch: usize,
    pub best_score: f64,
}

/// Minibatch Adam. `batch_loss` returns the summed loss of the samples it
/// is given; the loop divides by the batch size. After every epoch
/// `validate` scores the model and the best-scoring parameters are kept
/// (earliest epoch wins ties).
pub fn fit<M, S, L, V>(model: &mut M, train: &[S], cfg: &FitConfig, batch_loss: L, mut validate: V) -> Result<FitOutcome>
where
    M: Trainable,
    L: Fn(&M, &mut Tape, &[Var], &[&S]) -> Result<Var>,
    V: FnMut(&M) -> Result<f64>,
{
    if train.is_empty() {
        return Err(NptError::Invalid("no training samples".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(NptError::Config("batch size and epochs must be positive".into()));
    }
    let shapes = model.block_shapes();
    let names: Vec<String> = shapes.iter().map(|s| s.name.clone()).collect();
    let sizes: Vec<usize> = shapes.iter().map(BlockShape::count).collect();
    let mut adam = AdamState::new(&sizes);
    let mut best = model.clone();
    let mut out = FitOutcome {
        best_score: f64::NEG_INFINITY,
        ..FitOutcome::default()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(cfg.seed, &[cfg.stream, "epoch", &epoch.to_string()]);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            let chunk = cfg.chunk.unwrap_or(1).max(1);
            let inv = 1.0 / batch.len() as f64;
            for part in batch.chunks(chunk) {
                let items: Vec<&S> = part.iter().map(|&i| &train[i]).collect();
                let mut tape = Tape::new();
                let vars = model.register(&mut tape, true)?;
                let loss = batch_loss(model, &mut tape, &vars, &items)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(NptError::Numeric(format!(
                        "non-finite loss at epoch {} batch {b}",
                        epoch + 1
                    )));
                }
                loss_sum += value;
                let scaled = tape.scale(loss, inv)?;
                tape.backward(scaled)?;
                for (g, v) in grads.iter_mut().zip(&vars) {
                    let gv = tape.grad(*v).expect("parameter gradient");
                    for (a, b) in g.iter_mut().zip(gv) {
                        *a += b;
                    }
                }
            }
            let mut values = model.block_values_mut();
            let mut slots: Vec<ParamSlot<'_>> = values
                .iter_mut()
                .zip(&grads)
                .zip(&names)
                .map(|((v, g), n)| ParamSlot {
                    name: n.as_str(),
                    values: &mut **v,
                    grads: g.as_slice(),
                })
                .collect();
            adam_step(&mut slots, &mut adam, cfg.lr).map_err(|e| {
                NptError::Numeric(format!("epoch {} batch {b}: {e}", epoch + 1))
            })?;
        }
        out.epoch_losses.push(loss_sum / train.len() as f64);
        let score = validate(model)?;
        out.val_scores.push(score);
        if score > out.best_score {
            out.best_score = score;
            out.best_epoch = epoch + 1;
            best = model.clone();
        }
    }
    *model = best;
    Ok(out)
}

/// Per-group deterministic split: each group is shuffled and the first
/// `round(fraction · n)` members (at least one when `n ≥ 2`) go to
/// validation. Returns `(train, validation)` indices.
pub fn stratified_split(groups: &[usize], fraction: f64, seed: u64, stream: &str) -> (Vec<usize>, Vec<usize>) {
    let mut keys: Vec<usize> = groups.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for key in keys {
        let mut members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == key).collect();
        let mut rng = rng_for(seed, &[stream, "split", &key.to_string()]);
        members.shuffle(&mut rng);
        let n = members.len();
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        val.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}
