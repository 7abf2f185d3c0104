//! Comparison methods: wavelet denoising followed by a transfer network
//! trained on denoised pairs, and the residual network trained directly on
//! measured pairs.

use rayon::prelude::*;

use crate::classifier::{train_classifier, ClassifierArch, ClassifierHyper, ClassifierModel, TrainReport};
use crate::cnpt::{train_cnpt, CnptArch, CnptModel, TransferHyper, TransferPair, TransferReport};
use crate::error::Result;
use crate::spectra::{pair_d2d_cases, SpectralDataset, Spectrum};
use crate::wavelet::{wavelet_denoise, WaveletConfig};

/// Same-class measured pairs `(S, T)` as training pairs.
pub fn d2d_pairs(source: &SpectralDataset, target: &SpectralDataset, classes: &[usize], seed: u64) -> Result<Vec<TransferPair>> {
    Ok(pair_d2d_cases(source, target, classes, seed)?
        .into_iter()
        .map(|c| TransferPair {
            input: c.source.spectrum,
            target: c.target.spectrum,
        })
        .collect())
}

/// The residual network trained on measured pairs instead of generated
/// cases.
pub fn train_raw_dncnn(
    source: &SpectralDataset,
    target: &SpectralDataset,
    classes: &[usize],
    arch: &CnptArch,
    hyper: &TransferHyper,
    seed: u64,
) -> Result<(CnptModel, TransferReport)> {
    let pairs = d2d_pairs(source, target, classes, seed)?;
    train_cnpt(&pairs, arch, hyper, seed)
}

/// Denoises every sample; ground truth is dropped.
pub fn denoise_dataset(dataset: &SpectralDataset, config: &WaveletConfig) -> Result<SpectralDataset> {
    let spectra = dataset
        .samples
        .par_iter()
        .map(|s| wavelet_denoise(&s.spectrum, config))
        .collect::<Result<Vec<Spectrum>>>()?;
    let mut out = dataset.clone();
    for (s, d) in out.samples.iter_mut().zip(spectra) {
        s.spectrum = d;
        s.ground_truth = None;
    }
    Ok(out)
}

/// Analysis model trained on denoised target data plus a transfer network
/// trained on denoised measured pairs.
#[derive(Clone, Debug)]
pub struct WaveletPipeline {
    pub wavelet: WaveletConfig,
    pub analysis: ClassifierModel,
    pub transfer: CnptModel,
}

impl WaveletPipeline {
    /// Denoise, then transfer.
    pub fn apply(&self, spectrum: &Spectrum) -> Result<Spectrum> {
        self.transfer.transfer(&wavelet_denoise(spectrum, &self.wavelet)?)
    }

    /// Accuracy of the analysis model on processed source samples.
    pub fn accuracy(&self, source_eval: &SpectralDataset) -> Result<f64> {
        let mut processed = source_eval.clone();
        let spectra = processed
            .samples
            .par_iter()
            .map(|s| self.apply(&s.spectrum))
            .collect::<Result<Vec<_>>>()?;
        for (s, p) in processed.samples.iter_mut().zip(spectra) {
            s.spectrum = p;
        }
        self.analysis.accuracy(&processed.samples)
    }
}

pub struct PipelineSettings<'a> {
    pub wavelet: &'a WaveletConfig,
    pub classifier_arch: &'a ClassifierArch,
    pub classifier_hyper: &'a ClassifierHyper,
    pub cnpt_arch: &'a CnptArch,
    pub cnpt_hyper: &'a TransferHyper,
}

/// Builds the transfer network of the wavelet pipeline around an analysis
/// model that was already trained on denoised target data.
pub fn wavelet_transfer(
    source: &SpectralDataset,
    target: &SpectralDataset,
    classes: &[usize],
    analysis: ClassifierModel,
    settings: &PipelineSettings<'_>,
    seed: u64,
) -> Result<(WaveletPipeline, TransferReport)> {
    let ds = denoise_dataset(source, settings.wavelet)?;
    let dt = denoise_dataset(target, settings.wavelet)?;
    let pairs = d2d_pairs(&ds, &dt, classes, seed)?;
    let (transfer, report) = train_cnpt(&pairs, settings.cnpt_arch, settings.cnpt_hyper, seed)?;
    Ok((
        WaveletPipeline {
            wavelet: settings.wavelet.clone(),
            analysis,
            transfer,
        },
        report,
    ))
}

/// Full pipeline: the analysis model sees all of the denoised target data
/// and the transfer network sees denoised pairs over `classes`.
pub fn wavelet_pipeline(
    source: &SpectralDataset,
    target: &SpectralDataset,
    classes: &[usize],
    settings: &PipelineSettings<'_>,
    seed: u64,
) -> Result<(WaveletPipeline, TrainReport)> {
    let dt = denoise_dataset(target, settings.wavelet)?;
    let (analysis, report) = train_classifier(&dt.samples, settings.classifier_arch, settings.classifier_hyper, seed)?;
    let (pipeline, _) = wavelet_transfer(source, target, classes, analysis, settings, seed)?;
    Ok((pipeline, report))
}
