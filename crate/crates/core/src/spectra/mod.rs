//! Spectra, labelled datasets and same-solution pairing across
//! environments.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset, DatasetManifest, SAMPLES_FILE};
pub use synth::{generate_synthetic_dataset, EnvironmentSpec, PeakSpec, SyntheticConfig};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{NptError, Result};
use crate::seed::rng_for;

/// One intensity curve over wavelength bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(NptError::Invalid("empty spectrum".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NptError::Numeric("spectrum contains non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_distance(&self, other: &Spectrum) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Ground-truth parts of a synthetic sample: signal, environment-level
/// noise and sample-level baseline noise.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDecomposition {
    pub signal: Spectrum,
    pub environmental: Spectrum,
    pub baseline: Spectrum,
}

impl NoiseDecomposition {
    pub fn compose(&self) -> Spectrum {
        Spectrum(
            self.signal
                .0
                .iter()
                .zip(&self.environmental.0)
                .zip(&self.baseline.0)
                .map(|((x, n), b)| x + n + b)
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSpectrum {
    pub spectrum: Spectrum,
    pub class: usize,
    pub concentration_mg_per_l: f64,
    pub environment_id: String,
    pub sample_index: usize,
    pub ground_truth: Option<NoiseDecomposition>,
}

impl LabeledSpectrum {
    /// `environment:index`, used in case provenance.
    pub fn id(&self) -> String {
        format!("{}:{}", self.environment_id, self.sample_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDataset {
    pub environment_id: String,
    pub bins: usize,
    pub samples: Vec<LabeledSpectrum>,
    pub normalized: bool,
    pub seed: u64,
}

impl SpectralDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted distinct class labels.
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.samples.iter().map(|s| s.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Positions in `samples` with the given class, in storage order.
    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> SpectralDataset {
        SpectralDataset {
            environment_id: self.environment_id.clone(),
            bins: self.bins,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            normalized: self.normalized,
            seed: self.seed,
        }
    }

    pub fn filter_classes(&self, classes: &[usize]) -> SpectralDataset {
        let idx: Vec<usize> = self
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| classes.contains(&s.class))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    /// Per-sample min-max normalisation. Ground truth is dropped because the
    /// per-sample affine map does not preserve the shared environment term.
    pub fn normalized(&self) -> Result<SpectralDataset> {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.spectrum = min_max_normalize(&s.spectrum)?;
            s.ground_truth = None;
        }
        out.normalized = true;
        Ok(out)
    }
}

/// `(x − min) / (max − min)`.
pub fn min_max_normalize(spectrum: &Spectrum) -> Result<Spectrum> {
    let v = spectrum.values();
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(hi > lo) {
        return Err(NptError::Degenerate("constant spectrum cannot be min-max normalised".into()));
    }
    let r = hi - lo;
    Ok(Spectrum(v.iter().map(|x| ((x - lo) / r).clamp(0.0, 1.0)).collect()))
}

/// A measured source sample and a measured target sample of the same
/// standard solution in two environments.
#[derive(Clone, Debug, PartialEq)]
pub struct D2DCase {
    pub source: LabeledSpectrum,
    pub target: LabeledSpectrum,
}

/// Random same-class pairing without replacement: within each requested
/// class both sides are shuffled and zipped, so the smaller side decides
/// the number of pairs. Output is grouped by class in the order given.
/// A dataset paired with itself yields every sample paired with itself.
pub fn pair_d2d_cases(
    source: &SpectralDataset,
    target: &SpectralDataset,
    classes: &[usize],
    seed: u64,
) -> Result<Vec<D2DCase>> {
    if source.bins != target.bins {
        return Err(NptError::Invalid(format!(
            "datasets have different bin counts ({} vs {})",
            source.bins, target.bins
        )));
    }
    let same = source == target;
    let mut cases = Vec::new();
    for &class in classes {
        let mut s_idx = source.indices_of_class(class);
        let mut t_idx = target.indices_of_class(class);
        if s_idx.is_empty() || t_idx.is_empty() {
            return Err(NptError::Invalid(format!(
                "class {class} is empty in {}",
                if s_idx.is_empty() {
                    &source.environment_id
                } else {
                    &target.environment_id
                }
            )));
        }
        let mut rng = rng_for(seed, &["d2d-pairing", &class.to_string()]);
        s_idx.shuffle(&mut rng);
        if same {
            t_idx.clone_from(&s_idx);
        } else {
            t_idx.shuffle(&mut rng);
        }
        for (&si, &ti) in s_idx.iter().zip(&t_idx) {
            cases.push(D2DCase {
                source: source.samples[si].clone(),
                target: target.samples[ti].clone(),
            });
        }
    }
    Ok(cases)
}
