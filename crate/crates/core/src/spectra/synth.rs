//! Synthetic fluorescence spectra with a known additive decomposition.
//!
//! A sample is `X + N + ξ`: `X` is a fixed mixture of Gaussian peaks whose
//! amplitudes move affinely with concentration, `N` is a slow curve shared
//! by every sample of an environment, and `ξ` is a faster per-sample
//! baseline wobble plus a little white noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LabeledSpectrum, NoiseDecomposition, SpectralDataset, Spectrum};
use crate::error::{NptError, Result};
use crate::seed::rng_for;

/// Gaussian peak; centre and width are fractions of the bin range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub center: f64,
    pub width: f64,
    pub intercept: f64,
    /// Amplitude gained between zero and maximum concentration.
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub id: String,
    /// Peak absolute value of the environment curve.
    pub noise_scale: f64,
}

impl EnvironmentSpec {
    pub fn new(id: impl Into<String>, noise_scale: f64) -> Self {
        Self {
            id: id.into(),
            noise_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub bins: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    pub max_concentration: f64,
    pub peaks: Vec<PeakSpec>,
    pub environments: Vec<EnvironmentSpec>,
    pub baseline_amplitude: f64,
    pub white_noise_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            bins: 1024,
            classes: 10,
            samples_per_class: 200,
            max_concentration: 30.0,
            peaks: vec![
                // Reference band that does not depend on concentration.
                PeakSpec { center: 0.16, width: 0.025, intercept: 0.45, slope: 0.0 },
                PeakSpec { center: 0.42, width: 0.08, intercept: 0.20, slope: 0.60 },
                PeakSpec { center: 0.63, width: 0.06, intercept: 0.10, slope: 0.30 },
                PeakSpec { center: 0.80, width: 0.10, intercept: 0.05, slope: 0.12 },
            ],
            environments: vec![
                EnvironmentSpec::new("A", 0.05),
                EnvironmentSpec::new("B", 0.12),
                EnvironmentSpec::new("C", 0.35),
            ],
            baseline_amplitude: 0.04,
            white_noise_sigma: 0.002,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 64 {
            return Err(NptError::Config(format!("bins must be at least 64, got {}", self.bins)));
        }
        if self.classes != 10 {
            return Err(NptError::Config(format!("expected 10 classes, got {}", self.classes)));
        }
        if self.samples_per_class < 4 {
            return Err(NptError::Config(format!(
                "samples_per_class must be at least 4, got {}",
                self.samples_per_class
            )));
        }
        if self.peaks.is_empty() || !(self.max_concentration > 0.0) {
            return Err(NptError::Config("need at least one peak and a positive concentration range".into()));
        }
        Ok(())
    }

    pub fn environment(&self, id: &str) -> Result<&EnvironmentSpec> {
        self.environments
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| NptError::Config(format!("unknown environment {id:?}")))
    }

    pub fn concentration(&self, class: usize) -> f64 {
        self.max_concentration * class as f64 / (self.classes - 1) as f64
    }

    /// Noise-free spectrum of a class.
    pub fn clean_signal(&self, class: usize) -> Vec<f64> {
        let r = self.concentration(class) / self.max_concentration;
        let w = self.bins;
        (0..w)
            .map(|t| {
                let u = t as f64 / (w - 1) as f64;
                self.peaks
                    .iter()
                    .map(|p| {
                        let z = (u - p.center) / p.width;
                        (p.intercept + p.slope * r) * (-0.5 * z * z).exp()
                    })
                    .sum()
            })
            .collect()
    }

    /// Environment-level curve: three slow sinusoids (periods in
    /// `[W/2, 2W]`) plus a quadratic trend, scaled to peak `noise_scale`.
    pub fn environment_noise(&self, env: &EnvironmentSpec, seed: u64) -> Vec<f64> {
        let w = self.bins as f64;
        let mut rng = rng_for(seed, &["environment-noise", &env.id]);
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(w / 2.0..2.0 * w),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let (c1, c2): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let shape: Vec<f64> = (0..self.bins)
            .map(|t| {
                let tf = t as f64;
                let u = 2.0 * tf / (w - 1.0) - 1.0;
                waves
                    .iter()
                    .map(|(a, p, ph)| a * (2.0 * PI * tf / p + ph).sin())
                    .sum::<f64>()
                    + c1 * u
                    + c2 * u * u
            })
            .collect();
        let peak = shape.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let k = if peak > 0.0 { env.noise_scale / peak } else { 0.0 };
        shape.into_iter().map(|v| v * k).collect()
    }

    /// Sample-level baseline noise: three sinusoids with periods in
    /// `[W/16, W/6]` whose amplitudes sum to `baseline_amplitude`, plus
    /// white noise.
    pub fn baseline_noise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let w = self.bins as f64;
        let raw: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(w / 16.0..w / 6.0),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let white = Normal::new(0.0, self.white_noise_sigma).expect("valid sigma");
        (0..self.bins)
            .map(|t| {
                let tf = t as f64;
                let wave: f64 = raw
                    .iter()
                    .map(|(a, p, ph)| a / total * (2.0 * PI * tf / p + ph).sin())
                    .sum();
                self.baseline_amplitude * wave + white.sample(rng)
            })
            .collect()
    }
}

/// Generates `classes × samples_per_class` samples for one environment,
/// keeping each sample's decomposition.
pub fn generate_synthetic_dataset(
    config: &SyntheticConfig,
    environment_id: &str,
    seed: u64,
) -> Result<SpectralDataset> {
    config.validate()?;
    let env = config.environment(environment_id)?;
    let env_noise = Spectrum::new(config.environment_noise(env, seed))?;
    let mut samples = Vec::with_capacity(config.classes * config.samples_per_class);
    for class in 0..config.classes {
        let signal = Spectrum::new(config.clean_signal(class))?;
        for rep in 0..config.samples_per_class {
            let sample_index = class * config.samples_per_class + rep;
            let mut rng = rng_for(seed, &["baseline-noise", &env.id, &sample_index.to_string()]);
            let baseline = Spectrum::new(config.baseline_noise(&mut rng))?;
            let gt = NoiseDecomposition {
                signal: signal.clone(),
                environmental: env_noise.clone(),
                baseline,
            };
            samples.push(LabeledSpectrum {
                spectrum: gt.compose(),
                class,
                concentration_mg_per_l: config.concentration(class),
                environment_id: env.id.clone(),
                sample_index,
                ground_truth: Some(gt),
            });
        }
    }
    Ok(SpectralDataset {
        environment_id: env.id.clone(),
        bins: config.bins,
        samples,
        normalized: false,
        seed,
    })
}
