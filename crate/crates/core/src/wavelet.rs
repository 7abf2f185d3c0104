//! Daubechies-8 discrete wavelet transform and soft-threshold denoising.

use serde::{Deserialize, Serialize};

use crate::error::{NptError, Result};
use crate::spectra::Spectrum;

/// db8 decomposition low-pass filter.
pub const DB8_DEC_LO: [f64; 16] = [
    -0.00011747678412476953,
    0.0006754494064505693,
    -0.00039174037337694705,
    -0.004870352993451574,
    0.008746094047405777,
    0.013981027917398282,
    -0.044088253930794755,
    -0.017369301001807547,
    0.12874742662047847,
    0.0004724845739132828,
    -0.2840155429615469,
    -0.015829105256349306,
    0.5853546836542067,
    0.6756307362972898,
    0.31287159091429995,
    0.05441584224310401,
];

/// Quadrature-mirror high-pass partner: `g[n] = (−1)^n h[L−1−n]`.
pub fn db8_dec_hi() -> [f64; 16] {
    let mut g = [0.0; 16];
    for (n, v) in g.iter_mut().enumerate() {
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        *v = s * DB8_DEC_LO[15 - n];
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Circular wrap; the transform is orthogonal.
    Periodization,
    /// Half-sample mirror extension with `⌊(N + L − 1)/2⌋` coefficients
    /// per level.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub levels: usize,
    pub boundary: Boundary,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            boundary: Boundary::Periodization,
        }
    }
}

/// Deepest useful level for a signal of length `n`.
pub fn max_level(n: usize) -> usize {
    let f = DB8_DEC_LO.len();
    if n < f - 1 {
        return 0;
    }
    ((n as f64) / (f - 1) as f64).log2().floor() as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    /// Coarsest approximation.
    pub approx: Vec<f64>,
    /// Detail coefficients, finest level first.
    pub details: Vec<Vec<f64>>,
    /// Input length before padding.
    pub original_len: usize,
    /// Length of each level's input, finest first.
    pub level_lens: Vec<usize>,
    pub boundary: Boundary,
}

fn mirror(k: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = k.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn analyze(x: &[f64], boundary: Boundary) -> (Vec<f64>, Vec<f64>) {
    let h = &DB8_DEC_LO;
    let g = db8_dec_hi();
    let n = x.len();
    let f = h.len();
    match boundary {
        Boundary::Periodization => {
            let half = n / 2;
            let (mut a, mut d) = (vec![0.0; half], vec![0.0; half]);
            for k in 0..half {
                for j in 0..f {
                    let v = x[(2 * k + j) % n];
                    a[k] += h[j] * v;
                    d[k] += g[j] * v;
                }
            }
            (a, d)
        }
        Boundary::Symmetric => {
            let m = (n + f - 1) / 2;
            let (mut a, mut d) = (vec![0.0; m], vec![0.0; m]);
            for i in 0..m {
                for j in 0..f {
                    let v = x[mirror(2 * i as isize + 1 - j as isize, n)];
                    a[i] += h[j] * v;
                    d[i] += g[j] * v;
                }
            }
            (a, d)
        }
    }
}

fn synthesize(a: &[f64], d: &[f64], n: usize, boundary: Boundary) -> Vec<f64> {
    let h = &DB8_DEC_LO;
    let g = db8_dec_hi();
    let f = h.len();
    let mut x = vec![0.0; n];
    match boundary {
        Boundary::Periodization => {
            for k in 0..a.len() {
                for j in 0..f {
                    x[(2 * k + j) % n] += h[j] * a[k] + g[j] * d[k];
                }
            }
        }
        Boundary::Symmetric => {
            // Transpose of the analysis restricted to in-range samples.
            for i in 0..a.len() {
                for j in 0..f {
                    let p = 2 * i as isize + 1 - j as isize;
                    if p >= 0 && (p as usize) < n {
                        x[p as usize] += h[j] * a[i] + g[j] * d[i];
                    }
                }
            }
        }
    }
    x
}

pub fn dwt(signal: &[f64], config: &WaveletConfig) -> Result<Pyramid> {
    let n = signal.len();
    if config.levels == 0 {
        return Err(NptError::Config("wavelet levels must be positive".into()));
    }
    if config.levels > max_level(n) {
        return Err(NptError::Invalid(format!(
            "{} levels too deep for length {n} (max {})",
            config.levels,
            max_level(n)
        )));
    }
    let mut cur = signal.to_vec();
    if config.boundary == Boundary::Periodization {
        let block = 1usize << config.levels;
        let padded = n.div_ceil(block) * block;
        let ext = padded - n;
        for i in 0..ext {
            cur.push(signal[mirror((n + i) as isize, n)]);
        }
    }
    let mut details = Vec::with_capacity(config.levels);
    let mut level_lens = Vec::with_capacity(config.levels);
    for _ in 0..config.levels {
        level_lens.push(cur.len());
        let (a, d) = analyze(&cur, config.boundary);
        details.push(d);
        cur = a;
    }
    Ok(Pyramid {
        approx: cur,
        details,
        original_len: n,
        level_lens,
        boundary: config.boundary,
    })
}

pub fn idwt(p: &Pyramid) -> Vec<f64> {
    let mut cur = p.approx.clone();
    for (d, &n) in p.details.iter().zip(&p.level_lens).rev() {
        cur = synthesize(&cur, d, n, p.boundary);
    }
    cur.truncate(p.original_len);
    cur
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
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

/// Noise level estimate `median(|d₁|)/0.6745` and universal threshold
/// `σ√(2 ln n)`.
pub fn universal_threshold(p: &Pyramid) -> (f64, f64) {
    let sigma = median(p.details[0].iter().map(|v| v.abs()).collect()) / 0.6745;
    let n = p.original_len as f64;
    (sigma, sigma * (2.0 * n.ln()).sqrt())
}

/// Soft-thresholds every detail level with the universal threshold.
pub fn wavelet_denoise(spectrum: &Spectrum, config: &WaveletConfig) -> Result<Spectrum> {
    let mut p = dwt(spectrum.values(), config)?;
    let (_, t) = universal_threshold(&p);
    for level in &mut p.details {
        for c in level.iter_mut() {
            *c = soft_threshold(*c, t);
        }
    }
    Spectrum::new(idwt(&p))
}
