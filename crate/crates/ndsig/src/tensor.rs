//! Dense channel-major 1D tensors and convolution parameter blocks.

use rand::Rng;

use crate::error::{shape_err, EngineError, Result};

/// A `(channels, length)` array stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor1D {
    data: Vec<f64>,
    channels: usize,
    length: usize,
}

impl Tensor1D {
    pub fn new(channels: usize, length: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(shape_err("tensor", "channels and length must be positive"));
        }
        if data.len() != channels * length {
            return Err(shape_err(
                "tensor",
                format!(
                    "{} values cannot fill ({channels}, {length})",
                    data.len()
                ),
            ));
        }
        Ok(Self {
            data,
            channels,
            length,
        })
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        assert!(channels > 0 && length > 0, "empty tensor");
        Self {
            data: vec![0.0; channels * length],
            channels,
            length,
        }
    }

    /// Single-channel tensor from a signal.
    pub fn from_signal(signal: &[f64]) -> Result<Self> {
        Self::new(1, signal.len(), signal.to_vec())
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            data: vec![value],
            channels: 1,
            length: 1,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.length + t]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a `(1, 1)` tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(EngineError::NonFinite(what.to_string()))
        }
    }
}

/// Weights `(out_channels, in_channels, kernel_width)` and bias of one
/// convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayerParams {
    pub const DEFAULT_KERNEL: usize = 7;

    pub fn zeros(in_channels: usize, out_channels: usize, kernel_width: usize) -> Result<Self> {
        let p = Self {
            in_channels,
            out_channels,
            kernel_width,
            weights: vec![0.0; out_channels * in_channels * kernel_width],
            bias: vec![0.0; out_channels],
        };
        p.validate()?;
        Ok(p)
    }

    /// He-uniform initialisation (fan-in scaled), zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(in_channels, out_channels, kernel_width)?;
        let bound = (6.0 / (in_channels * kernel_width) as f64).sqrt();
        for w in &mut p.weights {
            *w = rng.gen_range(-bound..bound);
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(shape_err("conv1d", "channel counts must be positive"));
        }
        if self.kernel_width % 2 == 0 {
            return Err(shape_err(
                "conv1d",
                format!("kernel width {} is not odd", self.kernel_width),
            ));
        }
        if self.weights.len() != self.out_channels * self.in_channels * self.kernel_width {
            return Err(shape_err("conv1d", "weight array does not match layer shape"));
        }
        if self.bias.len() != self.out_channels {
            return Err(shape_err("conv1d", "bias length does not match out_channels"));
        }
        Ok(())
    }

    pub fn weight(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel_width + k]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Weight tensor in the `(out, in * k)` layout the tape expects.
    pub fn weight_tensor(&self) -> Tensor1D {
        Tensor1D {
            data: self.weights.clone(),
            channels: self.out_channels,
            length: self.in_channels * self.kernel_width,
        }
    }

    pub fn bias_tensor(&self) -> Tensor1D {
        Tensor1D {
            data: self.bias.clone(),
            channels: self.out_channels,
            length: 1,
        }
    }
}

/// Dot product with a fixed eight-lane accumulation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor1D::new(2, 3, vec![0.0; 5]).is_err());
        assert!(Tensor1D::new(0, 3, vec![]).is_err());
        assert!(ConvLayerParams::zeros(1, 1, 6).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
