use crate::tape::gram_matrix;
use crate::tensor::Tensor1D;

/// Channel-by-channel inner products of a `(P, M)` feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    entries: Vec<f64>,
    channels: usize,
    feature_length: usize,
}

impl GramMatrix {
    pub fn from_features(features: &Tensor1D) -> Self {
        let g = gram_matrix(features);
        Self {
            entries: g.into_vec(),
            channels: features.channels(),
            feature_length: features.length(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Length `M` of the feature map the matrix was computed from.
    pub fn feature_length(&self) -> usize {
        self.feature_length
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.channels + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.channels..(i + 1) * self.channels]
    }

    /// The matrix as a `(P, P)` tensor.
    pub fn into_tensor(self) -> Tensor1D {
        Tensor1D::new(self.channels, self.channels, self.entries).expect("square gram")
    }
}
