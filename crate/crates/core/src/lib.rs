pub mod baselines;
pub mod bench;
pub mod classifier;
pub mod cnpt;
pub mod error;
pub mod manifest;
pub mod modelfile;
pub mod nn;
pub mod s2s;
pub mod seed;
pub mod spectra;
pub mod svg;
pub mod wavelet;

pub use error::{NptError, Result};
