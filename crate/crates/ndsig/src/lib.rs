//! Minimal f64 numeric core for 1D signal networks.
//!
//! [`Tape`] records eagerly evaluated operations on [`Tensor1D`] values and
//! differentiates them in reverse mode. The operation set covers what small
//! 1D convolutional networks need: same-padded convolution, ReLU, max
//! pooling, Gram matrices, squared-error and cross-entropy losses. [`adam_step`]
//! trains parameters; [`lbfgs_minimize`] optimises a signal directly.
//!
//! The crate keeps no global state. A tape or optimizer state is owned by a
//! single writer; frozen parameters can be shared across threads freely.

mod conv;
pub mod error;
pub mod gram;
pub mod lbfgs;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{EngineError, Result};
pub use gram::GramMatrix;
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsOutcome, LbfgsState, Termination};
pub use optim::{adam_step, AdamState, ParamSlot};
pub use tape::{Tape, Var, NORM_EPS};
pub use tensor::{ConvLayerParams, Tensor1D};
