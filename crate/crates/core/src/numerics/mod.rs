//! Tensor algebra, reverse-mode differentiation and optimizers.

mod lstm;
mod optim;
mod params;
mod sample;
mod tape;
mod tensor;

use thiserror::Error;

pub use lstm::{lstm_param_count, lstm_step, LstmVars};
pub use optim::{sgd_step, Optimizer, RmsProp, RmsPropConfig};
pub use params::{Gradients, ParamId, ParameterSet};
pub use sample::{categorical_sample, validate_distribution};
pub use tape::{conv_output_size, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("convolution of extent {size} with kernel {kernel} and stride {stride} has no integral output size")]
    NonIntegralOutput {
        size: usize,
        kernel: usize,
        stride: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable {0} is not recorded on this tape")]
    UnknownVar(usize),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}
