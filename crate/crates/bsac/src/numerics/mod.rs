//! Dense f64 tensors, tape-based reverse-mode differentiation, multilayer
//! perceptrons, and an adaptive-moment optimizer. Everything learned in this
//! crate runs on this substrate.

mod adam;
mod checkpoint;
mod mlp;
mod tape;
mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use mlp::{Mlp, MlpVars};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use std::fmt;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    /// An operation received operands whose shapes do not fit.
    Dimension { op: &'static str, detail: String },
    /// backward was called on a non-scalar value.
    NonScalarBackward { rows: usize, cols: usize },
    /// A published operation produced NaN or infinity.
    NonFinite { what: String },
    /// A gradient fed to the optimizer is NaN or infinite.
    NonFiniteGrad { param: String },
    /// Checkpoint file problems.
    Checkpoint { detail: String },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::Dimension { op, detail } => {
                write!(f, "dimension error in {op}: {detail}")
            }
            NumericsError::NonScalarBackward { rows, cols } => {
                write!(f, "backward requires a scalar, got {rows}x{cols}")
            }
            NumericsError::NonFinite { what } => write!(f, "non-finite value in {what}"),
            NumericsError::NonFiniteGrad { param } => {
                write!(f, "non-finite gradient for parameter {param}")
            }
            NumericsError::Checkpoint { detail } => write!(f, "checkpoint error: {detail}"),
        }
    }
}

impl std::error::Error for NumericsError {}

pub type Result<T> = std::result::Result<T, NumericsError>;
