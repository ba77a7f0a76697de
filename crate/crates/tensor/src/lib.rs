//! Minimal tensor + reverse-mode autodiff engine for the codec.
//!
//! Everything is built around flat row-major buffers with explicit shape
//! metadata and a tape ([`Graph`]) that records each op as it executes.
//! The op set is deliberately small and closed; every differentiable op is
//! covered by finite-difference tests. Graphs are single-threaded by design
//! (interior mutability via `RefCell`, no `Send`).

mod checkpoint;
mod fd;
mod graph;
mod kernels;
mod param;
mod scalar;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointRecord, CKPT_MAGIC};
pub use fd::{finite_difference_check, FdReport, FdSettings, SUB_RESOLUTION_BOUND};
pub use graph::{Gradients, Graph, PadSpec, Vid};
pub use param::{name_seed, Init, ParamSet, Parameter};
pub use scalar::{Precision, Scalar};
pub use tensor::{Shape, Tensor};

use thiserror::Error;

/// Errors produced by tensor/graph operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op} at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("backward requires a scalar output, got shape {0}")]
    NonScalarOutput(String),
    #[error("duplicate parameter name: {0}")]
    DuplicateParam(String),
    #[error("unknown parameter: {0}")]
    UnknownParam(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("finite-difference harness: {0}")]
    FdHarness(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
