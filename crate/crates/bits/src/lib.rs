//! Bitstream side of the codec: a byte-oriented range coder, integer
//! frequency tables derived from the model's continuous densities, the
//! container layout, and the compress/decompress drivers that walk the
//! model's slice schedule symbol by symbol.
//!
//! Everything here is deterministic by construction. The decoder rebuilds
//! the exact coding distributions the encoder used by re-running the same
//! graph arithmetic on the same integers, so the only data that crosses the
//! wire is the entropy-coded symbols themselves.

mod coder;
mod container;
mod stream;
mod tables;

pub use coder::{RangeDecoder, RangeEncoder};
pub use container::{Container, StreamHeader, STREAM_MAGIC};
pub use stream::{compress, decompress, model_hash, CodingTrace};
pub use tables::{
    gaussian_window, golomb_bits, z_window, CdfTable, ScaleGrid, WindowTable, SCALE_LEVELS,
    SCALE_SIGMA_MAX, TABLE_TOTAL,
};

#[derive(Debug, thiserror::Error)]
pub enum BitsError {
    #[error(transparent)]
    Tensor(#[from] rasc_tensor::TensorError),
    #[error(transparent)]
    Signal(#[from] rasc_signal::SignalError),
    #[error(transparent)]
    Codec(#[from] rasc_codec::CodecError),
    #[error("stream format: {0}")]
    Format(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
}

pub type Result<T> = std::result::Result<T, BitsError>;
