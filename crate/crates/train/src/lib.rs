//! Rate-distortion training for the codec: the differentiable loss (coded
//! bits plus time-domain and multi-scale spectral distortion), an Adam
//! optimizer with global gradient clipping, and a deterministic overfit/
//! training loop that logs line-delimited reports and writes checkpoints.
//!
//! The spectral terms are re-expressed as graph ops (constant DFT kernels
//! inside conv nodes) so gradients reach the synthesis stack; rasc-signal's
//! plain DSP is the reference they are tested against.

mod loss;
mod optim;
mod spectral;
mod trainer;

pub use loss::{
    cropped_distortion, lambda_index, rd_loss, rd_loss_graph, report_from_nodes, LossReport,
    RdNodes, LAMBDA_GRID,
};
pub use optim::{Adam, AdamStep};
pub use spectral::{DistortionGraph, DistortionNodes, IstftGraph};
pub use trainer::{load_dataset, sample_noise, train, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] rasc_tensor::TensorError),
    #[error(transparent)]
    Signal(#[from] rasc_signal::SignalError),
    #[error(transparent)]
    Codec(#[from] rasc_codec::CodecError),
    #[error("training config: {0}")]
    Config(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log record: {0}")]
    Log(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
