//! The learned codec model: analysis/synthesis backbones built from
//! convolution + linear-attention blocks, the hyper-prior entropy model with
//! channel-slice-sequential parameter prediction, latent residual prediction,
//! and the quantizers tying them together.
//!
//! Every forward pass — training *and* inference — runs through the autodiff
//! graph in `rasc-tensor`, so the encoder and decoder sides of a stream
//! execute literally the same arithmetic. That is what makes the predicted
//! distribution parameters bit-identical across the two sides, which the
//! arithmetic coder requires.

mod backbone;
mod blocks;
mod config;
mod factorized;
mod gaussian;
mod hyper;
mod model;
mod quantize;
mod rwkv;
mod slices;

pub use backbone::{Decoder, Encoder};
pub use blocks::{AttnStack, Conv, CrmBlock, SeanetUnit};
pub use config::ModelConfig;
pub use factorized::{FactorizedDensity, FzChannel};
pub use gaussian::{gaussian_bin_graph, gaussian_pmf, normal_cdf, SIGMA_MIN};
pub use hyper::{HyperDecoder, HyperEncoder, HyperFeatures};
pub use model::{
    Binder, EntropyOutput, QuantSurrogate, SliceTensors, SpeechCodec, TrainNoise,
};
pub use quantize::{quantize_noise, quantize_round, quantize_round_ste_graph};
pub use rwkv::{wkv_graph, ChannelMix, RwkvState, TimeMix, WkvState};
pub use slices::{LrpNet, PhiNet, SliceRunner};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error(transparent)]
    Tensor(#[from] rasc_tensor::TensorError),
    #[error(transparent)]
    Signal(#[from] rasc_signal::SignalError),
    #[error("bad model config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("slice {got} out of order (expected {expected})")]
    SliceOrder { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, CodecError>;
