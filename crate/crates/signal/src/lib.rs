//! Audio I/O and spectral transforms for the codec: WAV read/write, the
//! analysis/synthesis STFT pair the model operates on, and the multi-scale
//! log-power / log-mel spectra consumed by the distortion loss.
//!
//! Everything here is plain (non-differentiable) f64 DSP. The training crate
//! re-expresses the loss spectra through graph ops; this crate is the
//! reference those are checked against, and the only implementation used at
//! encode/decode time.

mod distortion;
mod mel;
mod stft;
mod wav;

pub use distortion::{
    distortion, log_power_spec, mel_spec, n_mels_for_scale, LossSpectrum, LOG_EPS,
    SPECTRAL_SCALES,
};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{istft, stft, Spectrogram, StftConfig, WindowKind, ENVELOPE_GUARD};
pub use wav::{load_wav, save_wav, AudioClip, SAMPLE_RATE};

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("wav: {0}")]
    Wav(String),
    #[error("bad transform config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;
