use rasc_signal::{StftConfig, WindowKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CodecError, Result};

/// Everything needed to rebuild the model architecture. Serialized as JSON
/// into checkpoints and hashed into bitstream headers, so two parties agree
/// on the architecture before trusting each other's tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    /// Per-stage channel widths of the analysis backbone (synthesis mirrors).
    pub widths: Vec<usize>,
    /// Per-stage downsampling factors applied after each stage.
    pub strides: Vec<usize>,
    /// Attention blocks inside each stage's CRM block; must be nondecreasing
    /// so deeper (shorter-sequence) stages get more attention, not less.
    pub n_attn: Vec<usize>,
    /// Latent channels C of y.
    pub latent_channels: usize,
    /// Channel groups coded sequentially by the entropy model.
    pub n_slices: usize,
    /// Hyper-latent channels C_z of z.
    pub hyper_channels: usize,
    /// Temporal downsampling around every attention sub-path.
    pub attn_downsample: usize,
    /// Data-dependent decay modulation in the time-mix (off: static decay).
    pub dynamic_decay: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sample_rate: 16_000,
            n_fft: 512,
            hop: 160,
            widths: vec![64, 128, 192],
            strides: vec![2, 2, 1],
            n_attn: vec![1, 2, 4],
            latent_channels: 32,
            n_slices: 4,
            hyper_channels: 16,
            attn_downsample: 2,
            dynamic_decay: false,
        }
    }
}

impl ModelConfig {
    /// Small config for finite-difference work: every tensor a few dozen
    /// elements, but structurally identical to the default model.
    pub fn toy() -> Self {
        ModelConfig {
            sample_rate: 16_000,
            n_fft: 256,
            hop: 64,
            widths: vec![12, 16],
            strides: vec![2, 2],
            n_attn: vec![1, 1],
            latent_channels: 8,
            n_slices: 2,
            hyper_channels: 6,
            attn_downsample: 2,
            dynamic_decay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CodecError::Config(msg));
        if self.widths.is_empty()
            || self.widths.len() != self.strides.len()
            || self.widths.len() != self.n_attn.len()
        {
            return fail(format!(
                "stage lists must be nonempty and equal length: widths {}, strides {}, attn {}",
                self.widths.len(),
                self.strides.len(),
                self.n_attn.len()
            ));
        }
        if let Some(w) = self.widths.iter().find(|w| *w % 2 != 0 || **w == 0) {
            return fail(format!("stage width {w} must be even and positive"));
        }
        if self.n_attn.windows(2).any(|p| p[0] > p[1]) {
            return fail(format!(
                "attention counts must be nondecreasing with depth, got {:?}",
                self.n_attn
            ));
        }
        if self.strides.iter().any(|&s| s == 0 || s > 4) {
            return fail(format!("strides must be in 1..=4, got {:?}", self.strides));
        }
        if self.latent_channels == 0
            || self.n_slices == 0
            || self.latent_channels % self.n_slices != 0
        {
            return fail(format!(
                "latent channels {} must divide into {} slices",
                self.latent_channels, self.n_slices
            ));
        }
        if self.hyper_channels == 0 {
            return fail("hyper_channels must be positive".into());
        }
        if !matches!(self.attn_downsample, 1 | 2 | 4) {
            return fail(format!("attn_downsample must be 1, 2 or 4, got {}", self.attn_downsample));
        }
        // the STFT config enforces its own invariants
        self.stft()?;
        Ok(())
    }

    pub fn stft(&self) -> Result<StftConfig> {
        Ok(StftConfig::new(self.n_fft, self.hop, WindowKind::Hann, true)?)
    }

    /// Input channels of the analysis stem: real and imaginary planes.
    pub fn spectrum_channels(&self) -> usize {
        2 * (self.n_fft / 2 + 1)
    }

    pub fn slice_width(&self) -> usize {
        self.latent_channels / self.n_slices
    }

    pub fn stride_product(&self) -> usize {
        self.strides.iter().product()
    }

    /// Latent frames for a given STFT frame count (causal ceil at each stage).
    pub fn latent_frames(&self, t: usize) -> usize {
        self.strides.iter().fold(t, |acc, &s| acc.div_ceil(s))
    }

    /// Hyper-latent frames for a given latent frame count.
    pub fn hyper_frames(&self, t_y: usize) -> usize {
        t_y.div_ceil(2)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(s).map_err(|e| CodecError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 8 bytes of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.to_json().as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }
}
