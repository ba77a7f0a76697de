//! Compress/decompress drivers. Both sides rebuild identical coding
//! distributions by running the same graph arithmetic on the same integers:
//! the decoder never sees the latent element it is about to decode, only
//! the side info and the slices already reconstructed. The one fragile
//! point is symbol formation — residuals are rounded in plain f64 and the
//! *integer* is what both sides add back to the predicted mean, so no
//! float identity like (n + mu) - mu ever has to hold.

use rasc_codec::SpeechCodec;
use rasc_signal::{istft, stft, AudioClip, Spectrogram};
use rasc_tensor::{Graph, Scalar, Tensor, Vid};
use sha2::{Digest, Sha256};

use crate::container::{Container, StreamHeader};
use crate::tables::{z_window, ScaleGrid, WindowTable};
use crate::{BitsError, RangeDecoder, RangeEncoder, Result};

/// Refuse headers claiming more than ~37 hours of audio; anything bigger is
/// a corrupt length field trying to become an allocation.
const MAX_SAMPLES: u64 = 1 << 31;

/// First 8 bytes of the SHA-256 of the serialized checkpoint. This is the
/// identity streams embed, so retraining (or even nudging one weight)
/// cleanly invalidates old bitstreams instead of quietly mis-decoding them.
pub fn model_hash<T: Scalar>(codec: &SpeechCodec<T>) -> [u8; 8] {
    let digest = Sha256::digest(codec.to_checkpoint().to_bytes());
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

/// Accounting from one coding pass, identical on the two sides of a stream.
/// `latent_digest` fingerprints the reconstructed latent; compress and
/// decompress agreeing on it is the transport-losslessness check.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingTrace {
    pub n_z_symbols: usize,
    pub n_y_symbols: usize,
    pub estimated_z_bits: f64,
    pub estimated_y_bits: f64,
    pub z_payload_bytes: usize,
    pub y_payload_bytes: usize,
    pub slice_estimated_bits: Vec<f64>,
    pub slice_payload_bytes: Vec<usize>,
    pub escapes: usize,
    pub latent_digest: [u8; 32],
}

impl CodingTrace {
    pub fn estimated_bits(&self) -> f64 {
        self.estimated_z_bits + self.estimated_y_bits
    }

    pub fn payload_bytes(&self) -> usize {
        self.z_payload_bytes + self.y_payload_bytes
    }
}

pub fn compress<T: Scalar>(
    codec: &SpeechCodec<T>,
    clip: &AudioClip,
    lambda_index: u8,
    lambda: f64,
) -> Result<(Vec<u8>, CodingTrace)> {
    let cfg = codec.config();
    if clip.sample_rate != cfg.sample_rate {
        return Err(BitsError::Format(format!(
            "clip is {} Hz, model expects {} Hz",
            clip.sample_rate, cfg.sample_rate
        )));
    }
    if clip.is_empty() {
        return Err(BitsError::Format("cannot compress an empty clip".into()));
    }
    if clip.len() as u64 > MAX_SAMPLES {
        return Err(BitsError::Format(format!("clip of {} samples is too long", clip.len())));
    }
    let stft_cfg = cfg.stft()?;
    let spec = stft(&clip.samples_f64(), &stft_cfg)?;
    let n_frames = spec.n_frames;
    let t_y = cfg.latent_frames(n_frames);

    let g = Graph::new();
    let b = codec.binder(&g)?;
    let y = codec.analyze(&b, g.constant(spec.to_tensor())?)?;
    let z = codec.hyper_encode(&b, y)?;

    // side info first: plain rounding, coded channel-major under the
    // learned per-channel densities
    let z_vals = g.value(z);
    let mut z_syms = Vec::with_capacity(z_vals.numel());
    for &v in z_vals.data() {
        z_syms.push(integer_symbol(v.to_f64(), "side info")?);
    }
    let zt = z_tables(codec)?;
    let mut zenc = RangeEncoder::new();
    let mut estimated_z_bits = 0.0;
    let mut escapes = 0usize;
    for (i, &n) in z_syms.iter().enumerate() {
        let wt = &zt[i / z_vals.dims()[1]];
        estimated_z_bits += wt.cost_bits(n);
        escapes += wt.escapes(n) as usize;
        wt.encode(&mut zenc, n);
    }
    let z_section = zenc.finish();

    let z_hat = g.constant(tensor_of_symbols::<T>(z_vals.dims(), &z_syms)?)?;
    let feats = codec.hyper_decode(&b, z_hat, t_y)?;

    let y_slices = codec.split_slices(&b, y)?;
    let grid = ScaleGrid::new()?;
    let mut y_sections = Vec::with_capacity(cfg.n_slices);
    let mut slice_estimated_bits = Vec::with_capacity(cfg.n_slices);
    let mut slice_payload_bytes = Vec::with_capacity(cfg.n_slices);
    let mut n_y_symbols = 0usize;
    let mut y_bar_prev: Vec<Vid> = Vec::new();
    for i in 0..cfg.n_slices {
        let st = codec.slice_phi(&b, i, &feats, &y_bar_prev)?;
        let mu = g.value(st.mu);
        let sigma = g.value(st.sigma);
        let yv = g.value(y_slices[i]);

        let mut enc = RangeEncoder::new();
        let mut bits = 0.0;
        let mut syms = Vec::with_capacity(yv.numel());
        for ((&yj, &mj), &sj) in yv.data().iter().zip(mu.data()).zip(sigma.data()) {
            let n = integer_symbol(yj.to_f64() - mj.to_f64(), "latent")?;
            let wt = grid.window(grid.level(sj.to_f64()));
            bits += wt.cost_bits(n);
            escapes += wt.escapes(n) as usize;
            wt.encode(&mut enc, n);
            syms.push(n);
        }
        n_y_symbols += syms.len();

        let n_const = g.constant(tensor_of_symbols::<T>(yv.dims(), &syms)?)?;
        let y_hat = g.add(n_const, st.mu)?;
        let r = codec.slice_lrp(&b, i, &feats, &y_bar_prev, y_hat)?;
        y_bar_prev.push(g.add(y_hat, r)?);

        let section = enc.finish();
        slice_estimated_bits.push(bits);
        slice_payload_bytes.push(section.len());
        y_sections.push(section);
    }
    let y_bar = g.concat(&y_bar_prev, 0)?;

    let trace = CodingTrace {
        n_z_symbols: z_syms.len(),
        n_y_symbols,
        estimated_z_bits,
        estimated_y_bits: slice_estimated_bits.iter().sum(),
        z_payload_bytes: z_section.len(),
        y_payload_bytes: slice_payload_bytes.iter().sum(),
        slice_estimated_bits,
        slice_payload_bytes,
        escapes,
        latent_digest: tensor_digest(&g.value(y_bar)),
    };
    let container = Container {
        header: StreamHeader {
            model_hash: model_hash(codec),
            sample_rate: cfg.sample_rate,
            n_samples: clip.len() as u64,
            n_frames: n_frames as u32,
            n_fft: cfg.n_fft as u16,
            hop: cfg.hop as u16,
            window_tag: stft_cfg.window.tag(),
            center: stft_cfg.center,
            lambda_index,
            lambda,
            n_slices: cfg.n_slices as u8,
        },
        z_section,
        y_sections,
    };
    Ok((container.to_bytes(), trace))
}

pub fn decompress<T: Scalar>(
    codec: &SpeechCodec<T>,
    bytes: &[u8],
) -> Result<(AudioClip, CodingTrace)> {
    let container = Container::from_bytes(bytes)?;
    let h = &container.header;
    let own_hash = model_hash(codec);
    if h.model_hash != own_hash {
        return Err(BitsError::ModelMismatch(format!(
            "stream was coded against model {:016x}, loaded model is {:016x}",
            u64::from_le_bytes(h.model_hash),
            u64::from_le_bytes(own_hash)
        )));
    }
    let cfg = codec.config();
    let stft_cfg = cfg.stft()?;
    // the hash already pins the architecture; these catch streams whose
    // header was edited after coding
    if h.sample_rate != cfg.sample_rate
        || h.n_fft as usize != cfg.n_fft
        || h.hop as usize != cfg.hop
        || h.window_tag != stft_cfg.window.tag()
        || h.center != stft_cfg.center
        || h.n_slices as usize != cfg.n_slices
    {
        return Err(BitsError::Format("stream header disagrees with the loaded model".into()));
    }
    if h.n_samples == 0 || h.n_samples > MAX_SAMPLES {
        return Err(BitsError::Format(format!("header claims {} samples", h.n_samples)));
    }
    let n_samples = h.n_samples as usize;
    let n_frames = h.n_frames as usize;
    if stft_cfg.frame_count(n_samples) != n_frames {
        return Err(BitsError::Format(format!(
            "header says {n_frames} frames for {n_samples} samples; the analysis framing gives {}",
            stft_cfg.frame_count(n_samples)
        )));
    }
    let t_y = cfg.latent_frames(n_frames);
    let t_z = cfg.hyper_frames(t_y);
    let ws = cfg.slice_width();

    let zt = z_tables(codec)?;
    let mut zdec = RangeDecoder::new(&container.z_section)?;
    let mut z_syms = Vec::with_capacity(cfg.hyper_channels * t_z);
    let mut estimated_z_bits = 0.0;
    let mut escapes = 0usize;
    for c in 0..cfg.hyper_channels {
        for _ in 0..t_z {
            let n = zt[c].decode(&mut zdec)?;
            estimated_z_bits += zt[c].cost_bits(n);
            escapes += zt[c].escapes(n) as usize;
            z_syms.push(n);
        }
    }

    let g = Graph::new();
    let b = codec.binder(&g)?;
    let z_hat = g.constant(tensor_of_symbols::<T>(&[cfg.hyper_channels, t_z], &z_syms)?)?;
    let feats = codec.hyper_decode(&b, z_hat, t_y)?;

    let grid = ScaleGrid::new()?;
    let mut slice_estimated_bits = Vec::with_capacity(cfg.n_slices);
    let mut slice_payload_bytes = Vec::with_capacity(cfg.n_slices);
    let mut n_y_symbols = 0usize;
    let mut y_bar_prev: Vec<Vid> = Vec::new();
    for i in 0..cfg.n_slices {
        let st = codec.slice_phi(&b, i, &feats, &y_bar_prev)?;
        let sigma = g.value(st.sigma);

        let mut dec = RangeDecoder::new(&container.y_sections[i])?;
        let mut bits = 0.0;
        let mut syms = Vec::with_capacity(ws * t_y);
        for &sj in sigma.data() {
            let wt = grid.window(grid.level(sj.to_f64()));
            let n = wt.decode(&mut dec)?;
            bits += wt.cost_bits(n);
            escapes += wt.escapes(n) as usize;
            syms.push(n);
        }
        n_y_symbols += syms.len();

        let n_const = g.constant(tensor_of_symbols::<T>(&[ws, t_y], &syms)?)?;
        let y_hat = g.add(n_const, st.mu)?;
        let r = codec.slice_lrp(&b, i, &feats, &y_bar_prev, y_hat)?;
        y_bar_prev.push(g.add(y_hat, r)?);

        slice_estimated_bits.push(bits);
        slice_payload_bytes.push(container.y_sections[i].len());
    }
    let y_bar = g.concat(&y_bar_prev, 0)?;

    let trace = CodingTrace {
        n_z_symbols: z_syms.len(),
        n_y_symbols,
        estimated_z_bits,
        estimated_y_bits: slice_estimated_bits.iter().sum(),
        z_payload_bytes: container.z_section.len(),
        y_payload_bytes: slice_payload_bytes.iter().sum(),
        slice_estimated_bits,
        slice_payload_bytes,
        escapes,
        latent_digest: tensor_digest(&g.value(y_bar)),
    };

    let spec_hat = codec.synthesize(&b, y_bar, n_frames)?;
    let spec = Spectrogram::from_tensor(&g.value(spec_hat), stft_cfg, n_samples)?;
    let x = istft(&spec)?;
    let clip = AudioClip::new(x.iter().map(|&v| v as f32).collect(), cfg.sample_rate)?;
    Ok((clip, trace))
}

fn z_tables<T: Scalar>(codec: &SpeechCodec<T>) -> Result<Vec<WindowTable>> {
    (0..codec.config().hyper_channels).map(|c| z_window(&codec.fz_channel(c)?)).collect()
}

/// Residual to integer. Plain f64 rounding, half away from zero; only the
/// encoder ever runs this, so it needs no cross-side float agreement — but
/// it must refuse values whose rounding would not be exact as a float.
fn integer_symbol(v: f64, what: &str) -> Result<i64> {
    if !v.is_finite() || v.abs() >= 1e15 {
        return Err(BitsError::Format(format!("{what} value {v} is outside the codable range")));
    }
    Ok(v.round() as i64)
}

fn tensor_of_symbols<T: Scalar>(dims: &[usize], syms: &[i64]) -> Result<Tensor<T>> {
    Ok(Tensor::from_vec(dims, syms.iter().map(|&n| T::from_f64(n as f64)).collect())?)
}

fn tensor_digest<T: Scalar>(t: &Tensor<T>) -> [u8; 32] {
    let mut h = Sha256::new();
    for &v in t.data() {
        h.update(v.to_f64().to_le_bytes());
    }
    h.finalize().into()
}
