//! The training objective: coded bits for both latents plus λ-weighted
//! distortion, assembled on one graph so a single backward pass reaches
//! every parameter. Rates are normalized per latent element and distortion
//! per audio sample; the report records both divisors so the decomposition
//! can be re-checked exactly.

use rasc_codec::{Binder, QuantSurrogate, SpeechCodec, TrainNoise};
use rasc_signal::{distortion, stft, AudioClip};
use rasc_tensor::{Graph, Scalar, Vid};
use serde::{Deserialize, Serialize};

use crate::spectral::{DistortionGraph, IstftGraph};
use crate::{Result, TrainError};

/// The λ values trained models are published at.
pub const LAMBDA_GRID: [f64; 6] = [0.25, 0.8, 2.0, 5.5, 9.0, 18.0];

/// Position in [`LAMBDA_GRID`], if λ sits on it.
pub fn lambda_index(lambda: f64) -> Option<u8> {
    LAMBDA_GRID.iter().position(|&l| (l - lambda).abs() < 1e-12).map(|i| i as u8)
}

/// One training step's scalars. `total` is recomposed from the parts with
/// the same arithmetic the graph uses, so the decomposition identity holds
/// bit-for-bit in f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub lambda: f64,
    pub total: f64,
    /// Code length of the latent, bits (unnormalized sum).
    pub rate_y_bits: f64,
    /// Code length of the side info, bits (unnormalized sum).
    pub rate_z_bits: f64,
    /// Mean absolute sample error.
    pub l_t: f64,
    /// Multi-scale spectral distance.
    pub l_f: f64,
    /// Latent elements the rates are divided by.
    pub n_latent: usize,
    /// Samples in the clip the distortion was averaged over.
    pub n_samples: usize,
}

impl LossReport {
    /// total, rebuilt from the parts: rate_y/n + rate_z/n + λ(L_t + L_f).
    pub fn composed_total(&self) -> f64 {
        let inv = 1.0 / self.n_latent as f64;
        (self.rate_y_bits * inv + self.rate_z_bits * inv) + (self.l_t + self.l_f) * self.lambda
    }

    /// Coded bits per latent element.
    pub fn bits_per_element(&self) -> f64 {
        (self.rate_y_bits + self.rate_z_bits) / self.n_latent as f64
    }
}

/// Graph handles to the loss and everything worth logging or reusing.
pub struct RdNodes {
    pub total: Vid,
    pub rate_y_bits: Vid,
    pub rate_z_bits: Vid,
    pub l_t: Vid,
    pub l_f: Vid,
    /// Reconstructed latent ȳ, for anyone who wants to inspect it.
    pub y_bar: Vid,
    /// Reconstructed signal [1, n_samples].
    pub x_hat: Vid,
    pub n_latent: usize,
}

/// Builds the full objective for one clip on the caller's graph. The caller
/// owns the binder (and with it the graph), so it can run backward on
/// `total` afterwards.
pub fn rd_loss_graph<T: Scalar>(
    codec: &SpeechCodec<T>,
    b: &Binder<'_, T>,
    synth: &IstftGraph<T>,
    dist: &DistortionGraph<T>,
    x: &AudioClip,
    lambda: f64,
    noise: &TrainNoise<T>,
    mode: QuantSurrogate,
) -> Result<RdNodes> {
    if x.is_empty() {
        return Err(TrainError::Config("cannot train on an empty clip".into()));
    }
    let cfg = codec.config();
    if x.sample_rate != cfg.sample_rate {
        return Err(TrainError::Config(format!(
            "clip is {} Hz, model expects {} Hz",
            x.sample_rate, cfg.sample_rate
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(TrainError::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let stft_cfg = cfg.stft()?;
    let t = stft_cfg.frame_count(x.len());
    let t_y = cfg.latent_frames(t);
    let t_z = cfg.hyper_frames(t_y);
    if noise.y.dims() != [cfg.latent_channels, t_y] || noise.z.dims() != [cfg.hyper_channels, t_z] {
        return Err(TrainError::Config(format!(
            "noise shaped {:?}/{:?}, this clip needs [{}, {t_y}]/[{}, {t_z}]",
            noise.y.dims(),
            noise.z.dims(),
            cfg.latent_channels,
            cfg.hyper_channels
        )));
    }

    let g = b.graph();
    let spec = stft(&x.samples_f64(), &stft_cfg)?;
    let spec_in = g.constant(spec.to_tensor::<T>())?;
    let y = codec.analyze(b, spec_in)?;
    let ent = codec.entropy_forward_train(b, y, noise, mode)?;
    let spec_hat = codec.synthesize(b, ent.y_bar, spec.n_frames)?;
    let x_hat = synth.apply(g, spec_hat, x.len())?;
    let d = dist.build(g, x_hat, x)?;

    let n_latent = cfg.latent_channels * t_y;
    let inv = 1.0 / n_latent as f64;
    let rate = g.add(g.mul_c(ent.rate_y_bits, inv)?, g.mul_c(ent.rate_z_bits, inv)?)?;
    let weighted = g.mul_c(g.add(d.l_t, d.l_f)?, lambda)?;
    let total = g.add(rate, weighted)?;

    Ok(RdNodes {
        total,
        rate_y_bits: ent.rate_y_bits,
        rate_z_bits: ent.rate_z_bits,
        l_t: d.l_t,
        l_f: d.l_f,
        y_bar: ent.y_bar,
        x_hat,
        n_latent,
    })
}

/// Reads the loss parts out of the graph and folds them into a report,
/// aborting with the full breakdown if anything is non-finite.
pub fn report_from_nodes<T: Scalar>(
    g: &Graph<T>,
    nodes: &RdNodes,
    lambda: f64,
    step: u64,
    n_samples: usize,
) -> Result<LossReport> {
    let scalar = |v: Vid| -> Result<f64> { Ok(g.value(v).item()?.to_f64()) };
    let rate_y_bits = scalar(nodes.rate_y_bits)?;
    let rate_z_bits = scalar(nodes.rate_z_bits)?;
    let l_t = scalar(nodes.l_t)?;
    let l_f = scalar(nodes.l_f)?;
    let graph_total = scalar(nodes.total)?;
    let parts = [rate_y_bits, rate_z_bits, l_t, l_f, graph_total];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite(format!(
            "step {step}: rate_y {rate_y_bits} bits, rate_z {rate_z_bits} bits, \
             l_t {l_t}, l_f {l_f}, total {graph_total}"
        )));
    }
    let mut report = LossReport {
        step,
        lambda,
        total: 0.0,
        rate_y_bits,
        rate_z_bits,
        l_t,
        l_f,
        n_latent: nodes.n_latent,
        n_samples,
    };
    report.total = report.composed_total();
    Ok(report)
}

/// One-shot evaluation: builds a private graph, runs the forward pass, and
/// returns the report (step 0). For training steps use [`rd_loss_graph`] so
/// the graph stays available for backward.
pub fn rd_loss<T: Scalar>(
    codec: &SpeechCodec<T>,
    x: &AudioClip,
    lambda: f64,
    noise: &TrainNoise<T>,
    mode: QuantSurrogate,
) -> Result<LossReport> {
    let g = Graph::new();
    let b = codec.binder(&g)?;
    let synth = IstftGraph::new(codec.config().stft()?);
    let dist = DistortionGraph::new(codec.config().sample_rate);
    let nodes = rd_loss_graph(codec, &b, &synth, &dist, x, lambda, noise, mode)?;
    report_from_nodes(&g, &nodes, lambda, 0, x.len())
}

/// Distortion between clips whose lengths may disagree by a little (codec
/// framing slack): both are cropped to the shorter length first. A mismatch
/// beyond `max_slack` samples is rejected rather than silently absorbed.
pub fn cropped_distortion(
    x: &AudioClip,
    xh: &AudioClip,
    max_slack: usize,
) -> Result<(f64, f64)> {
    if x.sample_rate != xh.sample_rate {
        return Err(TrainError::Config(format!(
            "sample rates disagree: {} vs {}",
            x.sample_rate, xh.sample_rate
        )));
    }
    let (a, b) = (x.len(), xh.len());
    if a.abs_diff(b) > max_slack {
        return Err(TrainError::Config(format!(
            "lengths {a} and {b} differ by more than {max_slack} samples"
        )));
    }
    let n = a.min(b);
    let xa = AudioClip::new(x.samples[..n].to_vec(), x.sample_rate)?;
    let xb = AudioClip::new(xh.samples[..n].to_vec(), xh.sample_rate)?;
    Ok(distortion(&xa, &xb)?)
}
