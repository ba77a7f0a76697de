//! Spectral transforms as graph ops.
//!
//! Both directions are linear maps, so they fit in a single conv node with a
//! constant kernel: synthesis is a transposed conv whose kernel rows are the
//! windowed inverse-DFT basis (overlap-add falls out of the stride), and the
//! loss-side analysis is a strided conv whose kernel rows are the windowed
//! forward-DFT basis. Agreement with the plain FFT implementations in
//! rasc-signal is limited only by summation order (~1e-12), which the tests
//! pin down.

use std::f64::consts::PI;

use rasc_signal::{
    log_power_spec, mel_spec, n_mels_for_scale, AudioClip, MelFilterbank, StftConfig, WindowKind,
    ENVELOPE_GUARD, LOG_EPS, SPECTRAL_SCALES,
};
use rasc_tensor::{Graph, Scalar, Tensor, Vid};

use crate::{Result, TrainError};

/// Additive floor inside the L2 square root. Keeps the gradient finite when
/// the compared spectra coincide; its effect on the value (≤ 5e-7 absolute)
/// is far below any tolerance the loss is used at.
const L2_GUARD: f64 = 1e-12;

/// Windowed inverse-DFT basis for one frequency row pair. Bins 0 and n/2 of
/// a real signal's one-sided spectrum are real; their imaginary rows get a
/// zero kernel, mirroring the synthesis DSP which drops that leakage.
fn synthesis_kernel<T: Scalar>(cfg: &StftConfig) -> Tensor<T> {
    let n = cfg.n_fft;
    let f_bins = cfg.f_bins();
    let w = cfg.window.values(n);
    let mut k = vec![T::ZERO; 2 * f_bins * n];
    for f in 0..f_bins {
        let gamma = if f == 0 || f == n / 2 { 1.0 } else { 2.0 };
        for i in 0..n {
            let th = 2.0 * PI * ((f * i) % n) as f64 / n as f64;
            k[f * n + i] = T::from_f64(gamma * th.cos() * w[i] / n as f64);
            if f != 0 && f != n / 2 {
                k[(f_bins + f) * n + i] = T::from_f64(-gamma * th.sin() * w[i] / n as f64);
            }
        }
    }
    Tensor::from_vec(&[2 * f_bins, 1, n], k).expect("sizes agree by construction")
}

/// Windowed forward-DFT basis: real rows then (negated) imaginary rows.
fn analysis_kernel<T: Scalar>(n: usize, f_bins: usize, w: &[f64]) -> Tensor<T> {
    let mut k = vec![T::ZERO; 2 * f_bins * n];
    for f in 0..f_bins {
        for i in 0..n {
            let th = 2.0 * PI * ((f * i) % n) as f64 / n as f64;
            k[f * n + i] = T::from_f64(th.cos() * w[i]);
            k[(f_bins + f) * n + i] = T::from_f64(-th.sin() * w[i]);
        }
    }
    Tensor::from_vec(&[2 * f_bins, 1, n], k).expect("sizes agree by construction")
}

/// Inverse STFT as a graph node: transposed conv, divide by the accumulated
/// window-power envelope, crop the analysis padding. Mirrors
/// [`rasc_signal::istft`] exactly, including the envelope floor.
pub struct IstftGraph<T: Scalar> {
    cfg: StftConfig,
    kernel: Tensor<T>,
    window: Vec<f64>,
}

impl<T: Scalar> IstftGraph<T> {
    pub fn new(cfg: StftConfig) -> Self {
        let window = cfg.window.values(cfg.n_fft);
        IstftGraph { cfg, kernel: synthesis_kernel(&cfg), window }
    }

    fn envelope(&self, frames: usize) -> Vec<f64> {
        let total = (frames - 1) * self.cfg.hop + self.cfg.n_fft;
        let mut env = vec![0.0f64; total];
        for t in 0..frames {
            for (i, &wi) in self.window.iter().enumerate() {
                env[t * self.cfg.hop + i] += wi * wi;
            }
        }
        for e in &mut env {
            *e = e.max(ENVELOPE_GUARD);
        }
        env
    }

    /// `spec` is a [2F, T] node; the result is the signal as a [1, orig_len]
    /// node, where `orig_len` is the length the spectrogram was analyzed at.
    pub fn apply(&self, g: &Graph<T>, spec: Vid, orig_len: usize) -> Result<Vid> {
        let dims = g.shape(spec).dims().to_vec();
        if dims.len() != 2 || dims[0] != 2 * self.cfg.f_bins() {
            return Err(TrainError::Config(format!(
                "synthesis expects a [{}, T] spectrum, got {:?}",
                2 * self.cfg.f_bins(),
                dims
            )));
        }
        let frames = dims[1];
        let total = (frames - 1) * self.cfg.hop + self.cfg.n_fft;
        let pad_left = self.cfg.pad_left();
        if pad_left + orig_len > total {
            return Err(TrainError::Config(format!(
                "{frames} frames cover {total} samples, cannot crop {orig_len} at offset {pad_left}"
            )));
        }
        let kernel = g.constant(self.kernel.clone())?;
        let raw = g.conv_transpose1d(spec, kernel, self.cfg.hop)?;
        let env: Vec<T> = self.envelope(frames).into_iter().map(T::from_f64).collect();
        let env = g.constant(Tensor::from_vec(&[1, total], env)?)?;
        let x = g.div(raw, env)?;
        Ok(g.slice(x, 1, pad_left, orig_len)?)
    }
}

struct ScaleKernel<T: Scalar> {
    n_fft: usize,
    hop: usize,
    f_bins: usize,
    dft: Tensor<T>,
    mel: Tensor<T>,
}

/// Both distortion terms as graph nodes over a reconstruction, with the
/// reference side lifted from the plain DSP as constants (no gradient flows
/// into the target).
pub struct DistortionGraph<T: Scalar> {
    sample_rate: u32,
    scales: Vec<ScaleKernel<T>>,
}

pub struct DistortionNodes {
    /// Mean absolute sample error.
    pub l_t: Vid,
    /// Multi-scale spectral distance, averaged over scales.
    pub l_f: Vid,
}

impl<T: Scalar> DistortionGraph<T> {
    pub fn new(sample_rate: u32) -> Self {
        let scales = SPECTRAL_SCALES
            .map(|i| {
                let n = 1usize << i;
                let f_bins = n / 2 + 1;
                let w = WindowKind::Hann.values(n);
                let bank = MelFilterbank::new(
                    n_mels_for_scale(i),
                    f_bins,
                    sample_rate,
                    0.0,
                    sample_rate as f64 / 2.0,
                );
                let mel = Tensor::from_vec(
                    &[bank.n_mels, f_bins],
                    bank.weights.iter().map(|&v| T::from_f64(v)).collect(),
                )
                .expect("bank dimensions are consistent");
                ScaleKernel { n_fft: n, hop: n / 4, f_bins, dft: analysis_kernel(n, f_bins, &w), mel }
            })
            .collect();
        DistortionGraph { sample_rate, scales }
    }

    fn l1(&self, g: &Graph<T>, a: Vid, b: Vid) -> Result<Vid> {
        Ok(g.mean_all(g.abs(g.sub(a, b)?)?)?)
    }

    fn l2(&self, g: &Graph<T>, a: Vid, b: Vid) -> Result<Vid> {
        let d = g.sub(a, b)?;
        Ok(g.sqrt(g.add_c(g.mean_all(g.mul(d, d)?)?, L2_GUARD)?)?)
    }

    /// `x_hat` is a [1, L] node; `x` the target clip of the same length.
    pub fn build(&self, g: &Graph<T>, x_hat: Vid, x: &AudioClip) -> Result<DistortionNodes> {
        let dims = g.shape(x_hat).dims().to_vec();
        if dims.len() != 2 || dims[0] != 1 || dims[1] != x.len() {
            return Err(TrainError::Config(format!(
                "reconstruction shape {:?} does not match the {}-sample target",
                dims,
                x.len()
            )));
        }
        if x.sample_rate != self.sample_rate {
            return Err(TrainError::Config(format!(
                "target is {} Hz but the mel banks were built for {} Hz",
                x.sample_rate, self.sample_rate
            )));
        }
        let len = x.len();
        let lifted: Vec<T> = x.samples_f64().into_iter().map(T::from_f64).collect();
        let x_const = g.constant(Tensor::from_vec(&[1, len], lifted)?)?;
        let l_t = self.l1(g, x_hat, x_const)?;

        let mut acc: Option<Vid> = None;
        for (scale, i) in self.scales.iter().zip(SPECTRAL_SCALES) {
            // zero-extend clips shorter than one window (same framing the
            // plain analysis applies); longer clips drop the partial tail
            // frame on both sides identically
            let xin = if len < scale.n_fft {
                g.pad_zero(x_hat, 1, 0, scale.n_fft - len)?
            } else {
                x_hat
            };
            let dft = g.constant(scale.dft.clone())?;
            let out = g.conv1d(xin, dft, scale.hop, 1)?;
            let re = g.slice(out, 0, 0, scale.f_bins)?;
            let im = g.slice(out, 0, scale.f_bins, scale.f_bins)?;
            let power = g.add(g.mul(re, re)?, g.mul(im, im)?)?;
            let s_hat = g.ln(g.add_c(power, LOG_EPS)?)?;
            let m_hat = g.ln(g.add_c(g.matmul(g.constant(scale.mel.clone())?, power)?, LOG_EPS)?)?;

            let s_ref = g.constant(log_power_spec(x, i)?.values.to_precision::<T>())?;
            let m_ref = g.constant(mel_spec(x, i)?.values.to_precision::<T>())?;

            for term in [
                self.l1(g, s_hat, s_ref)?,
                self.l2(g, s_hat, s_ref)?,
                self.l1(g, m_hat, m_ref)?,
                self.l2(g, m_hat, m_ref)?,
            ] {
                acc = Some(match acc {
                    Some(a) => g.add(a, term)?,
                    None => term,
                });
            }
        }
        let sum = acc.expect("at least one scale");
        let l_f = g.mul_c(sum, 1.0 / self.scales.len() as f64)?;
        Ok(DistortionNodes { l_t, l_f })
    }
}
