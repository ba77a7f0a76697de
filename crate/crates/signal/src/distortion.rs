//! Reconstruction distortion: a time-domain L1 plus a multi-scale spectral
//! term averaging L1 and L2 distances between log-power and log-mel spectra
//! at window sizes 2^i for i in 5..=11 (hop = window/4, no centering).

use std::ops::RangeInclusive;

use rasc_tensor::Tensor;

use crate::mel::MelFilterbank;
use crate::stft::{stft, StftConfig, WindowKind};
use crate::wav::AudioClip;
use crate::{Result, SignalError};

/// Floor inside every log compression.
pub const LOG_EPS: f64 = 1e-5;

/// Window-size exponents of the spectral loss.
pub const SPECTRAL_SCALES: RangeInclusive<u32> = 5..=11;

/// One loss spectrogram; `padded` marks clips shorter than the window, which
/// were zero-extended to produce the single frame.
#[derive(Debug, Clone)]
pub struct LossSpectrum {
    pub values: Tensor<f64>,
    pub padded: bool,
}

fn scale_config(i: u32) -> Result<StftConfig> {
    if !SPECTRAL_SCALES.contains(&i) {
        return Err(SignalError::Config(format!(
            "spectral scale {i} outside {:?}",
            SPECTRAL_SCALES
        )));
    }
    let win = 1usize << i;
    StftConfig::new(win, win / 4, WindowKind::Hann, false)
}

pub fn n_mels_for_scale(i: u32) -> usize {
    64.min(1 << (i - 1))
}

fn power_spectrum(clip: &AudioClip, i: u32) -> Result<(Vec<f64>, usize, usize, bool)> {
    let cfg = scale_config(i)?;
    let padded = clip.len() < cfg.n_fft;
    let spec = stft(&clip.samples_f64(), &cfg)?;
    let (f, t) = (spec.f_bins, spec.n_frames);
    let mut power = vec![0.0f64; f * t];
    for (idx, p) in power.iter_mut().enumerate() {
        *p = spec.re[idx] * spec.re[idx] + spec.im[idx] * spec.im[idx];
    }
    Ok((power, f, t, padded))
}

/// S_i: log(|STFT|² + ε) with window 2^i, hop 2^(i−2).
pub fn log_power_spec(clip: &AudioClip, i: u32) -> Result<LossSpectrum> {
    let (mut power, f, t, padded) = power_spectrum(clip, i)?;
    for p in &mut power {
        *p = (*p + LOG_EPS).ln();
    }
    Ok(LossSpectrum { values: Tensor::from_vec(&[f, t], power).expect("consistent"), padded })
}

/// M_i: log(mel · |STFT|² + ε) with min(64, 2^(i−1)) mel bands.
pub fn mel_spec(clip: &AudioClip, i: u32) -> Result<LossSpectrum> {
    let (power, f, t, padded) = power_spectrum(clip, i)?;
    let n_mels = n_mels_for_scale(i);
    let bank = MelFilterbank::new(n_mels, f, clip.sample_rate, 0.0, clip.sample_rate as f64 / 2.0);
    let mut out = vec![0.0f64; n_mels * t];
    let mut col = vec![0.0f64; f];
    for tt in 0..t {
        for ff in 0..f {
            col[ff] = power[ff * t + tt];
        }
        for (m, v) in bank.apply(&col).into_iter().enumerate() {
            out[m * t + tt] = (v + LOG_EPS).ln();
        }
    }
    Ok(LossSpectrum { values: Tensor::from_vec(&[n_mels, t], out).expect("consistent"), padded })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}

/// Returns (time L1, multi-scale spectral distance). Both are zero exactly
/// when the clips are identical.
pub fn distortion(x: &AudioClip, xh: &AudioClip) -> Result<(f64, f64)> {
    if x.len() != xh.len() || x.sample_rate != xh.sample_rate {
        return Err(SignalError::Shape(format!(
            "clips disagree: {} @ {} Hz vs {} @ {} Hz",
            x.len(),
            x.sample_rate,
            xh.len(),
            xh.sample_rate
        )));
    }
    let lt = x
        .samples
        .iter()
        .zip(&xh.samples)
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum::<f64>()
        / x.len() as f64;

    let mut lf = 0.0;
    let mut n_scales = 0.0;
    for i in SPECTRAL_SCALES {
        let sa = log_power_spec(x, i)?;
        let sb = log_power_spec(xh, i)?;
        let ma = mel_spec(x, i)?;
        let mb = mel_spec(xh, i)?;
        lf += l1(sa.values.data(), sb.values.data()) + l2(sa.values.data(), sb.values.data());
        lf += l1(ma.values.data(), mb.values.data()) + l2(ma.values.data(), mb.values.data());
        n_scales += 1.0;
    }
    Ok((lt, lf / n_scales))
}
