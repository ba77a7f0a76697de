//! Forward/inverse STFT with the framing conventions the codec fixes:
//! centered analysis pads (n_fft − hop)/2 reflected samples on each side so a
//! signal of length L yields ceil(L / hop) frames, and synthesis is
//! weighted-overlap-add normalized by the running window-power envelope, so
//! the round trip is exact wherever the envelope is well conditioned.
//!
//! A strict constant-overlap-add identity is deliberately *not* required at
//! config build: dividing by the measured envelope reconstructs exactly for
//! any window/hop whose envelope stays bounded away from zero, which is what
//! the conditioning check below enforces.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use rasc_tensor::{Scalar, Tensor};

use crate::{Result, SignalError};

/// Floor under the window-power envelope during synthesis, so a single
/// ill-covered edge sample cannot blow up the division. Anything the trainer
/// uses to mirror [`istft`] must clamp with the same value.
pub const ENVELOPE_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

impl WindowKind {
    pub fn tag(self) -> u8 {
        match self {
            WindowKind::Hann => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(WindowKind::Hann),
            other => Err(SignalError::Config(format!("unknown window tag {other}"))),
        }
    }

    /// Periodic window of length `n`.
    pub fn values(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub center: bool,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, window: WindowKind, center: bool) -> Result<Self> {
        if n_fft == 0 || n_fft % 2 != 0 {
            return Err(SignalError::Config(format!("n_fft must be even and > 0, got {n_fft}")));
        }
        if hop == 0 || hop > n_fft {
            return Err(SignalError::Config(format!("hop must be in 1..={n_fft}, got {hop}")));
        }
        if center && (n_fft - hop) % 2 != 0 {
            return Err(SignalError::Config(format!(
                "centered framing needs even n_fft - hop, got {n_fft} - {hop}"
            )));
        }
        let cfg = StftConfig { n_fft, hop, window, center };
        cfg.check_conditioning()?;
        Ok(cfg)
    }

    /// Synthesis divides by Σ_t w²(n − t·hop); reject window/hop pairs whose
    /// envelope dips near zero (e.g. Hann at hop = n_fft), since those turn
    /// the normalization into noise amplification.
    fn check_conditioning(&self) -> Result<()> {
        let w = self.window.values(self.n_fft);
        let frames = 8 * self.n_fft / self.hop;
        let total = (frames - 1) * self.hop + self.n_fft;
        let mut env = vec![0.0f64; total];
        for t in 0..frames {
            for (i, &wi) in w.iter().enumerate() {
                env[t * self.hop + i] += wi * wi;
            }
        }
        // steady-state region only: edges are handled by padding in practice
        let lo = self.n_fft;
        let hi = total - self.n_fft;
        let (mut mn, mut mx) = (f64::INFINITY, 0.0f64);
        for &e in &env[lo..hi] {
            mn = mn.min(e);
            mx = mx.max(e);
        }
        if mn < 0.1 || mn < 0.5 * mx {
            return Err(SignalError::Config(format!(
                "overlap-add envelope badly conditioned (min {mn:.4}, max {mx:.4}) \
                 for n_fft {} hop {}",
                self.n_fft, self.hop
            )));
        }
        Ok(())
    }

    pub fn f_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn pad_left(&self) -> usize {
        if self.center {
            (self.n_fft - self.hop) / 2
        } else {
            0
        }
    }

    /// Frames produced for a signal of length `len`.
    pub fn frame_count(&self, len: usize) -> usize {
        if self.center {
            len.div_ceil(self.hop)
        } else if len < self.n_fft {
            1
        } else {
            1 + (len - self.n_fft) / self.hop
        }
    }
}

impl Default for StftConfig {
    /// 32 ms Hann frames every 10 ms at 16 kHz — the codec-wide analysis
    /// setting, recorded in every bitstream header.
    fn default() -> Self {
        StftConfig::new(512, 160, WindowKind::Hann, true).expect("default config is valid")
    }
}

/// One-sided complex spectrogram, `f_bins x n_frames` row-major per part.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub f_bins: usize,
    pub n_frames: usize,
    pub config: StftConfig,
    /// Length of the signal this was computed from; istft crops back to it.
    pub orig_len: usize,
}

impl Spectrogram {
    /// Stacks real rows then imaginary rows into a `[2F, T]` tensor, the
    /// layout the encoder stem consumes.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let f = self.f_bins;
        let t = self.n_frames;
        let mut data = Vec::with_capacity(2 * f * t);
        data.extend(self.re.iter().map(|&v| T::from_f64(v)));
        data.extend(self.im.iter().map(|&v| T::from_f64(v)));
        Tensor::from_vec(&[2 * f, t], data).expect("sizes agree by construction")
    }

    /// Inverse of [`to_tensor`]: reads a `[2F, T]` tensor back into the
    /// complex parts. `orig_len` must be supplied since the tensor loses it.
    pub fn from_tensor<T: Scalar>(
        t: &Tensor<T>,
        config: StftConfig,
        orig_len: usize,
    ) -> Result<Self> {
        let dims = t.dims().to_vec();
        let f = config.f_bins();
        if dims.len() != 2 || dims[0] != 2 * f {
            return Err(SignalError::Shape(format!(
                "expected [2*{f}, T] tensor, got {dims:?}"
            )));
        }
        let frames = dims[1];
        let data = t.data();
        let re = data[..f * frames].iter().map(|v| v.to_f64()).collect();
        let im = data[f * frames..].iter().map(|v| v.to_f64()).collect();
        Ok(Spectrogram { re, im, f_bins: f, n_frames: frames, config, orig_len })
    }

    pub fn magnitude_sq(&self, f: usize, t: usize) -> f64 {
        let i = f * self.n_frames + t;
        self.re[i] * self.re[i] + self.im[i] * self.im[i]
    }
}

/// Symmetric ("bounce") reflection of an arbitrary signed index into
/// [0, len): ..., x[2], x[1], x[0], x[1], x[2], ... with period 2(len−1).
fn reflect_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let p = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(p);
    if m >= len as isize {
        m = p - m;
    }
    m as usize
}

fn padded_signal(x: &[f64], cfg: &StftConfig) -> (Vec<f64>, usize) {
    let len = x.len();
    let t = cfg.frame_count(len);
    let needed = (t - 1) * cfg.hop + cfg.n_fft;
    let pad_left = cfg.pad_left();
    if cfg.center {
        let mut out = Vec::with_capacity(needed);
        for i in 0..needed {
            out.push(x[reflect_index(i as isize - pad_left as isize, len)]);
        }
        (out, t)
    } else {
        // loss-spectrum framing: zero-pad the tail only when the clip is
        // shorter than one window
        let mut out = x.to_vec();
        out.resize(needed.max(len), 0.0);
        out.truncate(needed);
        (out, t)
    }
}

pub fn stft(x: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    if x.is_empty() {
        return Err(SignalError::Shape("cannot transform an empty signal".into()));
    }
    let (padded, n_frames) = padded_signal(x, cfg);
    let n = cfg.n_fft;
    let f_bins = cfg.f_bins();
    let w = cfg.window.values(n);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf = vec![Complex64::default(); n];
    let mut re = vec![0.0f64; f_bins * n_frames];
    let mut im = vec![0.0f64; f_bins * n_frames];

    for t in 0..n_frames {
        let start = t * cfg.hop;
        for i in 0..n {
            buf[i] = Complex64::new(padded[start + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..f_bins {
            re[f * n_frames + t] = buf[f].re;
            im[f * n_frames + t] = buf[f].im;
        }
    }

    Ok(Spectrogram { re, im, f_bins, n_frames, config: *cfg, orig_len: x.len() })
}

/// Weighted-overlap-add synthesis, dividing by the accumulated window-power
/// envelope, then cropping the analysis padding away.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let cfg = &spec.config;
    let n = cfg.n_fft;
    let f_bins = spec.f_bins;
    if f_bins != cfg.f_bins() {
        return Err(SignalError::Shape(format!(
            "spectrogram has {f_bins} bins but config wants {}",
            cfg.f_bins()
        )));
    }
    let frames = spec.n_frames;
    let total = (frames - 1) * cfg.hop + n;
    let w = cfg.window.values(n);

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    let mut acc = vec![0.0f64; total];
    let mut env = vec![0.0f64; total];

    for t in 0..frames {
        buf[0] = Complex64::new(spec.re[t], spec.im[t]);
        for f in 1..f_bins {
            let idx = f * frames + t;
            buf[f] = Complex64::new(spec.re[idx], spec.im[idx]);
            if f != n / 2 {
                buf[n - f] = buf[f].conj();
            }
        }
        // bins 0 and n/2 are real for real input; imaginary leakage there
        // would alias, so drop it
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            let sample = buf[i].re / n as f64;
            acc[start + i] += sample * w[i];
            env[start + i] += w[i] * w[i];
        }
    }

    let pad_left = cfg.pad_left();
    if pad_left + spec.orig_len > total {
        return Err(SignalError::Shape(format!(
            "{} frames cannot cover {} output samples",
            frames, spec.orig_len
        )));
    }
    Ok((0..spec.orig_len)
        .map(|i| {
            let j = pad_left + i;
            acc[j] / env[j].max(ENVELOPE_GUARD)
        })
        .collect())
}
