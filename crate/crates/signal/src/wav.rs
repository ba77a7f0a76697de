//! PCM16 mono WAV in and out. No resampling: anything that isn't 16-bit
//! mono 16 kHz is rejected so a mismatch surfaces at the file boundary
//! instead of as garbage audio later.

use std::path::Path;

use crate::{Result, SignalError};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::Wav(format!("non-finite sample at index {pos}")));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn samples_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| v as f64).collect()
    }
}

pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| SignalError::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(SignalError::Wav(format!(
            "unsupported channel count {} (mono only)",
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(SignalError::Wav(format!(
            "unsupported sample format {:?}/{} (PCM16 only)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(SignalError::Wav(format!(
            "unsupported sample rate {} (expected {SAMPLE_RATE})",
            spec.sample_rate
        )));
    }
    let samples: Vec<f32> = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SignalError::Wav(e.to_string()))?;
    AudioClip::new(samples, SAMPLE_RATE)
}

pub fn save_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| SignalError::Wav(format!("{}: {e}", path.display())))?;
    for &v in &clip.samples {
        let scaled = (v.clamp(-1.0, 1.0) as f64 * 32768.0).round();
        let q = scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(q).map_err(|e| SignalError::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| SignalError::Wav(e.to_string()))?;
    Ok(())
}
