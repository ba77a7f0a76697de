//! The optimization loop: deterministic random crops, frozen per-step noise,
//! one graph per step, JSON-lines logging, periodic checkpoints.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rasc_codec::{ModelConfig, QuantSurrogate, SpeechCodec, TrainNoise};
use rasc_signal::{load_wav, AudioClip};
use rasc_tensor::{save_checkpoint, Graph, Scalar, Tensor};

use crate::loss::{rd_loss_graph, report_from_nodes, LossReport};
use crate::optim::Adam;
use crate::spectral::{DistortionGraph, IstftGraph};
use crate::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub steps: u64,
    /// Crop length per step; clips shorter than this are used whole.
    pub crop_samples: usize,
    pub seed: u64,
    /// Emit a log record every this many steps (0: only the final step).
    pub log_every: u64,
    /// Write the checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    pub surrogate: QuantSurrogate,
}

impl TrainConfig {
    /// Defaults for one λ: lr 3e-4, 2000 steps, half-second crops at 16 kHz.
    pub fn new(lambda: f64) -> Self {
        TrainConfig {
            lambda,
            lr: 3e-4,
            steps: 2000,
            crop_samples: 8000,
            seed: 0,
            log_every: 10,
            checkpoint_every: 500,
            surrogate: QuantSurrogate::SteRound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(TrainError::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be at least 1".into()));
        }
        if self.crop_samples == 0 {
            return Err(TrainError::Config("crop_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Frozen quantization noise for one clip length, both latents, U(-1/2, 1/2).
pub fn sample_noise<T: Scalar>(
    cfg: &ModelConfig,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<TrainNoise<T>> {
    let t = cfg.stft()?.frame_count(n_samples);
    let t_y = cfg.latent_frames(t);
    let t_z = cfg.hyper_frames(t_y);
    let mut draw = |dims: [usize; 2]| -> Result<Tensor<T>> {
        let data: Vec<T> =
            (0..dims[0] * dims[1]).map(|_| T::from_f64(rng.gen_range(-0.5..0.5))).collect();
        Ok(Tensor::from_vec(&dims, data)?)
    };
    Ok(TrainNoise { y: draw([cfg.latent_channels, t_y])?, z: draw([cfg.hyper_channels, t_z])? })
}

/// Reads every `.wav` under `dir` (non-recursive), sorted by file name so
/// the clip order — and with it the whole run — is reproducible.
pub fn load_dataset(dir: &Path) -> Result<Vec<(String, AudioClip)>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(TrainError::Config(format!("no .wav files in {}", dir.display())));
    }
    entries
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok((name, load_wav(&p)?))
        })
        .collect()
}

/// Runs the loop over `clips`, updating `codec` in place. Returns the final
/// step's report. Per step, the RNG is consumed in a fixed order (clip pick,
/// crop offset, latent noise, side-info noise), so a seed pins the run.
pub fn train<T: Scalar>(
    codec: &mut SpeechCodec<T>,
    clips: &[AudioClip],
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
    checkpoint_path: Option<&Path>,
) -> Result<LossReport> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(TrainError::Config("training needs at least one clip".into()));
    }
    for (i, c) in clips.iter().enumerate() {
        if c.is_empty() {
            return Err(TrainError::Config(format!("clip {i} is empty")));
        }
        if c.sample_rate != codec.config().sample_rate {
            return Err(TrainError::Config(format!(
                "clip {i} is {} Hz, model expects {} Hz",
                c.sample_rate,
                codec.config().sample_rate
            )));
        }
    }

    let synth = IstftGraph::new(codec.config().stft()?);
    let dist = DistortionGraph::new(codec.config().sample_rate);
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut last: Option<LossReport> = None;

    for step in 1..=cfg.steps {
        let clip = &clips[rng.gen_range(0..clips.len())];
        let len = cfg.crop_samples.min(clip.len());
        let start = if clip.len() > len { rng.gen_range(0..=clip.len() - len) } else { 0 };
        let crop = AudioClip::new(clip.samples[start..start + len].to_vec(), clip.sample_rate)?;
        let noise = sample_noise::<T>(codec.config(), len, &mut rng)?;

        let g = Graph::new();
        let b = codec.binder(&g)?;
        let nodes =
            rd_loss_graph(codec, &b, &synth, &dist, &crop, cfg.lambda, &noise, cfg.surrogate)?;
        let report = report_from_nodes(&g, &nodes, cfg.lambda, step, len)?;
        let grads = g.backward(nodes.total)?;
        b.export_grads(&grads, codec.params_mut())?;
        adam.step(codec.params_mut())?;

        if let Some(w) = log.as_deref_mut() {
            let due = cfg.log_every > 0 && (step % cfg.log_every == 0 || step == 1);
            if due || step == cfg.steps {
                writeln!(w, "{}", serde_json::to_string(&report)?)?;
            }
        }
        if let Some(path) = checkpoint_path {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps {
                save_checkpoint(path, &codec.to_checkpoint())?;
            }
        }
        last = Some(report);
    }

    if let Some(path) = checkpoint_path {
        save_checkpoint(path, &codec.to_checkpoint())?;
    }
    Ok(last.expect("steps >= 1"))
}
