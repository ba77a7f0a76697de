//! Analysis and synthesis backbones. The analysis side maps a stacked
//! real/imag spectrogram [2F, T] down to the latent [C, T_y]; the synthesis
//! side mirrors it stage for stage, with every strided conv answered by a
//! head-cropped transposed conv so odd frame counts round-trip exactly.

use rasc_tensor::{Scalar, ParamSet, Vid};

use crate::blocks::{Conv, ConvT, CrmBlock};
use crate::config::ModelConfig;
use crate::model::Binder;
use crate::{CodecError, Result};

enum Up {
    Strided(ConvT),
    Plain(Conv),
}

pub struct Encoder {
    stem: Conv,
    stages: Vec<(CrmBlock, Conv)>,
}

impl Encoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let n = cfg.widths.len();
        let stem = Conv::new("enc.stem", cfg.spectrum_channels(), cfg.widths[0], 3, 1);
        let mut stages = Vec::with_capacity(n);
        for i in 0..n {
            let crm = CrmBlock::new(
                &format!("enc.crm{i}"),
                cfg.widths[i],
                cfg.n_attn[i],
                cfg.attn_downsample,
                cfg.dynamic_decay,
            );
            let c_out = if i + 1 < n { cfg.widths[i + 1] } else { cfg.latent_channels };
            let s = cfg.strides[i];
            let k = if s > 1 { 2 * s } else { 3 };
            let trans = Conv::new(&format!("enc.trans{i}"), cfg.widths[i], c_out, k, s);
            stages.push((crm, trans));
        }
        Encoder { stem, stages }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.stem.register(params, seed)?;
        for (crm, trans) in &self.stages {
            crm.register(params, seed)?;
            trans.register(params, seed)?;
        }
        Ok(())
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, spec: Vid) -> Result<Vid> {
        let mut h = self.stem.fwd(b, spec)?;
        for (crm, trans) in &self.stages {
            h = crm.fwd(b, h)?;
            h = trans.fwd(b, h)?;
        }
        Ok(h)
    }
}

pub struct Decoder {
    strides: Vec<usize>,
    ups: Vec<Up>,
    crms: Vec<CrmBlock>,
    head: Conv,
}

impl Decoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let n = cfg.widths.len();
        let mut ups = Vec::with_capacity(n);
        let mut crms = Vec::with_capacity(n);
        // walk the stages back to front, undoing one encoder transition each
        for i in (0..n).rev() {
            let c_in = if i + 1 < n { cfg.widths[i + 1] } else { cfg.latent_channels };
            let s = cfg.strides[i];
            let up = if s > 1 {
                Up::Strided(ConvT::new(&format!("dec.up{i}"), c_in, cfg.widths[i], 2 * s, s))
            } else {
                Up::Plain(Conv::new(&format!("dec.up{i}"), c_in, cfg.widths[i], 3, 1))
            };
            ups.push(up);
            crms.push(CrmBlock::new(
                &format!("dec.crm{i}"),
                cfg.widths[i],
                cfg.n_attn[i],
                cfg.attn_downsample,
                cfg.dynamic_decay,
            ));
        }
        let head = Conv::new("dec.head", cfg.widths[0], cfg.spectrum_channels(), 3, 1);
        Decoder { strides: cfg.strides.clone(), ups, crms, head }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        for up in &self.ups {
            match up {
                Up::Strided(c) => c.register(params, seed)?,
                Up::Plain(c) => c.register(params, seed)?,
            }
        }
        for crm in &self.crms {
            crm.register(params, seed)?;
        }
        self.head.register(params, seed)
    }

    /// `n_frames` is the spectrogram length the latent was produced from;
    /// the strided stages re-derive their intermediate lengths from it.
    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, latent: Vid, n_frames: usize) -> Result<Vid> {
        let g = b.graph();
        let n = self.strides.len();
        let mut lens = Vec::with_capacity(n + 1);
        lens.push(n_frames);
        for s in &self.strides {
            lens.push(lens.last().unwrap().div_ceil(*s));
        }
        let got = g.shape(latent).dims()[1];
        if got != lens[n] {
            return Err(CodecError::Shape(format!(
                "latent has {got} frames but {n_frames} spectrogram frames need {}",
                lens[n]
            )));
        }

        let mut h = latent;
        for (j, i) in (0..n).rev().enumerate() {
            h = match &self.ups[j] {
                Up::Strided(c) => c.fwd(b, h, lens[i])?,
                Up::Plain(c) => c.fwd(b, h)?,
            };
            h = self.crms[j].fwd(b, h)?;
        }
        self.head.fwd(b, h)
    }
}
