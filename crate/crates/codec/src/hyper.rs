//! Hyper-prior transforms: a side branch that summarizes the latent into a
//! small tensor z, and the inverse map from quantized z to the per-frame
//! feature planes the slice predictors condition on.

use rasc_tensor::{ParamSet, Scalar, Vid};

use crate::blocks::{Conv, ConvT, CrmBlock};
use crate::config::ModelConfig;
use crate::model::Binder;
use crate::Result;

/// Latent [C, T_y] → side info [C_z, ceil(T_y/2)].
pub struct HyperEncoder {
    mix: Conv,
    crm: CrmBlock,
    down: Conv,
}

impl HyperEncoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let c = cfg.latent_channels;
        HyperEncoder {
            mix: Conv::new("ha.mix", c, c, 3, 1),
            crm: CrmBlock::new("ha.crm", c, 1, cfg.attn_downsample, cfg.dynamic_decay),
            down: Conv::new("ha.down", c, cfg.hyper_channels, 4, 2),
        }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.mix.register(params, seed)?;
        self.crm.register(params, seed)?;
        self.down.register(params, seed)
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, y: Vid) -> Result<Vid> {
        let g = b.graph();
        let h = g.elu(self.mix.fwd(b, y)?)?;
        let h = self.crm.fwd(b, h)?;
        self.down.fwd(b, h)
    }
}

/// Per-frame conditioning planes derived from the quantized side info, one
/// for center prediction and one for spread prediction. Both are feature
/// maps of the latent's width; the slice networks turn them into actual
/// distribution parameters.
pub struct HyperFeatures {
    pub mean: Vid,
    pub scale: Vid,
}

/// Side info [C_z, T_z] → conditioning planes, each [C, T_y].
pub struct HyperDecoder {
    up: ConvT,
    crm: CrmBlock,
    mean_head: Conv,
    scale_head: Conv,
}

impl HyperDecoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let c = cfg.latent_channels;
        HyperDecoder {
            up: ConvT::new("hs.up", cfg.hyper_channels, c, 4, 2),
            crm: CrmBlock::new("hs.crm", c, 1, cfg.attn_downsample, cfg.dynamic_decay),
            mean_head: Conv::new("hs.mean", c, c, 3, 1),
            scale_head: Conv::new("hs.scale", c, c, 3, 1),
        }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.up.register(params, seed)?;
        self.crm.register(params, seed)?;
        self.mean_head.register(params, seed)?;
        self.scale_head.register(params, seed)
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, z_hat: Vid, t_y: usize) -> Result<HyperFeatures> {
        let g = b.graph();
        let h = g.elu(self.up.fwd(b, z_hat, t_y)?)?;
        let h = self.crm.fwd(b, h)?;
        Ok(HyperFeatures {
            mean: self.mean_head.fwd(b, h)?,
            scale: self.scale_head.fwd(b, h)?,
        })
    }
}
