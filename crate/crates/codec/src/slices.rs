//! Channel-slice conditioning networks. The latent's C channels are coded
//! as `n_slices` groups in a fixed order; slice i sees the hyper features
//! plus every *reconstructed* slice before it, never its own values, so the
//! decoder can replay the exact same computation symbol group by symbol
//! group.

use rasc_tensor::{ParamSet, Scalar, Vid};

use crate::blocks::Conv;
use crate::config::ModelConfig;
use crate::gaussian::SIGMA_MIN;
use crate::model::Binder;
use crate::rwkv::TimeMix;
use crate::{CodecError, Result};

const HIDDEN: usize = 32;

/// Predicts the coding distribution (center, spread) of slice `i` from the
/// hyper features and the reconstructed slices before it.
pub struct PhiNet {
    index: usize,
    mix: TimeMix,
    proj: Conv,
    mu_head: Conv,
    sigma_head: Conv,
}

impl PhiNet {
    pub fn new(cfg: &ModelConfig, index: usize) -> Self {
        let ws = cfg.slice_width();
        let c_ctx = 2 * cfg.latent_channels + index * ws;
        let name = format!("phi.{index}");
        PhiNet {
            index,
            mix: TimeMix::new(&format!("{name}.mix"), c_ctx, cfg.dynamic_decay),
            proj: Conv::new(&format!("{name}.proj"), c_ctx, HIDDEN, 1, 1),
            mu_head: Conv::new(&format!("{name}.mu"), HIDDEN, ws, 1, 1).zeroed(),
            sigma_head: Conv::new(&format!("{name}.sigma"), HIDDEN, ws, 1, 1).zeroed(),
        }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.mix.register(params, seed)?;
        self.proj.register(params, seed)?;
        self.mu_head.register(params, seed)?;
        self.sigma_head.register(params, seed)
    }

    /// `ctx` is concat(mean-plane, scale-plane, reconstructed slices < i).
    /// Returns (mu, sigma), each [slice_width, T_y]; sigma ≥ SIGMA_MIN.
    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, ctx: Vid) -> Result<(Vid, Vid)> {
        let g = b.graph();
        let h = g.add(ctx, self.mix.fwd(b, ctx)?)?;
        let p = g.elu(self.proj.fwd(b, h)?)?;
        let mu = self.mu_head.fwd(b, p)?;
        let sigma = g.add_c(g.softplus(self.sigma_head.fwd(b, p)?)?, SIGMA_MIN)?;
        Ok((mu, sigma))
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Predicts a bounded correction to slice i's dequantized values from the
/// mean plane, earlier reconstructions, and the dequantized slice itself.
pub struct LrpNet {
    proj: Conv,
    head: Conv,
}

impl LrpNet {
    pub fn new(cfg: &ModelConfig, index: usize) -> Self {
        let ws = cfg.slice_width();
        let c_ctx = cfg.latent_channels + index * ws + ws;
        let name = format!("lrp.{index}");
        LrpNet {
            proj: Conv::new(&format!("{name}.proj"), c_ctx, HIDDEN, 1, 1),
            head: Conv::new(&format!("{name}.head"), HIDDEN, ws, 1, 1).zeroed(),
        }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.proj.register(params, seed)?;
        self.head.register(params, seed)
    }

    /// `ctx` is concat(mean-plane, reconstructed slices < i, dequantized
    /// slice i). Returns the correction, bounded to (-1/2, 1/2).
    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, ctx: Vid) -> Result<Vid> {
        let g = b.graph();
        let p = g.elu(self.proj.fwd(b, ctx)?)?;
        Ok(g.mul_c(g.tanh(self.head.fwd(b, p)?)?, 0.5)?)
    }
}

/// Guard that the slice loop visits 0, 1, …, n-1 in order — the coded
/// stream is only decodable if both sides agree on this.
pub struct SliceRunner {
    next: usize,
    total: usize,
}

impl SliceRunner {
    pub fn new(total: usize) -> Self {
        SliceRunner { next: 0, total }
    }

    pub fn expect(&mut self, index: usize) -> Result<()> {
        if index != self.next || index >= self.total {
            return Err(CodecError::SliceOrder { expected: self.next, got: index });
        }
        self.next += 1;
        Ok(())
    }

    pub fn finished(&self) -> bool {
        self.next == self.total
    }
}
