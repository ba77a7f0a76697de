//! Building blocks shared by the analysis and synthesis backbones.
//!
//! Everything here is causal: convolutions pad on the left only, transposed
//! convolutions keep the head of their raw output. A stride-s conv maps
//! length T to ceil(T/s) and its transposed mirror maps back, so arbitrary
//! clip lengths survive a round trip through the stack.

use rasc_tensor::{Init, PadSpec, ParamSet, Scalar, Vid};

use crate::model::Binder;
use crate::rwkv::{ChannelMix, TimeMix};
use crate::Result;

/// Causal 1-D convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv {
    name: String,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    zero_init: bool,
}

impl Conv {
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        Conv { name: name.to_string(), c_in, c_out, k, stride, dilation: 1, zero_init: false }
    }

    /// Start the layer as an exact zero map (used at the end of residual
    /// branches so a fresh block is the identity).
    pub fn zeroed(mut self) -> Self {
        self.zero_init = true;
        self
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        t_in.div_ceil(self.stride)
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        let init = if self.zero_init {
            Init::Zeros
        } else {
            Init::FanIn { fan_in: self.c_in * self.k }
        };
        params.register(&format!("{}.w", self.name), &[self.c_out, self.c_in, self.k], init, seed)?;
        params.register(&format!("{}.b", self.name), &[self.c_out], Init::Zeros, seed)?;
        Ok(())
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, x: Vid) -> Result<Vid> {
        let g = b.graph();
        let w = b.get(&format!("{}.w", self.name))?;
        let bias = b.get(&format!("{}.b", self.name))?;
        let pad = PadSpec::causal(self.k, self.dilation);
        Ok(g.conv1d_padded(x, w, Some(bias), self.stride, self.dilation, pad)?)
    }
}

/// Transposed convolution, head-cropped to a caller-chosen length so it
/// exactly undoes the ceil-division of the matching strided conv.
#[derive(Debug, Clone)]
pub struct ConvT {
    name: String,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    zero_init: bool,
}

impl ConvT {
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        ConvT { name: name.to_string(), c_in, c_out, k, stride, zero_init: false }
    }

    pub fn zeroed(mut self) -> Self {
        self.zero_init = true;
        self
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        let init = if self.zero_init {
            Init::Zeros
        } else {
            // each output sample receives ~k/stride taps from c_in channels
            Init::FanIn { fan_in: (self.c_in * self.k).div_ceil(self.stride) }
        };
        params.register(&format!("{}.w", self.name), &[self.c_in, self.c_out, self.k], init, seed)?;
        params.register(&format!("{}.b", self.name), &[self.c_out], Init::Zeros, seed)?;
        Ok(())
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, x: Vid, target_len: usize) -> Result<Vid> {
        let g = b.graph();
        let w = b.get(&format!("{}.w", self.name))?;
        let bias = b.get(&format!("{}.b", self.name))?;
        Ok(g.conv_transpose1d_cropped(x, w, Some(bias), self.stride, target_len)?)
    }
}

/// Residual unit of two causal convs: x + c2(elu(c1(elu(x)))) with a K3
/// mixer and a K1 contraction. The contraction starts at zero, so a fresh
/// unit passes its input through untouched.
#[derive(Debug, Clone)]
pub struct SeanetUnit {
    c1: Conv,
    c2: Conv,
}

impl SeanetUnit {
    pub fn new(name: &str, channels: usize) -> Self {
        SeanetUnit {
            c1: Conv::new(&format!("{name}.c1"), channels, channels, 3, 1),
            c2: Conv::new(&format!("{name}.c2"), channels, channels, 1, 1).zeroed(),
        }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.c1.register(params, seed)?;
        self.c2.register(params, seed)
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, x: Vid) -> Result<Vid> {
        let g = b.graph();
        let h = self.c1.fwd(b, g.elu(x)?)?;
        let h = self.c2.fwd(b, g.elu(h)?)?;
        Ok(g.add(x, h)?)
    }
}

/// A run of residual attention + feed-forward pairs.
#[derive(Debug, Clone)]
pub struct AttnStack {
    blocks: Vec<(TimeMix, ChannelMix)>,
}

impl AttnStack {
    pub fn new(name: &str, channels: usize, depth: usize, dynamic_decay: bool) -> Self {
        let blocks = (0..depth)
            .map(|i| {
                (
                    TimeMix::new(&format!("{name}.{i}.att"), channels, dynamic_decay),
                    ChannelMix::new(&format!("{name}.{i}.ffn"), channels),
                )
            })
            .collect();
        AttnStack { blocks }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        for (att, ffn) in &self.blocks {
            att.register(params, seed)?;
            ffn.register(params, seed)?;
        }
        Ok(())
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, mut x: Vid) -> Result<Vid> {
        let g = b.graph();
        for (att, ffn) in &self.blocks {
            x = g.add(x, att.fwd(b, x)?)?;
            x = g.add(x, ffn.fwd(b, x)?)?;
        }
        Ok(x)
    }
}

/// Conv/attention hybrid block. After a 1x1 expansion the channels split in
/// half: one half runs a short residual conv unit, the other is downsampled,
/// mixed by the attention stack, upsampled and added back as a residual.
/// A 1x1 projection fuses the halves. The upsampling projection starts at
/// zero, so at init the attention path is silent and the block reduces to
/// its convolutional skeleton.
#[derive(Debug, Clone)]
pub struct CrmBlock {
    pre: Conv,
    seanet: SeanetUnit,
    down: Conv,
    attn: AttnStack,
    up_strided: Option<ConvT>,
    up_plain: Option<Conv>,
    fuse: Conv,
}

impl CrmBlock {
    pub fn new(name: &str, channels: usize, depth: usize, ds: usize, dynamic_decay: bool) -> Self {
        assert!(channels % 2 == 0, "channel split needs an even width");
        let half = channels / 2;
        let down = if ds == 1 {
            Conv::new(&format!("{name}.down"), half, half, 1, 1)
        } else {
            Conv::new(&format!("{name}.down"), half, half, 2 * ds, ds)
        };
        let (up_strided, up_plain) = if ds == 1 {
            (None, Some(Conv::new(&format!("{name}.up"), half, half, 1, 1).zeroed()))
        } else {
            (Some(ConvT::new(&format!("{name}.up"), half, half, 2 * ds, ds).zeroed()), None)
        };
        CrmBlock {
            pre: Conv::new(&format!("{name}.pre"), channels, channels, 1, 1),
            seanet: SeanetUnit::new(&format!("{name}.res"), half),
            down,
            attn: AttnStack::new(&format!("{name}.attn"), half, depth, dynamic_decay),
            up_strided,
            up_plain,
            fuse: Conv::new(&format!("{name}.fuse"), channels, channels, 1, 1),
        }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        self.pre.register(params, seed)?;
        self.seanet.register(params, seed)?;
        self.down.register(params, seed)?;
        self.attn.register(params, seed)?;
        if let Some(up) = &self.up_strided {
            up.register(params, seed)?;
        }
        if let Some(up) = &self.up_plain {
            up.register(params, seed)?;
        }
        self.fuse.register(params, seed)
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, x: Vid) -> Result<Vid> {
        let g = b.graph();
        let h = self.pre.fwd(b, x)?;
        let dims = g.shape(h).dims().to_vec();
        let half = dims[0] / 2;
        let t_len = dims[1];

        let h1 = g.slice(h, 0, 0, half)?;
        let h2 = g.slice(h, 0, half, half)?;

        let conv_half = self.seanet.fwd(b, h1)?;

        let down = self.down.fwd(b, h2)?;
        let mixed = self.attn.fwd(b, down)?;
        let up = match (&self.up_strided, &self.up_plain) {
            (Some(upc), None) => upc.fwd(b, mixed, t_len)?,
            (None, Some(upc)) => upc.fwd(b, mixed)?,
            _ => unreachable!("exactly one upsampling flavour"),
        };
        let attn_half = g.add(h2, up)?;

        let cat = g.concat(&[conv_half, attn_half], 0)?;
        self.fuse.fwd(b, cat)
    }
}
