//! The assembled codec: one struct owning the parameters and every
//! sub-network, with graph-level forward methods the trainer and the
//! arithmetic coder both call. Keeping a single code path for "predict the
//! coding distribution of slice i" is what guarantees the encoder and
//! decoder sides of a stream agree bit for bit.

use std::collections::BTreeMap;

use rasc_tensor::{Checkpoint, Gradients, Graph, ParamSet, Scalar, Tensor, Vid};

use crate::backbone::{Decoder, Encoder};
use crate::config::ModelConfig;
use crate::factorized::{FactorizedDensity, FzChannel};
use crate::gaussian::gaussian_bin_graph;
use crate::hyper::{HyperDecoder, HyperEncoder, HyperFeatures};
use crate::quantize::quantize_round_ste_graph;
use crate::slices::{LrpNet, PhiNet};
use crate::{CodecError, Result};

/// Parameter set bound to a graph as leaf nodes, addressable by name.
pub struct Binder<'g, T: Scalar> {
    g: &'g Graph<T>,
    vids: BTreeMap<String, Vid>,
}

impl<'g, T: Scalar> Binder<'g, T> {
    pub fn new(g: &'g Graph<T>, params: &ParamSet<T>) -> Result<Self> {
        let mut vids = BTreeMap::new();
        for (name, p) in params.iter() {
            vids.insert(name.clone(), g.leaf(p.value.clone())?);
        }
        Ok(Binder { g, vids })
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.g
    }

    pub fn get(&self, name: &str) -> Result<Vid> {
        self.vids
            .get(name)
            .copied()
            .ok_or_else(|| CodecError::Config(format!("parameter {name} not bound to this graph")))
    }

    /// Copy every parameter's gradient out of a backward pass.
    pub fn export_grads(&self, grads: &Gradients<T>, params: &mut ParamSet<T>) -> Result<()> {
        for (name, vid) in &self.vids {
            params.set_grad(name, grads.grad(*vid))?;
        }
        Ok(())
    }
}

/// How the non-differentiable rounding is relaxed during training. Rate
/// terms always see additive noise; this picks what the synthesis path and
/// the hyper-decoder input see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantSurrogate {
    /// Hard rounding forward, identity backward. The reconstruction loss is
    /// measured on the values the real coder will produce.
    SteRound,
    /// The same noise the rate terms use. Fully smooth — this is the mode
    /// numerical gradient checks run in.
    Noise,
}

/// Frozen uniform(-1/2, 1/2) draws, shaped like the latent and the side
/// info. The caller owns the RNG so a training step (or a gradient check)
/// can be replayed exactly.
pub struct TrainNoise<T: Scalar> {
    pub y: Tensor<T>,
    pub z: Tensor<T>,
}

/// What the entropy model produces for one clip during training.
pub struct EntropyOutput {
    /// Reconstructed latent ȳ [C, T_y]: dequantized + predicted correction.
    pub y_bar: Vid,
    /// Total code length of the latent under the predicted gaussians, bits.
    pub rate_y_bits: Vid,
    /// Total code length of the side info under the learned CDFs, bits.
    pub rate_z_bits: Vid,
}

/// Per-slice tensors the coder needs, as graph nodes on the shared graph.
pub struct SliceTensors {
    pub mu: Vid,
    pub sigma: Vid,
}

pub struct SpeechCodec<T: Scalar> {
    config: ModelConfig,
    params: ParamSet<T>,
    enc: Encoder,
    dec: Decoder,
    ha: HyperEncoder,
    hs: HyperDecoder,
    fz: FactorizedDensity,
    phis: Vec<PhiNet>,
    lrps: Vec<LrpNet>,
}

impl<T: Scalar> SpeechCodec<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let enc = Encoder::new(&config);
        let dec = Decoder::new(&config);
        let ha = HyperEncoder::new(&config);
        let hs = HyperDecoder::new(&config);
        let fz = FactorizedDensity::new(config.hyper_channels);
        let phis = (0..config.n_slices).map(|i| PhiNet::new(&config, i)).collect::<Vec<_>>();
        let lrps = (0..config.n_slices).map(|i| LrpNet::new(&config, i)).collect::<Vec<_>>();

        let mut params = ParamSet::new();
        enc.register(&mut params, seed)?;
        dec.register(&mut params, seed)?;
        ha.register(&mut params, seed)?;
        hs.register(&mut params, seed)?;
        fz.register(&mut params, seed)?;
        for p in &phis {
            p.register(&mut params, seed)?;
        }
        for l in &lrps {
            l.register(&mut params, seed)?;
        }

        Ok(SpeechCodec { config, params, enc, dec, ha, hs, fz, phis, lrps })
    }

    /// Rebuild a codec from a checkpoint, verifying that the stored config
    /// hash matches the stored config text and that every tensor matches
    /// the shape the architecture implies.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_json(&ckpt.config_json)?;
        if config.hash() != ckpt.config_hash {
            return Err(CodecError::Config(
                "checkpoint config hash does not match its config text".into(),
            ));
        }
        let skeleton = SpeechCodec::<T>::new(config, 0)?;
        let params = ckpt.to_params::<T>(Some(&skeleton.params))?;
        Ok(SpeechCodec { params, ..skeleton })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let json = self.config.to_json();
        Checkpoint::from_params(self.config.hash(), &json, &self.params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn binder<'g>(&self, g: &'g Graph<T>) -> Result<Binder<'g, T>> {
        Binder::new(g, &self.params)
    }

    // ---- forward pieces, all on a caller-owned graph -------------------

    /// Analysis transform: spectrogram [2F, T] → latent [C, T_y].
    pub fn analyze(&self, b: &Binder<'_, T>, spec: Vid) -> Result<Vid> {
        self.enc.fwd(b, spec)
    }

    /// Synthesis transform: reconstructed latent [C, T_y] → spectrogram
    /// [2F, T], where T is the frame count the latent came from.
    pub fn synthesize(&self, b: &Binder<'_, T>, y_bar: Vid, n_frames: usize) -> Result<Vid> {
        self.dec.fwd(b, y_bar, n_frames)
    }

    pub fn hyper_encode(&self, b: &Binder<'_, T>, y: Vid) -> Result<Vid> {
        self.ha.fwd(b, y)
    }

    pub fn hyper_decode(&self, b: &Binder<'_, T>, z_hat: Vid, t_y: usize) -> Result<HyperFeatures> {
        self.hs.fwd(b, z_hat, t_y)
    }

    pub fn factorized(&self) -> &FactorizedDensity {
        &self.fz
    }

    /// Plain-arithmetic CDF of side-info channel `c`.
    pub fn fz_channel(&self, c: usize) -> Result<FzChannel> {
        self.fz.channel_fn(&self.params, c)
    }

    /// Coding distribution of slice `i` given the hyper features and the
    /// reconstructions of all earlier slices. This never sees slice i
    /// itself, so the decoder can call it before any of slice i's symbols
    /// are known.
    pub fn slice_phi(
        &self,
        b: &Binder<'_, T>,
        i: usize,
        feats: &HyperFeatures,
        y_bar_prev: &[Vid],
    ) -> Result<SliceTensors> {
        let g = b.graph();
        let mut parts = vec![feats.mean, feats.scale];
        parts.extend_from_slice(y_bar_prev);
        let ctx = g.concat(&parts, 0)?;
        let (mu, sigma) = self.phis[i].fwd(b, ctx)?;
        Ok(SliceTensors { mu, sigma })
    }

    /// Bounded correction for slice `i` applied after dequantization.
    pub fn slice_lrp(
        &self,
        b: &Binder<'_, T>,
        i: usize,
        feats: &HyperFeatures,
        y_bar_prev: &[Vid],
        y_hat_i: Vid,
    ) -> Result<Vid> {
        let g = b.graph();
        let mut parts = vec![feats.mean];
        parts.extend_from_slice(y_bar_prev);
        parts.push(y_hat_i);
        let ctx = g.concat(&parts, 0)?;
        self.lrps[i].fwd(b, ctx)
    }

    /// Split a [C, T_y] latent node into the slice order the coder uses.
    pub fn split_slices(&self, b: &Binder<'_, T>, y: Vid) -> Result<Vec<Vid>> {
        let g = b.graph();
        let ws = self.config.slice_width();
        (0..self.config.n_slices)
            .map(|i| g.slice(y, 0, i * ws, ws).map_err(Into::into))
            .collect()
    }

    /// Everything between the latent and the reconstruction during a
    /// training step: side-info branch, slice-sequential quantization with
    /// rate accounting, and the predicted corrections.
    pub fn entropy_forward_train(
        &self,
        b: &Binder<'_, T>,
        y: Vid,
        noise: &TrainNoise<T>,
        mode: QuantSurrogate,
    ) -> Result<EntropyOutput> {
        let g = b.graph();
        let t_y = g.shape(y).dims()[1];

        // side info: noisy copy prices the code, the synthesis-side copy
        // feeds the feature decoder
        let z = self.hyper_encode(b, y)?;
        let z_noisy = g.add(z, g.constant(noise.z.clone())?)?;
        let z_dec = match mode {
            QuantSurrogate::SteRound => g.round_ste(z)?,
            QuantSurrogate::Noise => z_noisy,
        };
        let pmf_z = self.fz.pmf_graph(b, z_noisy)?;
        let rate_z_bits = bits_from_pmf(g, pmf_z)?;

        let feats = self.hyper_decode(b, z_dec, t_y)?;

        let y_slices = self.split_slices(b, y)?;
        let noise_all = g.constant(noise.y.clone())?;
        let noise_slices = self.split_slices(b, noise_all)?;

        let mut y_bar_prev: Vec<Vid> = Vec::with_capacity(self.config.n_slices);
        let mut rate_y_bits: Option<Vid> = None;
        for i in 0..self.config.n_slices {
            let st = self.slice_phi(b, i, &feats, &y_bar_prev)?;
            let centered = g.sub(g.add(y_slices[i], noise_slices[i])?, st.mu)?;
            let pmf = gaussian_bin_graph(g, centered, st.sigma)?;
            let bits = bits_from_pmf(g, pmf)?;
            rate_y_bits = Some(match rate_y_bits {
                Some(acc) => g.add(acc, bits)?,
                None => bits,
            });

            let y_hat = match mode {
                QuantSurrogate::SteRound => quantize_round_ste_graph(g, y_slices[i], st.mu)?,
                QuantSurrogate::Noise => g.add(y_slices[i], noise_slices[i])?,
            };
            let r = self.slice_lrp(b, i, &feats, &y_bar_prev, y_hat)?;
            y_bar_prev.push(g.add(y_hat, r)?);
        }

        let y_bar = g.concat(&y_bar_prev, 0)?;
        Ok(EntropyOutput {
            y_bar,
            rate_y_bits: rate_y_bits.expect("at least one slice"),
            rate_z_bits,
        })
    }
}

/// -(1/ln 2) · Σ ln max(pmf, 2^-16): total bits, with each element's
/// contribution capped at 16 so one collapsed bin cannot blow up a step.
fn bits_from_pmf<T: Scalar>(g: &Graph<T>, pmf: Vid) -> Result<Vid> {
    let floored = g.max_c(pmf, 2f64.powi(-16))?;
    let nats = g.sum_all(g.ln(floored)?)?;
    Ok(g.mul_c(nats, -std::f64::consts::LOG2_E)?)
}
