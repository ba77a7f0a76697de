//! Learned scalar CDF for the side-info channels ("factorized prior"): each
//! channel gets an independent monotone map built from positive-weight
//! affine layers with tanh gating, squashed by a final sigmoid. Integer
//! probabilities come out as CDF differences at half-integer edges.
//!
//! The same parameters serve two callers: the training loss evaluates the
//! CDF inside the autodiff graph, and the arithmetic coder evaluates it as
//! plain f64 math via [`FzChannel`].

use rasc_tensor::{Init, ParamSet, Scalar, Vid};

use crate::model::Binder;
use crate::rwkv::tile_cols;
use crate::Result;

/// Hidden widths of the per-channel monotone map: scalar in, scalar out.
const LAYER_DIMS: [usize; 5] = [1, 3, 3, 3, 1];

/// Raw weight value that makes the init-time CDF span a few units of input:
/// softplus_inv(1 / (scale^(1/L) * d_out)) with scale = 4 over L = 4 layers.
fn init_raw_weight(d_out: usize) -> f64 {
    let target = 1.0 / (4f64.powf(0.25) * d_out as f64);
    // inverse of ln(1+e^x)
    target.exp_m1().ln()
}

pub struct FactorizedDensity {
    channels: usize,
}

impl FactorizedDensity {
    pub fn new(channels: usize) -> Self {
        FactorizedDensity { channels }
    }

    pub fn n_layers() -> usize {
        LAYER_DIMS.len() - 1
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        for c in 0..self.channels {
            for l in 0..Self::n_layers() {
                let (d_in, d_out) = (LAYER_DIMS[l], LAYER_DIMS[l + 1]);
                let raw = init_raw_weight(d_out);
                params.register(&format!("fz.{c}.h{l}"), &[d_out, d_in], Init::Const(raw), seed)?;
                params.register(&format!("fz.{c}.b{l}"), &[d_out], Init::Zeros, seed)?;
                if l + 1 < Self::n_layers() {
                    params.register(&format!("fz.{c}.a{l}"), &[d_out], Init::Zeros, seed)?;
                }
            }
        }
        Ok(())
    }

    /// CDF of channel `c` evaluated at a row of points [1, N] → [1, N].
    pub fn cdf_graph<T: Scalar>(&self, b: &Binder<'_, T>, c: usize, x: Vid) -> Result<Vid> {
        let g = b.graph();
        let n = g.shape(x).dims()[1];
        let mut h = x;
        for l in 0..Self::n_layers() {
            let w = g.softplus(b.get(&format!("fz.{c}.h{l}"))?)?;
            h = g.matmul(w, h)?;
            h = g.add_bias(h, b.get(&format!("fz.{c}.b{l}"))?)?;
            if l + 1 < Self::n_layers() {
                let gate = g.tanh(b.get(&format!("fz.{c}.a{l}"))?)?;
                let gate_t = tile_cols(g, gate, n)?;
                h = g.add(h, g.mul(gate_t, g.tanh(h)?)?)?;
            }
        }
        g.sigmoid(h).map_err(Into::into)
    }

    /// P(edge - 1/2 < X <= edge + 1/2) for every entry of a [C_z, T] tensor
    /// of integer-valued points, channel by channel → [C_z, T].
    pub fn pmf_graph<T: Scalar>(&self, b: &Binder<'_, T>, z: Vid) -> Result<Vid> {
        let g = b.graph();
        let dims = g.shape(z).dims().to_vec();
        let mut rows = Vec::with_capacity(dims[0]);
        for c in 0..dims[0] {
            let row = g.slice(z, 0, c, 1)?;
            let hi = self.cdf_graph(b, c, g.add_c(row, 0.5)?)?;
            let lo = self.cdf_graph(b, c, g.add_c(row, -0.5)?)?;
            rows.push(g.sub(hi, lo)?);
        }
        g.concat(&rows, 0).map_err(Into::into)
    }

    /// Plain-arithmetic view of one channel, for table building.
    pub fn channel_fn<T: Scalar>(&self, params: &ParamSet<T>, c: usize) -> Result<FzChannel> {
        let mut layers = Vec::with_capacity(Self::n_layers());
        for l in 0..Self::n_layers() {
            let h = params.value(&format!("fz.{c}.h{l}"))?.to_precision::<f64>();
            let bias = params.value(&format!("fz.{c}.b{l}"))?.to_precision::<f64>();
            let gate = if l + 1 < Self::n_layers() {
                params.value(&format!("fz.{c}.a{l}"))?.to_precision::<f64>().data().to_vec()
            } else {
                Vec::new()
            };
            layers.push(FzLayer {
                d_in: LAYER_DIMS[l],
                d_out: LAYER_DIMS[l + 1],
                w: h.data().iter().map(|v| softplus(*v)).collect(),
                b: bias.data().to_vec(),
                a: gate,
            });
        }
        Ok(FzChannel { layers })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

struct FzLayer {
    d_in: usize,
    d_out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
}

/// One channel's CDF as a plain function. Evaluation is a handful of 3-wide
/// affine maps, so building integer tables over a few hundred points is
/// cheap.
pub struct FzChannel {
    layers: Vec<FzLayer>,
}

impl FzChannel {
    pub fn cdf(&self, x: f64) -> f64 {
        let mut h = vec![x];
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.d_out);
            for i in 0..layer.d_out {
                let mut acc = layer.b[i];
                for j in 0..layer.d_in {
                    acc += layer.w[i * layer.d_in + j] * h[j];
                }
                out.push(acc);
            }
            if !layer.a.is_empty() {
                for (v, a) in out.iter_mut().zip(&layer.a) {
                    *v += a.tanh() * v.tanh();
                }
            }
            h = out;
        }
        sigmoid(h[0])
    }

    /// P(X = n) under the integer-bin reading of the CDF.
    pub fn pmf(&self, n: i64) -> f64 {
        let x = n as f64;
        (self.cdf(x + 0.5) - self.cdf(x - 0.5)).max(0.0)
    }

    /// Point where the CDF crosses 1/2, found by bisection. Decoded symbols
    /// cluster around this, so tables center their support on it.
    pub fn median(&self) -> f64 {
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while self.cdf(lo) > 0.5 {
            lo *= 2.0;
            if lo < -1e9 {
                return lo;
            }
        }
        while self.cdf(hi) < 0.5 {
            hi *= 2.0;
            if hi > 1e9 {
                return hi;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let c = self.cdf(mid);
            if c == 0.5 {
                return mid;
            }
            if c < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
