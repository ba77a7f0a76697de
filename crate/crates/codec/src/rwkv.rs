//! Linear-attention sequence mixing: a per-channel exponential-decay
//! attention computed as a running ratio of weighted sums, plus the gated
//! feed-forward that usually accompanies it. Cost is O(C·T) and the
//! recurrence carries explicit state, so chunked (streaming) evaluation
//! reproduces the full-sequence result exactly.

use rasc_tensor::{Graph, Init, ParamSet, Scalar, Tensor, Vid};

use crate::model::Binder;
use crate::Result;

/// Stand-in for "no history yet": exp(SHIFT_FLOOR - anything) underflows to
/// exactly 0, so an empty state contributes nothing to the ratio.
const SHIFT_FLOOR: f64 = -1e30;

/// Accumulators of the attention recurrence, per channel.
#[derive(Debug, Clone)]
pub struct WkvState<T: Scalar> {
    pub num: Tensor<T>,
    pub den: Tensor<T>,
    pub max_shift: Tensor<T>,
}

impl<T: Scalar> WkvState<T> {
    pub fn empty(channels: usize) -> Self {
        WkvState {
            num: Tensor::zeros(&[channels, 1]),
            den: Tensor::zeros(&[channels, 1]),
            max_shift: Tensor::full(&[channels, 1], T::from_f64(SHIFT_FLOOR)),
        }
    }
}

/// Carried state of one attention block: the recurrence accumulators plus
/// the trailing input columns both token-shift mixers need.
#[derive(Debug, Clone)]
pub struct RwkvState<T: Scalar> {
    pub wkv: WkvState<T>,
    pub prev_mix: Tensor<T>,
    pub prev_ffn: Tensor<T>,
}

/// out_t = (Σ_{j<t} e^{-(t-1-j)w} e^{k_j} v_j + e^{u+k_t} v_t)
///       / (Σ_{j<t} e^{-(t-1-j)w} e^{k_j}     + e^{u+k_t})
///
/// computed with a running max shift so the exponentials never overflow.
/// `w` is the per-step decay (≥ 0), one column per token, so data-dependent
/// decay costs nothing extra; `u` is the current-token bonus.
pub fn wkv_graph<T: Scalar>(
    g: &Graph<T>,
    k: Vid,
    v: Vid,
    w: Vid,
    u: Vid,
    init: Option<&WkvState<T>>,
) -> Result<(Vid, WkvState<T>)> {
    let dims = g.shape(k).dims().to_vec();
    let (c, t_len) = (dims[0], dims[1]);

    let fresh = WkvState::empty(c);
    let st = init.unwrap_or(&fresh);
    let mut num = g.constant(st.num.clone())?;
    let mut den = g.constant(st.den.clone())?;
    let mut shift = g.constant(st.max_shift.clone())?;

    let mut cols = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let kt = g.slice(k, 1, t, 1)?;
        let vt = g.slice(v, 1, t, 1)?;
        let wt = g.slice(w, 1, t, 1)?;

        let uk = g.add(u, kt)?;
        let q = g.maximum(shift, uk)?;
        let e_hist = g.exp(g.sub(shift, q)?)?;
        let e_now = g.exp(g.sub(uk, q)?)?;
        let top = g.add(g.mul(num, e_hist)?, g.mul(e_now, vt)?)?;
        let bot = g.add(g.mul(den, e_hist)?, e_now)?;
        cols.push(g.div(top, bot)?);

        let decayed = g.sub(shift, wt)?;
        let next_shift = g.maximum(decayed, kt)?;
        let e_decay = g.exp(g.sub(decayed, next_shift)?)?;
        let e_k = g.exp(g.sub(kt, next_shift)?)?;
        num = g.add(g.mul(num, e_decay)?, g.mul(e_k, vt)?)?;
        den = g.add(g.mul(den, e_decay)?, e_k)?;
        shift = next_shift;
    }

    let out = g.concat(&cols, 1)?;
    let state = WkvState { num: g.value(num), den: g.value(den), max_shift: g.value(shift) };
    Ok((out, state))
}

/// Broadcast a `[C]` vector across `t` columns.
pub(crate) fn tile_cols<T: Scalar>(g: &Graph<T>, v: Vid, t: usize) -> Result<Vid> {
    let c = g.shape(v).dims()[0];
    let col = g.reshape(v, &[c, 1])?;
    let ones = g.constant(Tensor::full(&[1, t], T::ONE))?;
    Ok(g.matmul(col, ones)?)
}

/// x interpolated with its one-step-delayed copy, gate = sigmoid(raw) per
/// channel: gate·x + (1−gate)·x₋₁.
fn shift_mix<T: Scalar>(
    g: &Graph<T>,
    x: Vid,
    shifted: Vid,
    mix_raw: Vid,
    t_len: usize,
) -> Result<Vid> {
    let gate = g.sigmoid(mix_raw)?;
    let gate_t = tile_cols(g, gate, t_len)?;
    let inv = g.add_c(g.neg(gate_t)?, 1.0)?;
    Ok(g.add(g.mul(gate_t, x)?, g.mul(inv, shifted)?)?)
}

/// x delayed by one column; the leading column comes from carried state or
/// zeros.
fn token_shift<T: Scalar>(
    g: &Graph<T>,
    x: Vid,
    prev: Option<&Tensor<T>>,
) -> Result<Vid> {
    let dims = g.shape(x).dims().to_vec();
    let (c, t_len) = (dims[0], dims[1]);
    let lead = match prev {
        Some(p) => g.constant(p.clone())?,
        None => g.constant(Tensor::zeros(&[c, 1]))?,
    };
    if t_len == 1 {
        return Ok(lead);
    }
    let body = g.slice(x, 1, 0, t_len - 1)?;
    Ok(g.concat(&[lead, body], 1)?)
}

fn last_column<T: Scalar>(g: &Graph<T>, x: Vid) -> Tensor<T> {
    let t_len = g.shape(x).dims()[1];
    let col = g.slice(x, 1, t_len - 1, 1).expect("index in range");
    g.value(col)
}

/// The attention half of a block. Static per-channel decay by default; with
/// `dynamic_decay` the decay is modulated per token through a zero-initialized
/// projection, so the static behaviour is the init point.
#[derive(Debug, Clone)]
pub struct TimeMix {
    name: String,
    channels: usize,
    dynamic_decay: bool,
}

impl TimeMix {
    pub fn new(name: &str, channels: usize, dynamic_decay: bool) -> Self {
        TimeMix { name: name.to_string(), channels, dynamic_decay }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        let c = self.channels;
        let n = |s: &str| format!("{}.{s}", self.name);
        for mix in ["mix_r", "mix_k", "mix_v"] {
            params.register(&n(mix), &[c], Init::Zeros, seed)?;
        }
        // decay speeds spread per channel: exp(raw) spans ~0.05..2.7
        params.register(&n("decay"), &[c], Init::Linspace { lo: -3.0, hi: 1.0 }, seed)?;
        params.register(&n("bonus"), &[c], Init::Zeros, seed)?;
        for proj in ["wr", "wk", "wv"] {
            params.register(&n(proj), &[c, c], Init::FanIn { fan_in: c }, seed)?;
        }
        params.register(&n("wo"), &[c, c], Init::Zeros, seed)?;
        if self.dynamic_decay {
            params.register(&n("wd"), &[c, c], Init::Zeros, seed)?;
        }
        Ok(())
    }

    /// Returns the block's additive output (caller owns the residual) and the
    /// carried state for streaming continuation.
    pub fn fwd_with_state<T: Scalar>(
        &self,
        b: &Binder<'_, T>,
        x: Vid,
        prev: Option<(&WkvState<T>, &Tensor<T>)>,
    ) -> Result<(Vid, WkvState<T>, Tensor<T>)> {
        let g = b.graph();
        let t_len = g.shape(x).dims()[1];
        let n = |s: &str| format!("{}.{s}", self.name);

        let shifted = token_shift(g, x, prev.map(|p| p.1))?;
        let xr = shift_mix(g, x, shifted, b.get(&n("mix_r"))?, t_len)?;
        let xk = shift_mix(g, x, shifted, b.get(&n("mix_k"))?, t_len)?;
        let xv = shift_mix(g, x, shifted, b.get(&n("mix_v"))?, t_len)?;

        let r = g.matmul(b.get(&n("wr"))?, xr)?;
        let k = g.matmul(b.get(&n("wk"))?, xk)?;
        let v = g.matmul(b.get(&n("wv"))?, xv)?;

        let decay_static = tile_cols(g, b.get(&n("decay"))?, t_len)?;
        let decay_raw = if self.dynamic_decay {
            let mod_term = g.tanh(g.matmul(b.get(&n("wd"))?, xk)?)?;
            g.add(decay_static, mod_term)?
        } else {
            decay_static
        };
        let w = g.exp(decay_raw)?;
        let u = g.reshape(b.get(&n("bonus"))?, &[self.channels, 1])?;

        let (wkv, state) = wkv_graph(g, k, v, w, u, prev.map(|p| p.0))?;
        let gated = g.mul(g.sigmoid(r)?, wkv)?;
        let out = g.matmul(b.get(&n("wo"))?, gated)?;
        Ok((out, state, last_column(g, x)))
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, x: Vid) -> Result<Vid> {
        Ok(self.fwd_with_state(b, x, None)?.0)
    }
}

/// The feed-forward half: token-shift mixing, squared-ReLU expansion, sigmoid
/// gate, zero-initialized contraction.
#[derive(Debug, Clone)]
pub struct ChannelMix {
    name: String,
    channels: usize,
}

const FFN_MULT: usize = 2;

impl ChannelMix {
    pub fn new(name: &str, channels: usize) -> Self {
        ChannelMix { name: name.to_string(), channels }
    }

    pub fn register<T: Scalar>(&self, params: &mut ParamSet<T>, seed: u64) -> Result<()> {
        let c = self.channels;
        let h = FFN_MULT * c;
        let n = |s: &str| format!("{}.{s}", self.name);
        params.register(&n("mix_k"), &[c], Init::Zeros, seed)?;
        params.register(&n("mix_r"), &[c], Init::Zeros, seed)?;
        params.register(&n("w_up"), &[h, c], Init::FanIn { fan_in: c }, seed)?;
        params.register(&n("w_down"), &[c, h], Init::Zeros, seed)?;
        params.register(&n("wr"), &[c, c], Init::FanIn { fan_in: c }, seed)?;
        Ok(())
    }

    pub fn fwd_with_state<T: Scalar>(
        &self,
        b: &Binder<'_, T>,
        x: Vid,
        prev: Option<&Tensor<T>>,
    ) -> Result<(Vid, Tensor<T>)> {
        let g = b.graph();
        let t_len = g.shape(x).dims()[1];
        let n = |s: &str| format!("{}.{s}", self.name);

        let shifted = token_shift(g, x, prev)?;
        let xk = shift_mix(g, x, shifted, b.get(&n("mix_k"))?, t_len)?;
        let xr = shift_mix(g, x, shifted, b.get(&n("mix_r"))?, t_len)?;

        let hidden = g.matmul(b.get(&n("w_up"))?, xk)?;
        let rect = g.max_c(hidden, 0.0)?;
        let squared = g.mul(rect, rect)?;
        let gate = g.sigmoid(g.matmul(b.get(&n("wr"))?, xr)?)?;
        let out = g.mul(gate, g.matmul(b.get(&n("w_down"))?, squared)?)?;
        Ok((out, last_column(g, x)))
    }

    pub fn fwd<T: Scalar>(&self, b: &Binder<'_, T>, x: Vid) -> Result<Vid> {
        Ok(self.fwd_with_state(b, x, None)?.0)
    }
}
