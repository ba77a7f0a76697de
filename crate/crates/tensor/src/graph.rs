use std::cell::RefCell;

use crate::kernels;
use crate::{Result, Scalar, Shape, Tensor, TensorError};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vid(usize);

/// Explicit zero-padding amounts along the time axis.
#[derive(Debug, Clone, Copy)]
pub struct PadSpec {
    pub left: usize,
    pub right: usize,
}

impl PadSpec {
    pub fn none() -> Self {
        PadSpec { left: 0, right: 0 }
    }

    /// Left padding that keeps a stride-1 conv length-preserving and makes
    /// every output depend only on current/past inputs.
    pub fn causal(k: usize, dilation: usize) -> Self {
        PadSpec { left: dilation * (k - 1), right: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
enum UnaryFn {
    Elu,
    Tanh,
    Sigmoid,
    Exp,
    Ln,
    Softplus,
    Abs,
    Sqrt,
    Erf,
    Neg,
}

#[derive(Debug, Clone, Copy)]
enum BinFn {
    Add,
    Sub,
    Mul,
    Div,
    Max,
}

#[derive(Debug, Clone, Copy)]
enum ScalarFn {
    AddC,
    MulC,
    MaxC,
    MinC,
}

#[derive(Debug, Clone, Copy)]
enum ReduceFn {
    SumAll,
    MeanAll,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d { x: Vid, w: Vid, stride: usize, dilation: usize },
    ConvT1d { x: Vid, w: Vid, stride: usize },
    Matmul { a: Vid, b: Vid },
    AddBias { x: Vid, b: Vid },
    Unary { x: Vid, f: UnaryFn },
    Binary { a: Vid, b: Vid, f: BinFn },
    ScalarArith { x: Vid, c: f64, f: ScalarFn },
    Concat { parts: Vec<Vid>, axis: usize },
    Slice { x: Vid, axis: usize, start: usize },
    PadZero { x: Vid, axis: usize, left: usize },
    Reduce { x: Vid, f: ReduceFn },
    Reshape { x: Vid },
    RoundSte { x: Vid },
    Detach,
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Gradients keyed by node id, produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Shape>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the backward root w.r.t. node `v`; zeros if the node
    /// never received gradient (e.g. detached parameters).
    pub fn grad(&self, v: Vid) -> Tensor<T> {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::from_vec(shape.dims(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(shape.dims()),
        }
    }
}

/// Wengert tape. Ops append nodes as they execute; `backward` walks the
/// tape in reverse. Confined to one thread.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()) }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn push(&self, op_name: &'static str, value: Tensor<T>, op: Op, requires_grad: bool) -> Result<Vid> {
        if let Some(index) = value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name, index });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Ok(Vid(nodes.len() - 1))
    }

    fn node_value(&self, v: Vid) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    fn node_rg(&self, v: Vid) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Trainable input; receives gradient.
    pub fn leaf(&self, t: Tensor<T>) -> Result<Vid> {
        self.push("leaf", t, Op::Leaf, true)
    }

    /// Non-trainable input (data, precomputed kernels, noise draws).
    pub fn constant(&self, t: Tensor<T>) -> Result<Vid> {
        self.push("constant", t, Op::Leaf, false)
    }

    pub fn scalar_const(&self, v: f64) -> Result<Vid> {
        self.constant(Tensor::scalar(T::from_f64(v)))
    }

    pub fn value(&self, v: Vid) -> Tensor<T> {
        self.node_value(v)
    }

    pub fn shape(&self, v: Vid) -> Shape {
        self.nodes.borrow()[v.0].value.shape().clone()
    }

    // ---- structural ops ----------------------------------------------

    pub fn reshape(&self, x: Vid, dims: &[usize]) -> Result<Vid> {
        let xv = self.node_value(x);
        let out = xv.reshaped(dims)?;
        self.push("reshape", out, Op::Reshape { x }, self.node_rg(x))
    }

    pub fn concat(&self, parts: &[Vid], axis: usize) -> Result<Vid> {
        if parts.is_empty() {
            return Err(TensorError::ShapeMismatch { op: "concat", detail: "no inputs".into() });
        }
        let first = self.node_value(parts[0]);
        let rank = first.shape().rank();
        if axis >= rank {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                detail: format!("axis {axis} out of range for rank {rank}"),
            });
        }
        let mut axis_total = 0usize;
        for &p in parts {
            let s = self.shape(p);
            if s.rank() != rank {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    detail: format!("rank mismatch: {} vs {}", s, first.shape()),
                });
            }
            for d in 0..rank {
                if d != axis && s.dims()[d] != first.dims()[d] {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        detail: format!("dim {d} mismatch: {} vs {}", s, first.shape()),
                    });
                }
            }
            axis_total += s.dims()[axis];
        }
        let mut out_dims = first.dims().to_vec();
        out_dims[axis] = axis_total;
        let outer: usize = out_dims[..axis].iter().product();
        let inner: usize = out_dims[axis + 1..].iter().product();
        let mut data = vec![T::ZERO; out_dims.iter().product()];
        let mut offset = 0usize;
        for &p in parts {
            let pv = self.node_value(p);
            let plen = pv.dims()[axis];
            let src = pv.data();
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * plen * inner;
                data[dst_base..dst_base + plen * inner]
                    .copy_from_slice(&src[src_base..src_base + plen * inner]);
            }
            offset += plen;
        }
        let rg = parts.iter().any(|&p| self.node_rg(p));
        let out = Tensor::from_vec(&out_dims, data)?;
        self.push("concat", out, Op::Concat { parts: parts.to_vec(), axis }, rg)
    }

    pub fn slice(&self, x: Vid, axis: usize, start: usize, len: usize) -> Result<Vid> {
        let xv = self.node_value(x);
        let rank = xv.shape().rank();
        if axis >= rank || start + len > xv.dims()[axis] {
            return Err(TensorError::ShapeMismatch {
                op: "slice",
                detail: format!("[{start}..{}] on axis {axis} of {}", start + len, xv.shape()),
            });
        }
        let mut out_dims = xv.dims().to_vec();
        out_dims[axis] = len;
        let outer: usize = xv.dims()[..axis].iter().product();
        let inner: usize = xv.dims()[axis + 1..].iter().product();
        let alen = xv.dims()[axis];
        let mut data = vec![T::ZERO; outer * len * inner];
        let src = xv.data();
        for o in 0..outer {
            let src_base = (o * alen + start) * inner;
            let dst_base = o * len * inner;
            data[dst_base..dst_base + len * inner].copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        let out = Tensor::from_vec(&out_dims, data)?;
        self.push("slice", out, Op::Slice { x, axis, start }, self.node_rg(x))
    }

    pub fn pad_zero(&self, x: Vid, axis: usize, left: usize, right: usize) -> Result<Vid> {
        let xv = self.node_value(x);
        let rank = xv.shape().rank();
        if axis >= rank {
            return Err(TensorError::ShapeMismatch {
                op: "pad",
                detail: format!("axis {axis} out of range for {}", xv.shape()),
            });
        }
        let mut out_dims = xv.dims().to_vec();
        let alen = out_dims[axis];
        out_dims[axis] = alen + left + right;
        let outer: usize = xv.dims()[..axis].iter().product();
        let inner: usize = xv.dims()[axis + 1..].iter().product();
        let mut data = vec![T::ZERO; out_dims.iter().product()];
        let src = xv.data();
        for o in 0..outer {
            let dst_base = (o * out_dims[axis] + left) * inner;
            let src_base = o * alen * inner;
            data[dst_base..dst_base + alen * inner].copy_from_slice(&src[src_base..src_base + alen * inner]);
        }
        let out = Tensor::from_vec(&out_dims, data)?;
        self.push("pad", out, Op::PadZero { x, axis, left }, self.node_rg(x))
    }

    // ---- linear ops ---------------------------------------------------

    /// x: [C_in, T], w: [C_out, C_in, K]; valid (unpadded) correlation.
    pub fn conv1d(&self, x: Vid, w: Vid, stride: usize, dilation: usize) -> Result<Vid> {
        let xv = self.node_value(x);
        let wv = self.node_value(w);
        let (xd, wd) = (xv.dims(), wv.dims());
        if xd.len() != 2 || wd.len() != 3 || xd[0] != wd[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                detail: format!("x {} w {} (want [Cin,T] and [Cout,Cin,K])", xv.shape(), wv.shape()),
            });
        }
        let (c_in, t_in) = (xd[0], xd[1]);
        let (c_out, k) = (wd[0], wd[2]);
        let span = dilation * (k - 1) + 1;
        if t_in < span || stride == 0 || dilation == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                detail: format!("T={t_in} < kernel span {span} (K={k}, dilation={dilation}), stride={stride}"),
            });
        }
        let t_out = (t_in - span) / stride + 1;
        let data = kernels::conv1d_fwd(xv.data(), wv.data(), c_in, t_in, c_out, k, stride, dilation, t_out);
        let out = Tensor::from_vec(&[c_out, t_out], data)?;
        let rg = self.node_rg(x) || self.node_rg(w);
        self.push("conv1d", out, Op::Conv1d { x, w, stride, dilation }, rg)
    }

    /// x: [C_in, T], w: [C_in, C_out, K]; raw output length (T-1)*stride + K.
    pub fn conv_transpose1d(&self, x: Vid, w: Vid, stride: usize) -> Result<Vid> {
        let xv = self.node_value(x);
        let wv = self.node_value(w);
        let (xd, wd) = (xv.dims(), wv.dims());
        if xd.len() != 2 || wd.len() != 3 || xd[0] != wd[0] {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose1d",
                detail: format!("x {} w {} (want [Cin,T] and [Cin,Cout,K])", xv.shape(), wv.shape()),
            });
        }
        if stride == 0 {
            return Err(TensorError::ShapeMismatch { op: "conv_transpose1d", detail: "stride=0".into() });
        }
        let (c_in, t_in) = (xd[0], xd[1]);
        let (c_out, k) = (wd[1], wd[2]);
        let data = kernels::convt1d_fwd(xv.data(), wv.data(), c_in, t_in, c_out, k, stride);
        let t_out = (t_in - 1) * stride + k;
        let out = Tensor::from_vec(&[c_out, t_out], data)?;
        let rg = self.node_rg(x) || self.node_rg(w);
        self.push("conv_transpose1d", out, Op::ConvT1d { x, w, stride }, rg)
    }

    pub fn matmul(&self, a: Vid, b: Vid) -> Result<Vid> {
        let av = self.node_value(a);
        let bv = self.node_value(b);
        let (ad, bd) = (av.dims(), bv.dims());
        if ad.len() != 2 || bd.len() != 2 || ad[1] != bd[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                detail: format!("a {} b {}", av.shape(), bv.shape()),
            });
        }
        let (m, kdim, n) = (ad[0], ad[1], bd[1]);
        let data = kernels::matmul(av.data(), bv.data(), m, kdim, n);
        let out = Tensor::from_vec(&[m, n], data)?;
        let rg = self.node_rg(a) || self.node_rg(b);
        self.push("matmul", out, Op::Matmul { a, b }, rg)
    }

    /// x: [C, T], b: [C]; the only broadcast in the op set.
    pub fn add_bias(&self, x: Vid, b: Vid) -> Result<Vid> {
        let xv = self.node_value(x);
        let bv = self.node_value(b);
        if xv.shape().rank() != 2 || bv.shape().rank() != 1 || xv.dims()[0] != bv.dims()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                detail: format!("x {} b {}", xv.shape(), bv.shape()),
            });
        }
        let (c, t) = (xv.dims()[0], xv.dims()[1]);
        let mut data = xv.data().to_vec();
        for ci in 0..c {
            let bvv = bv.data()[ci];
            for v in &mut data[ci * t..(ci + 1) * t] {
                *v += bvv;
            }
        }
        let out = Tensor::from_vec(&[c, t], data)?;
        let rg = self.node_rg(x) || self.node_rg(b);
        self.push("add_bias", out, Op::AddBias { x, b }, rg)
    }

    /// Padding + conv + optional per-channel bias in one call.
    pub fn conv1d_padded(
        &self,
        x: Vid,
        w: Vid,
        bias: Option<Vid>,
        stride: usize,
        dilation: usize,
        pad: PadSpec,
    ) -> Result<Vid> {
        let xp = if pad.left == 0 && pad.right == 0 {
            x
        } else {
            self.pad_zero(x, 1, pad.left, pad.right)?
        };
        let y = self.conv1d(xp, w, stride, dilation)?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Transposed conv whose raw output is cropped to `target_len` frames
    /// from the left edge (the causal convention: output t depends only on
    /// inputs at or before floor(t / stride)).
    pub fn conv_transpose1d_cropped(
        &self,
        x: Vid,
        w: Vid,
        bias: Option<Vid>,
        stride: usize,
        target_len: usize,
    ) -> Result<Vid> {
        let raw = self.conv_transpose1d(x, w, stride)?;
        let raw_len = self.shape(raw).dims()[1];
        if target_len > raw_len {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose1d",
                detail: format!("crop target {target_len} exceeds raw output {raw_len}"),
            });
        }
        let y = self.slice(raw, 1, 0, target_len)?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    // ---- elementwise --------------------------------------------------

    fn unary(&self, op_name: &'static str, x: Vid, f: UnaryFn) -> Result<Vid> {
        let xv = self.node_value(x);
        let out = xv.map(|v| apply_unary(f, v));
        self.push(op_name, out, Op::Unary { x, f }, self.node_rg(x))
    }

    pub fn elu(&self, x: Vid) -> Result<Vid> {
        self.unary("elu", x, UnaryFn::Elu)
    }
    pub fn tanh(&self, x: Vid) -> Result<Vid> {
        self.unary("tanh", x, UnaryFn::Tanh)
    }
    pub fn sigmoid(&self, x: Vid) -> Result<Vid> {
        self.unary("sigmoid", x, UnaryFn::Sigmoid)
    }
    pub fn exp(&self, x: Vid) -> Result<Vid> {
        self.unary("exp", x, UnaryFn::Exp)
    }
    pub fn ln(&self, x: Vid) -> Result<Vid> {
        self.unary("ln", x, UnaryFn::Ln)
    }
    pub fn softplus(&self, x: Vid) -> Result<Vid> {
        self.unary("softplus", x, UnaryFn::Softplus)
    }
    pub fn abs(&self, x: Vid) -> Result<Vid> {
        self.unary("abs", x, UnaryFn::Abs)
    }
    pub fn sqrt(&self, x: Vid) -> Result<Vid> {
        self.unary("sqrt", x, UnaryFn::Sqrt)
    }
    pub fn erf(&self, x: Vid) -> Result<Vid> {
        self.unary("erf", x, UnaryFn::Erf)
    }
    pub fn neg(&self, x: Vid) -> Result<Vid> {
        self.unary("neg", x, UnaryFn::Neg)
    }

    fn binary(&self, op_name: &'static str, a: Vid, b: Vid, f: BinFn) -> Result<Vid> {
        let av = self.node_value(a);
        let bv = self.node_value(b);
        if av.shape() != bv.shape() {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                detail: format!("{} vs {}", av.shape(), bv.shape()),
            });
        }
        let data: Vec<T> = av
            .data()
            .iter()
            .zip(bv.data().iter())
            .map(|(&x, &y)| apply_binary(f, x, y))
            .collect();
        let out = Tensor::from_vec(av.dims(), data)?;
        let rg = self.node_rg(a) || self.node_rg(b);
        self.push(op_name, out, Op::Binary { a, b, f }, rg)
    }

    pub fn add(&self, a: Vid, b: Vid) -> Result<Vid> {
        self.binary("add", a, b, BinFn::Add)
    }
    pub fn sub(&self, a: Vid, b: Vid) -> Result<Vid> {
        self.binary("sub", a, b, BinFn::Sub)
    }
    pub fn mul(&self, a: Vid, b: Vid) -> Result<Vid> {
        self.binary("mul", a, b, BinFn::Mul)
    }
    pub fn div(&self, a: Vid, b: Vid) -> Result<Vid> {
        self.binary("div", a, b, BinFn::Div)
    }
    pub fn maximum(&self, a: Vid, b: Vid) -> Result<Vid> {
        self.binary("maximum", a, b, BinFn::Max)
    }

    fn scalar_arith(&self, op_name: &'static str, x: Vid, c: f64, f: ScalarFn) -> Result<Vid> {
        let xv = self.node_value(x);
        let cv = T::from_f64(c);
        let out = xv.map(|v| match f {
            ScalarFn::AddC => v + cv,
            ScalarFn::MulC => v * cv,
            ScalarFn::MaxC => v.maxv(cv),
            ScalarFn::MinC => v.minv(cv),
        });
        self.push(op_name, out, Op::ScalarArith { x, c, f }, self.node_rg(x))
    }

    pub fn add_c(&self, x: Vid, c: f64) -> Result<Vid> {
        self.scalar_arith("add_c", x, c, ScalarFn::AddC)
    }
    pub fn mul_c(&self, x: Vid, c: f64) -> Result<Vid> {
        self.scalar_arith("mul_c", x, c, ScalarFn::MulC)
    }
    pub fn max_c(&self, x: Vid, c: f64) -> Result<Vid> {
        self.scalar_arith("max_c", x, c, ScalarFn::MaxC)
    }
    pub fn min_c(&self, x: Vid, c: f64) -> Result<Vid> {
        self.scalar_arith("min_c", x, c, ScalarFn::MinC)
    }

    pub fn sum_all(&self, x: Vid) -> Result<Vid> {
        let xv = self.node_value(x);
        let mut s = T::ZERO;
        for &v in xv.data() {
            s += v;
        }
        self.push("sum_all", Tensor::scalar(s), Op::Reduce { x, f: ReduceFn::SumAll }, self.node_rg(x))
    }

    pub fn mean_all(&self, x: Vid) -> Result<Vid> {
        let xv = self.node_value(x);
        let n = xv.numel();
        if n == 0 {
            return Err(TensorError::ShapeMismatch { op: "mean_all", detail: "empty tensor".into() });
        }
        let mut s = T::ZERO;
        for &v in xv.data() {
            s += v;
        }
        let out = Tensor::scalar(s / T::from_f64(n as f64));
        self.push("mean_all", out, Op::Reduce { x, f: ReduceFn::MeanAll }, self.node_rg(x))
    }

    /// Rounds half-away-from-zero; gradient passes straight through.
    pub fn round_ste(&self, x: Vid) -> Result<Vid> {
        let xv = self.node_value(x);
        let out = xv.map(|v| v.round_half_away());
        self.push("round_ste", out, Op::RoundSte { x }, self.node_rg(x))
    }

    /// Identity value, blocks gradient flow.
    pub fn detach(&self, x: Vid) -> Result<Vid> {
        let xv = self.node_value(x);
        let _ = x;
        self.push("detach", xv, Op::Detach, false)
    }

    // ---- backward ------------------------------------------------------

    pub fn backward(&self, out: Vid) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let out_node = &nodes[out.0];
        if out_node.value.numel() != 1 {
            return Err(TensorError::NonScalarOutput(out_node.value.shape().to_string()));
        }
        let n = nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[out.0] = Some(vec![T::ONE]);

        for i in (0..=out.0).rev() {
            if grads[i].is_none() || !nodes[i].requires_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            let node = &nodes[i];
            backprop_node(&nodes, node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().clone()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn apply_unary<T: Scalar>(f: UnaryFn, v: T) -> T {
    match f {
        UnaryFn::Elu => {
            if v > T::ZERO {
                v
            } else {
                v.exp() - T::ONE
            }
        }
        UnaryFn::Tanh => v.tanh(),
        UnaryFn::Sigmoid => v.sigmoid(),
        UnaryFn::Exp => v.exp(),
        UnaryFn::Ln => v.ln(),
        UnaryFn::Softplus => v.softplus(),
        UnaryFn::Abs => v.abs(),
        UnaryFn::Sqrt => v.sqrt(),
        UnaryFn::Erf => v.erf(),
        UnaryFn::Neg => -v,
    }
}

fn unary_deriv<T: Scalar>(f: UnaryFn, x: T, y: T) -> T {
    match f {
        UnaryFn::Elu => {
            if x > T::ZERO {
                T::ONE
            } else {
                y + T::ONE
            }
        }
        UnaryFn::Tanh => T::ONE - y * y,
        UnaryFn::Sigmoid => y * (T::ONE - y),
        UnaryFn::Exp => y,
        UnaryFn::Ln => T::ONE / x,
        UnaryFn::Softplus => x.sigmoid(),
        UnaryFn::Abs => {
            if x > T::ZERO {
                T::ONE
            } else if x < T::ZERO {
                -T::ONE
            } else {
                T::ZERO
            }
        }
        UnaryFn::Sqrt => T::ONE / (T::from_f64(2.0) * y),
        UnaryFn::Erf => T::from_f64(2.0 / std::f64::consts::PI.sqrt()) * (-(x * x)).exp(),
        UnaryFn::Neg => -T::ONE,
    }
}

fn apply_binary<T: Scalar>(f: BinFn, a: T, b: T) -> T {
    match f {
        BinFn::Add => a + b,
        BinFn::Sub => a - b,
        BinFn::Mul => a * b,
        BinFn::Div => a / b,
        BinFn::Max => a.maxv(b),
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Vid, contribution: Vec<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot => *slot = Some(contribution),
    }
}

#[allow(clippy::too_many_lines)]
fn backprop_node<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let rg = |v: Vid| nodes[v.0].requires_grad;
    let val = |v: Vid| &nodes[v.0].value;
    match &node.op {
        Op::Leaf | Op::Detach => {}
        Op::Conv1d { x, w, stride, dilation } => {
            let xv = val(*x);
            let wv = val(*w);
            let (c_in, t_in) = (xv.dims()[0], xv.dims()[1]);
            let (c_out, k) = (wv.dims()[0], wv.dims()[2]);
            let t_out = node.value.dims()[1];
            if rg(*x) {
                let dx = kernels::conv1d_bwd_x(g, wv.data(), c_in, t_in, c_out, k, *stride, *dilation, t_out);
                accumulate(grads, *x, dx);
            }
            if rg(*w) {
                let dw = kernels::conv1d_bwd_w(g, xv.data(), c_in, t_in, c_out, k, *stride, *dilation, t_out);
                accumulate(grads, *w, dw);
            }
        }
        Op::ConvT1d { x, w, stride } => {
            let xv = val(*x);
            let wv = val(*w);
            let (c_in, t_in) = (xv.dims()[0], xv.dims()[1]);
            let (c_out, k) = (wv.dims()[1], wv.dims()[2]);
            if rg(*x) {
                let dx = kernels::convt1d_bwd_x(g, wv.data(), c_in, t_in, c_out, k, *stride);
                accumulate(grads, *x, dx);
            }
            if rg(*w) {
                let dw = kernels::convt1d_bwd_w(g, xv.data(), c_in, t_in, c_out, k, *stride);
                accumulate(grads, *w, dw);
            }
        }
        Op::Matmul { a, b } => {
            let av = val(*a);
            let bv = val(*b);
            let (m, kdim) = (av.dims()[0], av.dims()[1]);
            let n = bv.dims()[1];
            if rg(*a) {
                // da = g . b^T
                let bt = kernels::transpose(bv.data(), kdim, n);
                let da = kernels::matmul(g, &bt, m, n, kdim);
                accumulate(grads, *a, da);
            }
            if rg(*b) {
                // db = a^T . g
                let at = kernels::transpose(av.data(), m, kdim);
                let db = kernels::matmul(&at, g, kdim, m, n);
                accumulate(grads, *b, db);
            }
        }
        Op::AddBias { x, b } => {
            let (c, t) = (node.value.dims()[0], node.value.dims()[1]);
            if rg(*x) {
                accumulate(grads, *x, g.to_vec());
            }
            if rg(*b) {
                let mut db = vec![T::ZERO; c];
                for ci in 0..c {
                    let mut s = T::ZERO;
                    for &gv in &g[ci * t..(ci + 1) * t] {
                        s += gv;
                    }
                    db[ci] = s;
                }
                accumulate(grads, *b, db);
            }
        }
        Op::Unary { x, f } => {
            if rg(*x) {
                let xv = val(*x);
                let dx: Vec<T> = xv
                    .data()
                    .iter()
                    .zip(node.value.data().iter())
                    .zip(g.iter())
                    .map(|((&xi, &yi), &gi)| gi * unary_deriv(*f, xi, yi))
                    .collect();
                accumulate(grads, *x, dx);
            }
        }
        Op::Binary { a, b, f } => {
            let av = val(*a);
            let bv = val(*b);
            if rg(*a) {
                let da: Vec<T> = match f {
                    BinFn::Add | BinFn::Sub => g.to_vec(),
                    BinFn::Mul => g.iter().zip(bv.data()).map(|(&gi, &bi)| gi * bi).collect(),
                    BinFn::Div => g.iter().zip(bv.data()).map(|(&gi, &bi)| gi / bi).collect(),
                    BinFn::Max => g
                        .iter()
                        .zip(av.data().iter().zip(bv.data()))
                        .map(|(&gi, (&ai, &bi))| if ai >= bi { gi } else { T::ZERO })
                        .collect(),
                };
                accumulate(grads, *a, da);
            }
            if rg(*b) {
                let db: Vec<T> = match f {
                    BinFn::Add => g.to_vec(),
                    BinFn::Sub => g.iter().map(|&gi| -gi).collect(),
                    BinFn::Mul => g.iter().zip(av.data()).map(|(&gi, &ai)| gi * ai).collect(),
                    BinFn::Div => g
                        .iter()
                        .zip(av.data().iter().zip(bv.data()))
                        .map(|(&gi, (&ai, &bi))| -gi * ai / (bi * bi))
                        .collect(),
                    BinFn::Max => g
                        .iter()
                        .zip(av.data().iter().zip(bv.data()))
                        .map(|(&gi, (&ai, &bi))| if ai >= bi { T::ZERO } else { gi })
                        .collect(),
                };
                accumulate(grads, *b, db);
            }
        }
        Op::ScalarArith { x, c, f } => {
            if rg(*x) {
                let cv = T::from_f64(*c);
                let xv = val(*x);
                let dx: Vec<T> = match f {
                    ScalarFn::AddC => g.to_vec(),
                    ScalarFn::MulC => g.iter().map(|&gi| gi * cv).collect(),
                    ScalarFn::MaxC => g
                        .iter()
                        .zip(xv.data())
                        .map(|(&gi, &xi)| if xi >= cv { gi } else { T::ZERO })
                        .collect(),
                    ScalarFn::MinC => g
                        .iter()
                        .zip(xv.data())
                        .map(|(&gi, &xi)| if xi <= cv { gi } else { T::ZERO })
                        .collect(),
                };
                accumulate(grads, *x, dx);
            }
        }
        Op::Concat { parts, axis } => {
            let out_dims = node.value.dims();
            let outer: usize = out_dims[..*axis].iter().product();
            let inner: usize = out_dims[*axis + 1..].iter().product();
            let total = out_dims[*axis];
            let mut offset = 0usize;
            for &p in parts {
                let plen = val(p).dims()[*axis];
                if rg(p) {
                    let mut dp = vec![T::ZERO; outer * plen * inner];
                    for o in 0..outer {
                        let src_base = (o * total + offset) * inner;
                        let dst_base = o * plen * inner;
                        dp[dst_base..dst_base + plen * inner]
                            .copy_from_slice(&g[src_base..src_base + plen * inner]);
                    }
                    accumulate(grads, p, dp);
                }
                offset += plen;
            }
        }
        Op::Slice { x, axis, start } => {
            if rg(*x) {
                let xv = val(*x);
                let xd = xv.dims();
                let outer: usize = xd[..*axis].iter().product();
                let inner: usize = xd[*axis + 1..].iter().product();
                let alen = xd[*axis];
                let len = node.value.dims()[*axis];
                let mut dx = vec![T::ZERO; xv.numel()];
                for o in 0..outer {
                    let dst_base = (o * alen + start) * inner;
                    let src_base = o * len * inner;
                    dx[dst_base..dst_base + len * inner].copy_from_slice(&g[src_base..src_base + len * inner]);
                }
                accumulate(grads, *x, dx);
            }
        }
        Op::PadZero { x, axis, left } => {
            if rg(*x) {
                let xv = val(*x);
                let xd = xv.dims();
                let outer: usize = xd[..*axis].iter().product();
                let inner: usize = xd[*axis + 1..].iter().product();
                let alen = xd[*axis];
                let padded = node.value.dims()[*axis];
                let mut dx = vec![T::ZERO; xv.numel()];
                for o in 0..outer {
                    let src_base = (o * padded + left) * inner;
                    let dst_base = o * alen * inner;
                    dx[dst_base..dst_base + alen * inner]
                        .copy_from_slice(&g[src_base..src_base + alen * inner]);
                }
                accumulate(grads, *x, dx);
            }
        }
        Op::Reduce { x, f } => {
            if rg(*x) {
                let xv = val(*x);
                let n = xv.numel();
                let gv = match f {
                    ReduceFn::SumAll => g[0],
                    ReduceFn::MeanAll => g[0] / T::from_f64(n as f64),
                };
                accumulate(grads, *x, vec![gv; n]);
            }
        }
        Op::Reshape { x } | Op::RoundSte { x } => {
            if rg(*x) {
                accumulate(grads, *x, g.to_vec());
            }
        }
    }
}
