//! Raw compute kernels shared by graph forward and backward passes.
//! All loops are written against contiguous slices so the compiler can
//! vectorize them; this matters on the single-core boxes the codec
//! trains on.

use crate::Scalar;

/// Unrolled dot product; the hot path of every conv and matmul.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (T::ZERO, T::ZERO, T::ZERO, T::ZERO);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in chunks * 4..n {
        s += a[i] * b[i];
    }
    s
}

/// `acc += s * b`, elementwise.
#[inline]
pub fn axpy<T: Scalar>(acc: &mut [T], s: T, b: &[T]) {
    debug_assert_eq!(acc.len(), b.len());
    for (a, &v) in acc.iter_mut().zip(b.iter()) {
        *a += s * v;
    }
}

/// out[co, t] = sum_{ci, k} w[co, ci, k] * x[ci, t*stride + k*dilation]
/// No padding here; callers pad explicitly.
pub fn conv1d_fwd<T: Scalar>(
    x: &[T],
    w: &[T],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    t_out: usize,
) -> Vec<T> {
    let mut out = vec![T::ZERO; c_out * t_out];
    if dilation == 1 {
        // windows are contiguous for any stride: dot per (co, ci, t)
        for co in 0..c_out {
            let orow = &mut out[co * t_out..(co + 1) * t_out];
            for ci in 0..c_in {
                let wrow = &w[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                let xrow = &x[ci * t_in..(ci + 1) * t_in];
                for t in 0..t_out {
                    let base = t * stride;
                    orow[t] += dot(wrow, &xrow[base..base + k]);
                }
            }
        }
    } else {
        for co in 0..c_out {
            let orow = &mut out[co * t_out..(co + 1) * t_out];
            for ci in 0..c_in {
                let wrow = &w[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                let xrow = &x[ci * t_in..(ci + 1) * t_in];
                for t in 0..t_out {
                    let base = t * stride;
                    let mut s = T::ZERO;
                    for (kk, &wv) in wrow.iter().enumerate() {
                        s += wv * xrow[base + kk * dilation];
                    }
                    orow[t] += s;
                }
            }
        }
    }
    out
}

/// Gradient of conv1d_fwd w.r.t. x.
pub fn conv1d_bwd_x<T: Scalar>(
    g: &[T],
    w: &[T],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    t_out: usize,
) -> Vec<T> {
    let mut dx = vec![T::ZERO; c_in * t_in];
    for co in 0..c_out {
        let grow = &g[co * t_out..(co + 1) * t_out];
        for ci in 0..c_in {
            let wrow = &w[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
            let dxrow = &mut dx[ci * t_in..(ci + 1) * t_in];
            if dilation == 1 {
                for (t, &gv) in grow.iter().enumerate() {
                    let base = t * stride;
                    axpy(&mut dxrow[base..base + k], gv, wrow);
                }
            } else {
                for (t, &gv) in grow.iter().enumerate() {
                    let base = t * stride;
                    for (kk, &wv) in wrow.iter().enumerate() {
                        dxrow[base + kk * dilation] += gv * wv;
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of conv1d_fwd w.r.t. w.
pub fn conv1d_bwd_w<T: Scalar>(
    g: &[T],
    x: &[T],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    t_out: usize,
) -> Vec<T> {
    let mut dw = vec![T::ZERO; c_out * c_in * k];
    for co in 0..c_out {
        let grow = &g[co * t_out..(co + 1) * t_out];
        for ci in 0..c_in {
            let xrow = &x[ci * t_in..(ci + 1) * t_in];
            let dwrow = &mut dw[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
            if stride == 1 {
                for kk in 0..k {
                    let off = kk * dilation;
                    dwrow[kk] += dot(grow, &xrow[off..off + t_out]);
                }
            } else {
                for (t, &gv) in grow.iter().enumerate() {
                    let base = t * stride;
                    for (kk, dwv) in dwrow.iter_mut().enumerate() {
                        *dwv += gv * xrow[base + kk * dilation];
                    }
                }
            }
        }
    }
    dw
}

/// out[co, t*stride + k] += w[ci, co, k] * x[ci, t]; raw length (t_in-1)*stride + k.
pub fn convt1d_fwd<T: Scalar>(
    x: &[T],
    w: &[T],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
) -> Vec<T> {
    let t_out = (t_in - 1) * stride + k;
    let mut out = vec![T::ZERO; c_out * t_out];
    for ci in 0..c_in {
        let xrow = &x[ci * t_in..(ci + 1) * t_in];
        for co in 0..c_out {
            let wrow = &w[(ci * c_out + co) * k..(ci * c_out + co + 1) * k];
            let orow = &mut out[co * t_out..(co + 1) * t_out];
            for (t, &xv) in xrow.iter().enumerate() {
                axpy(&mut orow[t * stride..t * stride + k], xv, wrow);
            }
        }
    }
    out
}

pub fn convt1d_bwd_x<T: Scalar>(
    g: &[T],
    w: &[T],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
) -> Vec<T> {
    let t_out = (t_in - 1) * stride + k;
    let mut dx = vec![T::ZERO; c_in * t_in];
    for ci in 0..c_in {
        let dxrow = &mut dx[ci * t_in..(ci + 1) * t_in];
        for co in 0..c_out {
            let wrow = &w[(ci * c_out + co) * k..(ci * c_out + co + 1) * k];
            let grow = &g[co * t_out..(co + 1) * t_out];
            for (t, dxv) in dxrow.iter_mut().enumerate() {
                *dxv += dot(wrow, &grow[t * stride..t * stride + k]);
            }
        }
    }
    dx
}

pub fn convt1d_bwd_w<T: Scalar>(
    g: &[T],
    x: &[T],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
) -> Vec<T> {
    let t_out = (t_in - 1) * stride + k;
    let mut dw = vec![T::ZERO; c_in * c_out * k];
    for ci in 0..c_in {
        let xrow = &x[ci * t_in..(ci + 1) * t_in];
        for co in 0..c_out {
            let grow = &g[co * t_out..(co + 1) * t_out];
            let dwrow = &mut dw[(ci * c_out + co) * k..(ci * c_out + co + 1) * k];
            for (t, &xv) in xrow.iter().enumerate() {
                axpy(dwrow, xv, &grow[t * stride..t * stride + k]);
            }
        }
    }
    dw
}

/// out[m, n] = sum_k a[m, k] * b[k, n]; b is packed column-major first for
/// contiguous inner products.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, kdim: usize, n: usize) -> Vec<T> {
    let bt = transpose(b, kdim, n);
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        let arow = &a[i * kdim..(i + 1) * kdim];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, ov) in orow.iter_mut().enumerate() {
            *ov = dot(arow, &bt[j * kdim..(j + 1) * kdim]);
        }
    }
    out
}

pub fn transpose<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}
