//! The three quantizer faces: hard rounding (inference), hard rounding with a
//! straight-through gradient (training synthesis path), and additive uniform
//! noise (training rate path). All rounding is half-away-from-zero so the
//! encoder and decoder can never disagree on ties.

use rasc_tensor::{Graph, Scalar, Tensor, Vid};

use crate::Result;

/// ŷ = round(v − μ) + μ, elementwise.
pub fn quantize_round<T: Scalar>(v: &Tensor<T>, mu: &Tensor<T>) -> Tensor<T> {
    assert_eq!(v.shape(), mu.shape(), "quantize shapes must agree");
    let data: Vec<T> = v
        .data()
        .iter()
        .zip(mu.data())
        .map(|(&vi, &mi)| {
            let d = vi.to_f64() - mi.to_f64();
            T::from_f64(d.round() + mi.to_f64())
        })
        .collect();
    Tensor::from_vec(v.dims(), data).expect("same shape")
}

/// v + u with caller-supplied u ~ U(−½, ½) — the training-rate relaxation.
pub fn quantize_noise<T: Scalar>(v: &Tensor<T>, noise: &Tensor<T>) -> Tensor<T> {
    assert_eq!(v.shape(), noise.shape(), "noise shape must agree");
    let data: Vec<T> =
        v.data().iter().zip(noise.data()).map(|(&a, &b)| T::from_f64(a.to_f64() + b.to_f64())).collect();
    Tensor::from_vec(v.dims(), data).expect("same shape")
}

/// Graph version of the round mode: forward rounds, backward passes the
/// gradient straight through to both v and μ.
pub fn quantize_round_ste_graph<T: Scalar>(g: &Graph<T>, v: Vid, mu: Vid) -> Result<Vid> {
    let centered = g.sub(v, mu)?;
    let rounded = g.round_ste(centered)?;
    Ok(g.add(rounded, mu)?)
}
