//! Gaussian bin probabilities for the conditional coding of y's slices:
//! the chance that a N(μ, σ²) sample rounds to integer n, i.e. the CDF mass
//! of the length-1 bin centered on n.

use rasc_tensor::{Graph, Scalar, Vid};

use crate::Result;

/// Predicted scales are floored here; anything smaller would make bins so
/// sharp that table quantization breaks down.
pub const SIGMA_MIN: f64 = 0.11;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

/// P[round(X − μ_int) = n] for X ~ N(μ_int + μ_frac, σ²): the mass of
/// (n−½, n+½] under a normal centered at μ_frac.
pub fn gaussian_pmf(n: i64, mu_frac: f64, sigma: f64) -> f64 {
    let s = sigma.max(SIGMA_MIN);
    let hi = (n as f64 + 0.5 - mu_frac) / s;
    let lo = (n as f64 - 0.5 - mu_frac) / s;
    normal_cdf(hi) - normal_cdf(lo)
}

/// Graph analogue on tensors: bin mass of `values` (already centered, i.e.
/// v − μ) under N(0, σ²) = ½·(erf((v+½)/σ√2) − erf((v−½)/σ√2)).
/// σ must already be floored by the caller's parameterization.
pub fn gaussian_bin_graph<T: Scalar>(g: &Graph<T>, centered: Vid, sigma: Vid) -> Result<Vid> {
    let denom = g.mul_c(sigma, SQRT_2)?;
    let hi = g.erf(g.div(g.add_c(centered, 0.5)?, denom)?)?;
    let lo = g.erf(g.div(g.add_c(centered, -0.5)?, denom)?)?;
    Ok(g.mul_c(g.sub(hi, lo)?, 0.5)?)
}
