//! Central-difference gradient verification.
//!
//! The caller supplies a deterministic loss closure over a parameter set and
//! the analytic gradients it wants audited; the harness perturbs a sampled
//! subset of coordinates per parameter and reports the worst relative error
//! `|analytic - cd| / max(|analytic|, |cd|, 1e-8)`.
//!
//! A central difference computes `(f(θ+ε) - f(θ-ε)) / 2ε` from two forward
//! values that each carry roundoff on the order of a few ulps of `f`. For a
//! loss of magnitude ~10 that is ~1e-14 of absolute noise, so the difference
//! quotient cannot resolve slopes much below `1e-14 / 2ε` no matter how
//! correct the gradient is. Coordinates whose analytic derivative sits under
//! that floor carry no signal for a *relative* comparison; with
//! [`FdSettings::min_grad`] set, the harness checks them *absolutely*
//! instead: their central difference must itself be quiet (below
//! [`SUB_RESOLUTION_BOUND`]). A coordinate the analytic pass claims is dead
//! while the loss visibly moves is exactly a dropped path, and still fails
//! loudly through the relative formula.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::param::name_seed;
use crate::{ParamSet, Result, Tensor, TensorError};

/// A central difference on a sub-`min_grad` coordinate that exceeds this is
/// treated as a real slope the analytic pass missed, not as noise.
pub const SUB_RESOLUTION_BOUND: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct FdSettings {
    pub epsilon: f64,
    /// Coordinates sampled per parameter tensor (all, if the tensor is
    /// smaller).
    pub coords_per_param: usize,
    pub seed: u64,
    /// Analytic magnitude below which a coordinate is checked absolutely
    /// rather than relatively (see the module notes on f64 resolution).
    /// Zero keeps every coordinate in the relative comparison.
    pub min_grad: f64,
}

impl Default for FdSettings {
    fn default() -> Self {
        FdSettings { epsilon: 1e-3, coords_per_param: 4, seed: 0x5eed, min_grad: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    /// Coordinates compared relatively.
    pub coords_checked: usize,
    /// Sub-`min_grad` coordinates whose central difference stayed quiet.
    pub coords_absolute: usize,
}

pub fn finite_difference_check<F>(
    params: &ParamSet<f64>,
    analytic: &BTreeMap<String, Tensor<f64>>,
    settings: &FdSettings,
    mut loss: F,
) -> Result<FdReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    if settings.epsilon <= 0.0 {
        return Err(TensorError::FdHarness("epsilon must be positive".into()));
    }
    let base_a = loss(params)?;
    let base_b = loss(params)?;
    if base_a.to_bits() != base_b.to_bits() {
        return Err(TensorError::FdHarness(format!(
            "loss is non-deterministic: {base_a} vs {base_b} at the same point"
        )));
    }

    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        coords_checked: 0,
        coords_absolute: 0,
    };

    for (name, param) in params.iter() {
        let grad = analytic
            .get(name)
            .ok_or_else(|| TensorError::FdHarness(format!("no analytic gradient supplied for {name}")))?;
        let n = param.value.numel();
        if n == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(name, settings.seed));
        let mut probe_coords = |pool: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
            if pool.len() <= settings.coords_per_param {
                pool.to_vec()
            } else {
                (0..settings.coords_per_param)
                    .map(|_| pool[rng.gen_range(0..pool.len())])
                    .collect()
            }
        };
        let coords: Vec<usize> = if settings.min_grad > 0.0 {
            let (loud, quiet): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&c| grad.data()[c].abs() >= settings.min_grad);
            let mut picked = probe_coords(&loud, &mut rng);
            picked.extend(probe_coords(&quiet, &mut rng));
            picked
        } else {
            let all: Vec<usize> = (0..n).collect();
            probe_coords(&all, &mut rng)
        };
        for c in coords {
            let theta = param.value.data()[c];
            let mut probe = params.clone();
            probe.set_value(name, bump(&param.value, c, theta + settings.epsilon))?;
            let up = loss(&probe)?;
            probe.set_value(name, bump(&param.value, c, theta - settings.epsilon))?;
            let down = loss(&probe)?;
            let cd = (up - down) / (2.0 * settings.epsilon);
            let an = grad.data()[c];
            if an.abs() < settings.min_grad && (an - cd).abs() <= SUB_RESOLUTION_BOUND {
                report.coords_absolute += 1;
                continue;
            }
            let rel = (an - cd).abs() / an.abs().max(cd.abs()).max(1e-8);
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_coord = c;
            }
        }
    }
    Ok(report)
}

fn bump(t: &Tensor<f64>, coord: usize, v: f64) -> Tensor<f64> {
    let mut data = t.data().to_vec();
    data[coord] = v;
    Tensor::from_vec(t.dims(), data).expect("same shape")
}
