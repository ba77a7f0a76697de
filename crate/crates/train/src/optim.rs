//! Adam with global gradient-norm clipping. All optimizer state — first and
//! second moments and a master copy of the weights — lives in f64 regardless
//! of the model precision, so f32 training doesn't accumulate update
//! round-off across thousands of steps.

use std::collections::BTreeMap;

use rasc_tensor::{ParamSet, Scalar, Tensor};

use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy)]
pub struct AdamStep {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Factor the gradients were multiplied by (1.0 when under the clip).
    pub clip_scale: f64,
}

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm the gradient vector is scaled down to when it exceeds
    /// it.
    pub clip: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    /// f64 weights, adopted from the param set on the first step; the param
    /// set is overwritten from these after every step.
    master: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            master: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients stored in `params`, writing the
    /// new values back. Rejects non-finite gradients by name.
    pub fn step<T: Scalar>(&mut self, params: &mut ParamSet<T>) -> Result<AdamStep> {
        let mut sq = 0.0f64;
        for (name, p) in params.iter() {
            for gv in p.grad.data() {
                let gf = gv.to_f64();
                if !gf.is_finite() {
                    return Err(TrainError::NonFinite(format!("gradient of {name}")));
                }
                sq += gf * gf;
            }
        }
        let grad_norm = sq.sqrt();
        let clip_scale = if grad_norm > self.clip { self.clip / grad_norm } else { 1.0 };

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let p = params.get(&name)?;
            let n = p.value.numel();
            let g: Vec<f64> = p.grad.data().iter().map(|v| v.to_f64() * clip_scale).collect();
            let w = self
                .master
                .entry(name.clone())
                .or_insert_with(|| p.value.data().iter().map(|v| v.to_f64()).collect());
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            let dims = p.value.dims().to_vec();
            let data: Vec<T> = w.iter().map(|&x| T::from_f64(x)).collect();
            params.set_value(&name, Tensor::from_vec(&dims, data)?)?;
        }
        Ok(AdamStep { grad_norm, clip_scale })
    }
}
