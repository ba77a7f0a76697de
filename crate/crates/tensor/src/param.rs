use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Result, Scalar, Tensor, TensorError};

/// Named trainable tensor with its gradient slot.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Initialization schemes. Fan-in scaling keeps activations O(1) at init;
/// zero-init is used on output projections so composite blocks start as
/// identities.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// U(-a, a) with a = sqrt(1 / fan_in).
    FanIn { fan_in: usize },
    /// Evenly spaced values over [lo, hi] along the (1-D) tensor.
    Linspace { lo: f64, hi: f64 },
}

/// FNV-1a over the parameter name; combined with the global seed this makes
/// initialization independent of registration order.
pub fn name_seed(name: &str, global_seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ global_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Ordered parameter store; names are unique slash-separated paths.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T: Scalar> {
    map: BTreeMap<String, Parameter<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { map: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, dims: &[usize], init: Init, global_seed: u64) -> Result<()> {
        if self.map.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let n = dims.iter().product();
        let data: Vec<T> = match init {
            Init::Zeros => vec![T::ZERO; n],
            Init::Const(c) => vec![T::from_f64(c); n],
            Init::FanIn { fan_in } => {
                let a = (1.0 / fan_in.max(1) as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(name_seed(name, global_seed));
                (0..n).map(|_| T::from_f64(rng.gen_range(-a..a))).collect()
            }
            Init::Linspace { lo, hi } => (0..n)
                .map(|i| {
                    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                    T::from_f64(lo + (hi - lo) * t)
                })
                .collect(),
        };
        let value = Tensor::from_vec(dims, data)?;
        let grad = Tensor::zeros(dims);
        self.map.insert(name.to_string(), Parameter { value, grad });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>> {
        self.map.get(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<Tensor<T>> {
        Ok(self.get(name)?.value.clone())
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self.map.get_mut(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set_value",
                detail: format!("{name}: {} -> {}", p.value.shape(), value.shape()),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn set_grad(&mut self, name: &str, grad: Tensor<T>) -> Result<()> {
        let p = self.map.get_mut(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        p.grad = grad;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter<T>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.map.values().map(|p| p.value.numel()).sum()
    }

    pub fn to_precision<U: Scalar>(&self) -> ParamSet<U> {
        let map = self
            .map
            .iter()
            .map(|(k, p)| {
                (k.clone(), Parameter { value: p.value.to_precision(), grad: p.grad.to_precision() })
            })
            .collect();
        ParamSet { map }
    }
}
