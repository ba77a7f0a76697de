use std::sync::Arc;

use crate::{Result, Scalar, TensorError};

/// Row-major shape, rank 0..=3 in practice (scalars, vectors, C×T maps,
/// conv kernels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn scalar() -> Self {
        Shape(vec![])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

impl From<&[usize]> for Shape {
    fn from(d: &[usize]) -> Self {
        Shape(d.to_vec())
    }
}

/// Immutable flat buffer + shape. Cloning is an `Arc` bump; mutation goes
/// through fresh allocations in the ops.
#[derive(Debug, Clone)]
pub struct Tensor<T: Scalar> {
    shape: Shape,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape(dims.to_vec());
        if shape.numel() != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {} needs {} values, got {}", shape, shape.numel(), data.len()),
            });
        }
        Ok(Tensor { shape, data: Arc::new(data) })
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: Shape::scalar(), data: Arc::new(vec![v]) }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let shape = Shape(dims.to_vec());
        let n = shape.numel();
        Tensor { shape, data: Arc::new(vec![T::ZERO; n]) }
    }

    pub fn full(dims: &[usize], v: T) -> Self {
        let shape = Shape(dims.to_vec());
        let n = shape.numel();
        Tensor { shape, data: Arc::new(vec![v; n]) }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Single value of a rank-0 tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "item",
                detail: format!("expected 1 element, shape is {}", self.shape),
            });
        }
        Ok(self.data[0])
    }

    /// Same buffer under a new shape with equal element count.
    pub fn reshaped(&self, dims: &[usize]) -> Result<Tensor<T>> {
        let shape = Shape(dims.to_vec());
        if shape.numel() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("{} -> {} changes element count", self.shape, shape),
            });
        }
        Ok(Tensor { shape, data: Arc::clone(&self.data) })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        let data: Vec<T> = self.data.iter().map(|&v| f(v)).collect();
        Tensor { shape: self.shape.clone(), data: Arc::new(data) }
    }

    pub fn to_precision<U: Scalar>(&self) -> Tensor<U> {
        let data: Vec<U> = self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect();
        Tensor { shape: self.shape.clone(), data: Arc::new(data) }
    }

    pub fn all_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}
