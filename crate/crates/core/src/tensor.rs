use std::fmt::Debug;
use std::ops::{Add, Mul};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::InterpError;
use crate::ir::DType;

/// Floating-point element types the operators are generated for.
pub trait Element:
    Copy + Default + PartialEq + Debug + Add<Output = Self> + Mul<Output = Self> + Send + Sync + 'static
{
    const DTYPE: DType;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, InterpError> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(InterpError::ShapeMismatch(format!(
                "shape {shape:?} holds {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::default(); len],
        }
    }

    /// Uniform samples in `[-1, 1]`.
    pub fn random(shape: Vec<usize>, rng: &mut impl Rng) -> Self {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| T::from_f64(rng.random_range(-1.0..=1.0)))
            .collect();
        Tensor { shape, data }
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn dims2(&self) -> Result<(usize, usize), InterpError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(InterpError::ShapeMismatch(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn at2(&self, i: usize, j: usize) -> T {
        self.data[i * self.shape[1] + j]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Largest `|x - r| / max(|r|, 1)` over matching elements.
pub fn max_rel_err<T: Element>(x: &[T], reference: &[T]) -> f64 {
    x.iter()
        .zip(reference)
        .map(|(&a, &r)| {
            let (a, r) = (a.to_f64(), r.to_f64());
            if a.is_nan() || r.is_nan() {
                f64::INFINITY
            } else {
                (a - r).abs() / r.abs().max(1.0)
            }
        })
        .fold(0.0, f64::max)
}
