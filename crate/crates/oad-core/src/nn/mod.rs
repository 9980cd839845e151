//! Dense-tensor neural-network core.
//!
//! A compact convolutional encoder (3x3 conv -> ReLU -> 2x2 max-pool
//! blocks, global average pool) with a two-layer projection head, exact
//! hand-written backpropagation, SGD/Adam, and an in-memory checkpoint
//! representation. Storage is generic over f32/f64 so gradient checks can
//! run at full precision; reductions always accumulate in f64.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod optim;

pub use checkpoint::{Checkpoint, Record, RecordData};
pub use model::{EncoderConfig, Model, ModelGrads};
pub use optim::{Optimizer, OptimizerKind};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Element type of tensors: f32 in production, f64 in gradient checks.
pub trait Scalar: Float + Debug + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline(always)]
pub(crate) fn f<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap()
}

#[inline(always)]
pub(crate) fn t<T: Scalar>(x: f64) -> T {
    T::from(x).unwrap()
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); numel] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| t::<T>(rng.gaussian() * std)).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} contains NaN/Inf")));
        }
        Ok(())
    }
}

/// L2-normalize a vector in place; returns the original norm. Vectors
/// with a vanishing norm are left as zeros (norm 0 is reported).
pub fn l2_normalize<T: Scalar>(v: &mut [T]) -> f64 {
    let norm = v.iter().map(|&x| f(x) * f(x)).sum::<f64>().sqrt();
    if norm > 1e-300 {
        for x in v.iter_mut() {
            *x = t(f(*x) / norm);
        }
    }
    norm
}

/// Gradient of `g -> normalize(x)` given the normalized output and the
/// incoming gradient: (g - z * (z . g)) / ||x||.
pub fn l2_normalize_backward<T: Scalar>(z: &[T], norm: f64, grad_z: &[T]) -> Vec<T> {
    if norm <= 1e-300 {
        return vec![T::zero(); z.len()];
    }
    let dot: f64 = z.iter().zip(grad_z).map(|(&a, &b)| f(a) * f(b)).sum();
    z.iter()
        .zip(grad_z)
        .map(|(&zi, &gi)| t((f(gi) - f(zi) * dot) / norm))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_shape() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn finite_check_catches_nan() {
        let mut t = Tensor::<f32>::zeros(&[4]);
        assert!(t.check_finite("t").is_ok());
        t.data_mut()[2] = f32::NAN;
        assert!(t.check_finite("t").is_err());
    }

    #[test]
    fn normalize_unit_norm() {
        let mut v = vec![3.0f64, 4.0];
        let norm = l2_normalize(&mut v);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let x = vec![0.8f64, -0.3, 1.4, 0.2];
        let g = vec![0.5f64, 1.0, -0.7, 0.1];
        let loss = |x: &[f64]| -> f64 {
            let mut z = x.to_vec();
            l2_normalize(&mut z);
            z.iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let mut z = x.clone();
        let norm = l2_normalize(&mut z);
        let analytic = l2_normalize_backward(&z, norm, &g);
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * eps);
            assert!((fd - analytic[i]).abs() < 1e-8, "coord {i}: {fd} vs {}", analytic[i]);
        }
    }
}
