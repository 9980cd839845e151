//! SGD with momentum and Adam.

use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use super::model::{Model, ModelGrads};
use super::{f, t, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state: one or two slot tensors per parameter (momentum, or
/// Adam's first/second moments) plus the step counter.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub step_count: u64,
    pub slot_m: Vec<Tensor<T>>,
    pub slot_v: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, model: &Model<T>) -> Self {
        let zeros: Vec<Tensor<T>> =
            model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        Optimizer { kind, step_count: 0, slot_m: zeros.clone(), slot_v: zeros }
    }

    pub fn step(&mut self, model: &mut Model<T>, grads: &ModelGrads<T>) -> Result<()> {
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd { lr, momentum } => {
                for ((param, slot), grad) in
                    model.params_mut().into_iter().zip(&mut self.slot_m).zip(&grads.grads)
                {
                    for ((p, v), g) in
                        param.data_mut().iter_mut().zip(slot.data_mut()).zip(grad.data())
                    {
                        let vel = momentum * f(*v) + f(*g);
                        *v = t(vel);
                        let next = f(*p) - lr * vel;
                        if !next.is_finite() {
                            return Err(Error::NonFinite("sgd update".into()));
                        }
                        *p = t(next);
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                let tstep = self.step_count as i32;
                let bc1 = 1.0 - beta1.powi(tstep);
                let bc2 = 1.0 - beta2.powi(tstep);
                for (((param, m), v), grad) in model
                    .params_mut()
                    .into_iter()
                    .zip(&mut self.slot_m)
                    .zip(&mut self.slot_v)
                    .zip(&grads.grads)
                {
                    for (((p, ms), vs), g) in param
                        .data_mut()
                        .iter_mut()
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                        .zip(grad.data())
                    {
                        let gg = f(*g);
                        let m_new = beta1 * f(*ms) + (1.0 - beta1) * gg;
                        let v_new = beta2 * f(*vs) + (1.0 - beta2) * gg * gg;
                        *ms = t(m_new);
                        *vs = t(v_new);
                        let m_hat = m_new / bc1;
                        let v_hat = v_new / bc2;
                        let next = f(*p) - lr * m_hat / (v_hat.sqrt() + eps);
                        if !next.is_finite() {
                            return Err(Error::NonFinite("adam update".into()));
                        }
                        *p = t(next);
                    }
                }
            }
        }
        Ok(())
    }
}
