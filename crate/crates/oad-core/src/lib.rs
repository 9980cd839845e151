//! Core algorithms for open-set audio pattern discovery.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! cough/breath event segmentation, Log-Mel featurization, stochastic
//! view-pair augmentation, a compact convolutional encoder with exact
//! backpropagation, NT-Xent contrastive pre-training, OpenCon-style
//! prototype discovery, and the trial/evaluation protocol. File formats,
//! threading, and the CLI live in the companion `oad` crate.
//!
//! The crate is `no_std` (with `alloc`); all transcendental math goes
//! through `num_traits::Float` so results are identical with or without
//! the standard library.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augment;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod fft;
pub mod nn;
pub mod opencon;
pub mod rng;
pub mod stats;
pub mod segment;
pub mod simclr;
pub mod synth;

pub use error::{Error, Result};
pub use exec::{Executor, SerialExec};
pub use rng::Rng;
