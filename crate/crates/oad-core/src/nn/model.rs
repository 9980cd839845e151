//! The encoder + projection-head model.
//!
//! Encoder: repeated [3x3 conv (stride 1, pad 1) -> ReLU -> 2x2 max-pool]
//! blocks followed by a global average pool, producing the representation
//! h (dimension = channels of the last block). Projection head: linear ->
//! ReLU -> linear, and the output is L2-normalized before any loss. No
//! normalization layers, so the forward pass is a pure per-sample
//! function.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use super::layers;
use super::{f, l2_normalize, l2_normalize_backward, t, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub input_h: usize,
    pub input_w: usize,
    /// Output channels of each conv block.
    pub block_channels: Vec<usize>,
    /// Projection output dimension d_z.
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            in_channels: 1,
            input_h: 64,
            input_w: 44,
            block_channels: vec![8, 16, 32],
            embed_dim: 16,
        }
    }
}

impl EncoderConfig {
    /// Representation dimension d_h (channels of the last block).
    pub fn repr_dim(&self) -> usize {
        *self.block_channels.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() {
            return Err(Error::InvalidInput("encoder needs at least one block".into()));
        }
        if self.in_channels == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidInput("channel/embed dims must be positive".into()));
        }
        let (mut h, mut w) = (self.input_h, self.input_w);
        for (i, _) in self.block_channels.iter().enumerate() {
            h /= 2;
            w /= 2;
            if h == 0 || w == 0 {
                return Err(Error::InvalidInput(format!(
                    "input {}x{} collapses to zero after pool {}",
                    self.input_h,
                    self.input_w,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: EncoderConfig,
    pub conv_weights: Vec<Tensor<T>>,
    pub conv_biases: Vec<Tensor<T>>,
    pub proj_w1: Tensor<T>,
    pub proj_b1: Tensor<T>,
    pub proj_w2: Tensor<T>,
    pub proj_b2: Tensor<T>,
}

/// Per-sample forward cache needed for the backward pass.
pub struct SampleCache<T> {
    /// Input to each conv block.
    block_inputs: Vec<Vec<T>>,
    /// Pre-ReLU conv outputs.
    conv_outs: Vec<Vec<T>>,
    /// Pre-pool (post-ReLU) maps.
    relu_outs: Vec<Vec<T>>,
    pool_argmax: Vec<Vec<u32>>,
    /// (h, w) entering each block.
    dims: Vec<(usize, usize)>,
    /// (h, w) of the final pooled map.
    final_dims: (usize, usize),
    /// Representation h.
    pub h: Vec<T>,
    /// Hidden pre-ReLU activations of the projection head.
    proj_pre: Vec<T>,
    proj_hidden: Vec<T>,
    /// Unnormalized projection output and its norm.
    z_raw: Vec<T>,
    z_norm: f64,
    /// Normalized projection output.
    pub z: Vec<T>,
}

/// Gradients aligned with [`Model::params`] ordering.
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub grads: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        ModelGrads { grads: model.params().iter().map(|p| Tensor::zeros(p.shape())).collect() }
    }

    pub fn add(&mut self, other: &ModelGrads<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = t(f(*x) + f(*y));
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut() {
            for x in g.data_mut() {
                *x = t(f(*x) * factor);
            }
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for g in &self.grads {
            g.check_finite("gradient")?;
        }
        Ok(())
    }
}

impl<T: Scalar> Model<T> {
    /// He-style initialization; biases start at zero.
    pub fn new(config: EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut conv_weights = Vec::new();
        let mut conv_biases = Vec::new();
        let mut c_in = config.in_channels;
        for &c_out in &config.block_channels {
            let std = (2.0 / (c_in * 9) as f64).sqrt();
            conv_weights.push(Tensor::randn(&[c_out, c_in, 3, 3], std, rng));
            conv_biases.push(Tensor::zeros(&[c_out]));
            c_in = c_out;
        }
        let d_h = config.repr_dim();
        let d_z = config.embed_dim;
        let std1 = (2.0 / d_h as f64).sqrt();
        let proj_w1 = Tensor::randn(&[d_h, d_h], std1, rng);
        let proj_b1 = Tensor::zeros(&[d_h]);
        let proj_w2 = Tensor::randn(&[d_z, d_h], std1, rng);
        let proj_b2 = Tensor::zeros(&[d_z]);
        Ok(Model { config, conv_weights, conv_biases, proj_w1, proj_b1, proj_w2, proj_b2 })
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.conv_weights.len() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
        }
        names.push("proj.fc1.weight".into());
        names.push("proj.fc1.bias".into());
        names.push("proj.fc2.weight".into());
        names.push("proj.fc2.bias".into());
        names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            out.push(w);
            out.push(b);
        }
        out.push(&self.proj_w1);
        out.push(&self.proj_b1);
        out.push(&self.proj_w2);
        out.push(&self.proj_b2);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for (w, b) in self.conv_weights.iter_mut().zip(self.conv_biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.proj_w1);
        out.push(&mut self.proj_b1);
        out.push(&mut self.proj_w2);
        out.push(&mut self.proj_b2);
        out
    }

    /// Encoder alone: input (in_channels x H x W, flattened) to h.
    pub fn encode_sample(&self, input: &[T]) -> Result<(Vec<T>, SampleCache<T>)> {
        let cfg = &self.config;
        let expect = cfg.in_channels * cfg.input_h * cfg.input_w;
        if input.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {} values ({}x{}x{}), got {}",
                expect,
                cfg.in_channels,
                cfg.input_h,
                cfg.input_w,
                input.len()
            )));
        }
        let mut cache = SampleCache {
            block_inputs: Vec::new(),
            conv_outs: Vec::new(),
            relu_outs: Vec::new(),
            pool_argmax: Vec::new(),
            dims: Vec::new(),
            final_dims: (0, 0),
            h: Vec::new(),
            proj_pre: Vec::new(),
            proj_hidden: Vec::new(),
            z_raw: Vec::new(),
            z_norm: 0.0,
            z: Vec::new(),
        };
        let mut x = input.to_vec();
        let mut c_in = cfg.in_channels;
        let (mut h, mut w) = (cfg.input_h, cfg.input_w);
        for (i, &c_out) in cfg.block_channels.iter().enumerate() {
            cache.dims.push((h, w));
            let conv = layers::conv3x3_forward(
                &x,
                c_in,
                h,
                w,
                self.conv_weights[i].data(),
                self.conv_biases[i].data(),
                c_out,
            );
            let relu = layers::relu_forward(&conv);
            let (pooled, argmax, ho, wo) = layers::maxpool2_forward(&relu, c_out, h, w);
            cache.block_inputs.push(x);
            cache.conv_outs.push(conv);
            cache.relu_outs.push(relu);
            cache.pool_argmax.push(argmax);
            x = pooled;
            c_in = c_out;
            h = ho;
            w = wo;
        }
        cache.final_dims = (h, w);
        let repr = layers::gap_forward(&x, c_in, h, w);
        if repr.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder representation".into()));
        }
        cache.relu_outs.push(x); // final pooled map, consumed by gap backward
        cache.h = repr.clone();
        Ok((repr, cache))
    }

    /// Full forward: encode, project, normalize. Returns the normalized
    /// embedding z; the cache carries everything backward needs.
    pub fn forward_sample(&self, input: &[T]) -> Result<(Vec<T>, SampleCache<T>)> {
        let (h, mut cache) = self.encode_sample(input)?;
        let d_h = self.config.repr_dim();
        let pre = layers::linear_forward(&h, self.proj_w1.data(), self.proj_b1.data(), d_h);
        let hidden = layers::relu_forward(&pre);
        let z_raw = layers::linear_forward(
            &hidden,
            self.proj_w2.data(),
            self.proj_b2.data(),
            self.config.embed_dim,
        );
        let mut z = z_raw.clone();
        let norm = l2_normalize(&mut z);
        cache.proj_pre = pre;
        cache.proj_hidden = hidden;
        cache.z_raw = z_raw;
        cache.z_norm = norm;
        cache.z = z.clone();
        Ok((z, cache))
    }

    /// Backward from a gradient on the normalized embedding z down to all
    /// parameters. Returns per-sample parameter gradients.
    pub fn backward_sample(&self, cache: &SampleCache<T>, grad_z: &[T]) -> ModelGrads<T> {
        let cfg = &self.config;
        let d_h = cfg.repr_dim();
        let mut grads = ModelGrads::zeros_like(self);
        let n_blocks = cfg.block_channels.len();

        // Normalization, then the projection head.
        let grad_z_raw = l2_normalize_backward(&cache.z, cache.z_norm, grad_z);
        let (grad_hidden, gw2, gb2) =
            layers::linear_backward(&cache.proj_hidden, self.proj_w2.data(), cfg.embed_dim, &grad_z_raw);
        let grad_pre = layers::relu_backward(&cache.proj_pre, &grad_hidden);
        let (grad_h, gw1, gb1) =
            layers::linear_backward(&cache.h, self.proj_w1.data(), d_h, &grad_pre);

        let set = |tensor: &mut Tensor<T>, values: &[f64]| {
            for (slot, &v) in tensor.data_mut().iter_mut().zip(values) {
                *slot = t(v);
            }
        };
        set(&mut grads.grads[2 * n_blocks], &gw1);
        set(&mut grads.grads[2 * n_blocks + 1], &gb1);
        set(&mut grads.grads[2 * n_blocks + 2], &gw2);
        set(&mut grads.grads[2 * n_blocks + 3], &gb2);

        self.backward_encoder_into(cache, &grad_h, &mut grads);
        grads
    }

    /// Backward from a gradient on the representation h, skipping the
    /// projection head (used by discovery, which works on h directly).
    pub fn backward_encoder(&self, cache: &SampleCache<T>, grad_h: &[T]) -> ModelGrads<T> {
        let mut grads = ModelGrads::zeros_like(self);
        self.backward_encoder_into(cache, grad_h, &mut grads);
        grads
    }

    fn backward_encoder_into(&self, cache: &SampleCache<T>, grad_h: &[T], grads: &mut ModelGrads<T>) {
        let cfg = &self.config;
        let n_blocks = cfg.block_channels.len();
        let set = |tensor: &mut Tensor<T>, values: &[f64]| {
            for (slot, &v) in tensor.data_mut().iter_mut().zip(values) {
                *slot = t(v);
            }
        };
        // Through the encoder, last block first.
        let (fh, fw) = cache.final_dims;
        let c_last = cfg.block_channels[n_blocks - 1];
        let mut grad_map = layers::gap_backward(grad_h, c_last, fh, fw);
        for i in (0..n_blocks).rev() {
            let c_out = cfg.block_channels[i];
            let c_in = if i == 0 { cfg.in_channels } else { cfg.block_channels[i - 1] };
            let (h, w) = cache.dims[i];
            let grad_relu =
                layers::maxpool2_backward(&cache.pool_argmax[i], &grad_map, c_out * h * w);
            let grad_conv = layers::relu_backward(&cache.conv_outs[i], &grad_relu);
            let (grad_in, gw, gb) = layers::conv3x3_backward(
                &cache.block_inputs[i],
                c_in,
                h,
                w,
                self.conv_weights[i].data(),
                c_out,
                &grad_conv,
            );
            set(&mut grads.grads[2 * i], &gw);
            set(&mut grads.grads[2 * i + 1], &gb);
            grad_map = grad_in;
        }
    }
}
