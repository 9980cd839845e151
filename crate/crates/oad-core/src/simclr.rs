//! Contrastive pre-training (NT-Xent over augmented view pairs).
//!
//! The loss treats rows 2k and 2k+1 of the embedding batch as the two
//! views of sample k. Training shuffles per epoch with a seeded RNG,
//! builds view pairs through the augment module, encodes and projects,
//! and steps the optimizer; the result is a checkpoint whose encoder is
//! reused for pattern discovery (the projection head is discarded
//! downstream).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::augment::{self, AugmentConfig, AugmentMode, ViewKind};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::features::{self, FeatureParams, SparseFilterbank};
use crate::nn::checkpoint::{build_checkpoint, Checkpoint, PipelineDescriptor};
use crate::nn::{f, t, EncoderConfig, Model, ModelGrads, Optimizer, OptimizerKind, Scalar};
use crate::rng::{derive_seed, Rng};
use crate::segment::Window;

/// Unit-normalized embeddings, row 2k paired with row 2k+1.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch<T> {
    data: Vec<T>,
    rows: usize,
    dim: usize,
}

pub const NORM_TOLERANCE: f64 = 1e-5;

impl<T: Scalar> EmbeddingBatch<T> {
    /// Rows must already be unit-normalized (within tolerance) and come
    /// in view pairs, so the row count must be even.
    pub fn new(data: Vec<T>, rows: usize, dim: usize) -> Result<Self> {
        if rows * dim != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{dim} batch needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if rows % 2 != 0 {
            return Err(Error::InvalidInput("embedding batch must pair rows 2k/2k+1".into()));
        }
        let batch = EmbeddingBatch { data, rows, dim };
        for r in 0..rows {
            let norm = batch.row(r).iter().map(|&v| f(v) * f(v)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {r} has norm {norm}, expected 1")));
            }
        }
        Ok(batch)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Index of the other view of the same sample.
    #[inline]
    pub fn partner(r: usize) -> usize {
        r ^ 1
    }
}

#[derive(Debug, Clone)]
pub struct NtXentOutput<T> {
    pub loss: f64,
    /// Per-anchor losses, one per row.
    pub per_anchor: Vec<f64>,
    /// d(loss)/d(z), same layout as the input batch.
    pub grad: Vec<T>,
}

/// NT-Xent: for each anchor i with positive j = partner(i),
/// l(i,j) = -log( exp(sim(i,j)/tau) / sum_{k != i} exp(sim(i,k)/tau) ),
/// averaged over all 2N anchors. Similarities are dot products (rows are
/// unit vectors). Gradients are exact.
pub fn nt_xent_loss<T: Scalar>(batch: &EmbeddingBatch<T>, tau: f64) -> Result<NtXentOutput<T>> {
    if tau <= 0.0 {
        return Err(Error::InvalidInput("temperature must be positive".into()));
    }
    let n = batch.rows();
    if n < 2 {
        return Err(Error::InvalidInput("need at least one view pair".into()));
    }
    let dim = batch.dim();

    // Pairwise similarities.
    let mut sim = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = batch.row(i).iter().zip(batch.row(j)).map(|(&a, &b)| f(a) * f(b)).sum();
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }

    let mut per_anchor = Vec::with_capacity(n);
    let mut grad = vec![0.0f64; n * dim];
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let j = EmbeddingBatch::<T>::partner(i);
        // Log-sum-exp over k != i with max subtraction.
        let mut max_logit = f64::NEG_INFINITY;
        for k in 0..n {
            if k != i {
                max_logit = max_logit.max(sim[i * n + k] / tau);
            }
        }
        let mut denom = 0.0f64;
        for k in 0..n {
            if k != i {
                denom += ((sim[i * n + k] / tau) - max_logit).exp();
            }
        }
        let log_denom = denom.ln() + max_logit;
        let loss_i = log_denom - sim[i * n + j] / tau;
        per_anchor.push(loss_i);

        // d(l_i)/d(sim(i,k)) = p_ik / tau, minus 1/tau for the positive.
        for k in 0..n {
            if k == i {
                continue;
            }
            let p = ((sim[i * n + k] / tau) - log_denom).exp();
            let mut coeff = p / tau;
            if k == j {
                coeff -= 1.0 / tau;
            }
            let coeff = coeff * inv_n;
            for d in 0..dim {
                grad[i * dim + d] += coeff * f(batch.row(k)[d]);
                grad[k * dim + d] += coeff * f(batch.row(i)[d]);
            }
        }
    }
    let loss = per_anchor.iter().sum::<f64>() * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("nt-xent loss".into()));
    }
    Ok(NtXentOutput { loss, per_anchor, grad: grad.iter().map(|&g| t(g)).collect() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimClrConfig {
    pub temperature: f64,
    /// Pairs per batch (N); the batch holds 2N embeddings.
    pub batch_pairs: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    /// Encoder block channels and projection output dim.
    pub blocks: Vec<usize>,
    pub embed_dim: usize,
    pub seed: u64,
    /// Keep an incomplete final batch instead of dropping it.
    pub keep_last_batch: bool,
}

impl Default for SimClrConfig {
    fn default() -> Self {
        SimClrConfig {
            temperature: 0.5,
            batch_pairs: 64,
            epochs: 50,
            optimizer: OptimizerKind::adam(1e-3),
            blocks: vec![8, 16, 32],
            embed_dim: 16,
            seed: 0,
            keep_last_batch: false,
        }
    }
}

impl SimClrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::InvalidInput("simclr.temperature must be > 0".into()));
        }
        if self.batch_pairs < 2 {
            return Err(Error::InvalidInput("simclr.batch_pairs must be >= 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("simclr.epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug)]
pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    pub loss_curve: Vec<LossPoint>,
}

/// Scale every input value by a row-dependent gain (0.5 at the lowest
/// band up to 1.5 at the highest). The conv encoder is
/// translation-equivariant and its global pooling would otherwise discard
/// absolute mel-band position, which carries most of the class signal in
/// spectrograms; gating by position makes channel energies
/// frequency-selective. Zeros stay zero, so silence is preserved.
fn apply_row_bias(values: &mut [f32], channels: usize, rows: usize) {
    debug_assert_eq!(values.len() % (channels * rows), 0);
    let cols = values.len() / (channels * rows);
    let denom = (rows.max(2) - 1) as f32;
    for c in 0..channels {
        for r in 0..rows {
            let gain = 0.5 + r as f32 / denom;
            let start = (c * rows + r) * cols;
            for v in &mut values[start..start + cols] {
                *v *= gain;
            }
        }
    }
}

/// Flatten one augmented view into encoder input values.
pub fn view_to_input(view: &ViewKind) -> Vec<f32> {
    match view {
        ViewKind::Spectrogram(spec) => {
            let mut values = spec.to_unit_values();
            apply_row_bias(&mut values, 1, spec.n_mels);
            values
        }
        ViewKind::Image(img) => {
            let mut values = img.to_unit_values();
            apply_row_bias(&mut values, 3, img.height);
            values
        }
    }
}

/// Featurize an un-augmented window for the encoder under the given mode.
pub fn window_to_input(
    window: &Window,
    mode: AugmentMode,
    params: &FeatureParams,
    fb: &SparseFilterbank,
    colormap: &[[u8; 3]],
) -> Result<Vec<f32>> {
    let spec = features::log_mel_with(&window.samples, window.sample_rate, params, fb)?;
    Ok(view_to_input(&match mode {
        AugmentMode::Aa => ViewKind::Spectrogram(spec),
        AugmentMode::Ia => ViewKind::Image(features::render_image(&spec, colormap)?),
    }))
}

/// Encoder geometry for the configured featurization.
pub fn encoder_config_for(
    aug_mode: AugmentMode,
    feat: &FeatureParams,
    window_len: usize,
    blocks: &[usize],
    embed_dim: usize,
) -> EncoderConfig {
    EncoderConfig {
        in_channels: match aug_mode {
            AugmentMode::Aa => 1,
            AugmentMode::Ia => 3,
        },
        input_h: feat.n_mels,
        input_w: feat.n_frames(window_len),
        block_channels: blocks.to_vec(),
        embed_dim,
    }
}

fn check_uniform_windows(windows: &[Window]) -> Result<(u32, usize)> {
    let first =
        windows.first().ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
    let (sr, len) = (first.sample_rate, first.samples.len());
    for w in windows {
        if w.sample_rate != sr || w.samples.len() != len {
            return Err(Error::InvalidInput(format!(
                "all windows must share sample rate and length; {} at {} Hz with {} samples \
                 differs from {} Hz / {}",
                w.source_ref.0,
                w.sample_rate,
                w.samples.len(),
                sr,
                len
            )));
        }
    }
    Ok((sr, len))
}

/// Contrastive pre-training over unlabeled windows. Deterministic for a
/// fixed seed; parallel execution must not change any output.
pub fn pretrain<E: Executor>(
    windows: &[Window],
    cfg: &SimClrConfig,
    aug: &AugmentConfig,
    feat: &FeatureParams,
    exec: &E,
) -> Result<PretrainOutput> {
    cfg.validate()?;
    aug.validate()?;
    let (sample_rate, window_len) = check_uniform_windows(windows)?;
    let fb = SparseFilterbank::from_dense(&features::mel_filterbank(sample_rate, feat)?);
    let colormap = features::default_colormap();

    let enc_cfg = encoder_config_for(aug.mode, feat, window_len, &cfg.blocks, cfg.embed_dim);
    let mut master_rng = Rng::new(cfg.seed);
    let mut model: Model<f32> = Model::new(enc_cfg, &mut master_rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, &model);

    // IA augments rendered images, and the base featurization never
    // changes: compute it once per window.
    let base_images = match aug.mode {
        AugmentMode::Ia => {
            let rendered = exec.map(windows.len(), |i| {
                let spec =
                    features::log_mel_with(&windows[i].samples, sample_rate, feat, &fb)?;
                features::render_image(&spec, &colormap)
            });
            Some(rendered.into_iter().collect::<Result<Vec<_>>>()?)
        }
        AugmentMode::Aa => None,
    };

    let mut loss_curve = Vec::new();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = Rng::new(derive_seed(&[cfg.seed, epoch as u64, u64::from(b'S')]));
        shuffle_rng.shuffle(&mut order);
        let mut step = 0usize;
        let mut start = 0usize;
        while start < order.len() {
            let end = (start + cfg.batch_pairs).min(order.len());
            let is_partial = end - start < cfg.batch_pairs;
            if is_partial && !cfg.keep_last_batch {
                break;
            }
            let batch_idx = &order[start..end];
            let loss = train_step(
                &mut model, &mut opt, windows, base_images.as_deref(), batch_idx, cfg, aug,
                feat, &fb, &colormap, epoch as u64, exec,
            )?;
            loss_curve.push(LossPoint { epoch, step, loss });
            step += 1;
            start = end;
        }
        if loss_curve.is_empty() && epoch == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset of {} windows yields no full batch of {} pairs \
                 (use keep_last_batch to train anyway)",
                windows.len(),
                cfg.batch_pairs
            )));
        }
    }

    let descriptor = PipelineDescriptor {
        encoder: model.config.clone(),
        mode: aug.mode,
        features: feat.clone(),
        sample_rate,
    };
    let checkpoint = build_checkpoint(&descriptor, &model, &opt, &master_rng);
    Ok(PretrainOutput { checkpoint, loss_curve })
}

#[allow(clippy::too_many_arguments)]
fn train_step<E: Executor>(
    model: &mut Model<f32>,
    opt: &mut Optimizer<f32>,
    windows: &[Window],
    base_images: Option<&[features::SpectrogramImage]>,
    batch_idx: &[usize],
    cfg: &SimClrConfig,
    aug: &AugmentConfig,
    feat: &FeatureParams,
    fb: &SparseFilterbank,
    colormap: &[[u8; 3]],
    epoch: u64,
    exec: &E,
) -> Result<f64> {
    let dim = model.config.embed_dim;
    // Augment + featurize + forward, two views per pair, in parallel.
    let model_ref = &*model;
    let forwards = exec.map(batch_idx.len() * 2, |slot| {
        let pair = slot / 2;
        let view = (slot % 2) as u64;
        let di = batch_idx[pair];
        let mut rng = augment::view_rng(cfg.seed, epoch, di as u64, view);
        let viewed = match base_images {
            Some(images) => ViewKind::Image(augment::augment_image(&images[di], aug, &mut rng)),
            None => augment::make_view(&windows[di], aug, feat, fb, colormap, &mut rng)?,
        };
        let input = view_to_input(&viewed);
        model_ref.forward_sample(&input)
    });

    let mut z = Vec::with_capacity(batch_idx.len() * 2 * dim);
    let mut caches = Vec::with_capacity(batch_idx.len() * 2);
    for result in forwards {
        let (zi, cache) = result?;
        z.extend_from_slice(&zi);
        caches.push(cache);
    }
    let batch = EmbeddingBatch::new(z, batch_idx.len() * 2, dim)?;
    let out = nt_xent_loss(&batch, cfg.temperature)?;

    // Per-sample backward in parallel, then an ordered reduction.
    let grad_rows = &out.grad;
    let partials = exec.map(caches.len(), |i| {
        model_ref.backward_sample(&caches[i], &grad_rows[i * dim..(i + 1) * dim])
    });
    let mut total = ModelGrads::zeros_like(model);
    for part in &partials {
        total.add(part);
    }
    total.check_finite()?;
    opt.step(model, &total)?;
    Ok(out.loss)
}

/// Deterministically encode windows to representations h (projection head
/// discarded).
pub fn encode_dataset<E: Executor>(
    model: &Model<f32>,
    descriptor: &PipelineDescriptor,
    windows: &[Window],
    exec: &E,
) -> Result<Vec<Vec<f32>>> {
    let fb = SparseFilterbank::from_dense(&features::mel_filterbank(
        descriptor.sample_rate,
        &descriptor.features,
    )?);
    let colormap = features::default_colormap();
    let results = exec.map(windows.len(), |i| {
        let input =
            window_to_input(&windows[i], descriptor.mode, &descriptor.features, &fb, &colormap)?;
        let (h, _) = model.encode_sample(&input)?;
        Ok::<Vec<f32>, Error>(h)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::SerialExec;
    use crate::nn::l2_normalize;
    use alloc::string::ToString;

    fn unit_rows(rows: Vec<Vec<f64>>) -> EmbeddingBatch<f64> {
        let dim = rows[0].len();
        let n = rows.len();
        let mut data = Vec::new();
        for mut r in rows {
            l2_normalize(&mut r);
            data.extend(r);
        }
        EmbeddingBatch::new(data, n, dim).unwrap()
    }

    fn random_batch(rng: &mut Rng, pairs: usize, dim: usize) -> EmbeddingBatch<f64> {
        let rows: Vec<Vec<f64>> =
            (0..2 * pairs).map(|_| (0..dim).map(|_| rng.gaussian()).collect()).collect();
        unit_rows(rows)
    }

    /// Brute-force double-loop oracle straight from the formula.
    fn nt_xent_oracle(batch: &EmbeddingBatch<f64>, tau: f64) -> f64 {
        let n = batch.rows();
        let sim = |a: usize, b: usize| -> f64 {
            batch.row(a).iter().zip(batch.row(b)).map(|(x, y)| x * y).sum()
        };
        let mut total = 0.0;
        for i in 0..n {
            let j = i ^ 1;
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += (sim(i, k) / tau).exp();
                }
            }
            total += -((sim(i, j) / tau).exp() / denom).ln();
        }
        total / n as f64
    }

    #[test]
    fn single_pair_loss_is_zero() {
        let batch = unit_rows(vec![vec![0.6, 0.8], vec![1.0, 0.0]]);
        let out = nt_xent_loss(&batch, 0.5).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn hand_computed_two_pair_case() {
        // Pairs ([1,0],[1,0]) and ([0,1],[0,1]) at tau = 1: every anchor
        // sees its positive at sim 1 and two negatives at sim 0, so the
        // loss is ln((e + 2) / e) for each anchor.
        let batch = unit_rows(vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]);
        let out = nt_xent_loss(&batch, 1.0).unwrap();
        let expect = ((core::f64::consts::E + 2.0) / core::f64::consts::E).ln();
        assert!((out.loss - expect).abs() < 1e-12, "{} vs {expect}", out.loss);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = Rng::new(100);
        for pairs in [2usize, 3, 8, 17, 32] {
            let batch = random_batch(&mut rng, pairs, 6);
            let out = nt_xent_loss(&batch, 0.5).unwrap();
            let expect = nt_xent_oracle(&batch, 0.5);
            assert!((out.loss - expect).abs() < 1e-9, "pairs {pairs}");
        }
    }

    #[test]
    fn loss_invariant_under_pair_permutation() {
        let mut rng = Rng::new(7);
        let pairs = 6;
        let dim = 5;
        let batch = random_batch(&mut rng, pairs, dim);
        let mut order: Vec<usize> = (0..pairs).collect();
        rng.shuffle(&mut order);
        let mut data = Vec::new();
        for &p in &order {
            data.extend_from_slice(batch.row(2 * p));
            data.extend_from_slice(batch.row(2 * p + 1));
        }
        let permuted = EmbeddingBatch::new(data, 2 * pairs, dim).unwrap();
        let a = nt_xent_loss(&batch, 0.5).unwrap().loss;
        let b = nt_xent_loss(&permuted, 0.5).unwrap().loss;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_invariant_under_rotation() {
        let mut rng = Rng::new(8);
        let dim = 4;
        let batch = random_batch(&mut rng, 5, dim);
        // Random orthogonal matrix via Gram-Schmidt.
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= d * ui;
                }
            }
            if l2_normalize(&mut v) > 1e-6 {
                q.push(v);
            }
        }
        let mut rotated = Vec::new();
        for r in 0..batch.rows() {
            let row = batch.row(r);
            for qrow in &q {
                rotated.push(qrow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        let rot = EmbeddingBatch::new(rotated, batch.rows(), dim).unwrap();
        let a = nt_xent_loss(&batch, 0.5).unwrap().loss;
        let b = nt_xent_loss(&rot, 0.5).unwrap().loss;
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn closer_positive_lowers_anchor_loss() {
        // Anchor fixed; move its partner closer while negatives stay put.
        let negatives = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.9, 0.4]];
        let anchor = vec![1.0, 0.0, 0.0];
        let partner_far = vec![0.7, 0.7, 0.1];
        let partner_near = vec![0.95, 0.3, 0.05];
        let far = unit_rows(vec![
            anchor.clone(),
            partner_far,
            negatives[0].clone(),
            negatives[1].clone(),
        ]);
        let near =
            unit_rows(vec![anchor, partner_near, negatives[0].clone(), negatives[1].clone()]);
        let lf = nt_xent_loss(&far, 0.5).unwrap().per_anchor[0];
        let ln_ = nt_xent_loss(&near, 0.5).unwrap().per_anchor[0];
        assert!(ln_ < lf, "near {ln_} vs far {lf}");
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let data = vec![2.0f64, 0.0, 1.0, 0.0];
        assert!(EmbeddingBatch::new(data, 2, 2).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_with_renormalization() {
        // Check d loss(normalize(raw)) / d raw, folding the row-wise
        // normalization into both sides.
        let mut rng = Rng::new(55);
        let pairs = 3;
        let dim = 4;
        let tau = 0.5;
        let raw: Vec<f64> = (0..2 * pairs * dim).map(|_| rng.gaussian()).collect();

        let loss_of = |raw: &[f64]| -> f64 {
            let mut data = Vec::with_capacity(raw.len());
            for r in 0..2 * pairs {
                let mut row = raw[r * dim..(r + 1) * dim].to_vec();
                l2_normalize(&mut row);
                data.extend(row);
            }
            let batch = EmbeddingBatch::new(data, 2 * pairs, dim).unwrap();
            nt_xent_loss(&batch, tau).unwrap().loss
        };

        // Analytic: loss grad wrt z, then through each row normalization.
        let mut z = Vec::with_capacity(raw.len());
        let mut norms = Vec::new();
        for r in 0..2 * pairs {
            let mut row = raw[r * dim..(r + 1) * dim].to_vec();
            norms.push(l2_normalize(&mut row));
            z.extend(row);
        }
        let batch = EmbeddingBatch::new(z.clone(), 2 * pairs, dim).unwrap();
        let out = nt_xent_loss(&batch, tau).unwrap();
        let mut analytic = Vec::with_capacity(raw.len());
        for r in 0..2 * pairs {
            let zr = &z[r * dim..(r + 1) * dim];
            let gr = &out.grad[r * dim..(r + 1) * dim];
            analytic.extend(crate::nn::l2_normalize_backward(zr, norms[r], gr));
        }

        let eps = 1e-6;
        let mut max_err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..raw.len() {
            let mut plus = raw.clone();
            let mut minus = raw.clone();
            plus[i] += eps;
            minus[i] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            max_err = max_err.max((fd - analytic[i]).abs());
            scale = scale.max(fd.abs());
        }
        assert!(max_err / scale.max(1e-9) < 1e-6, "rel err {}", max_err / scale);
    }

    // ----- training-loop tests on a tiny synthetic dataset -----

    fn tiny_windows(n_per_class: usize, seed: u64) -> Vec<Window> {
        // Two tone classes at 500 and 3000 Hz, 8 kHz sample rate.
        let sr = 8000u32;
        let len = 4000usize;
        let mut rng = Rng::new(seed);
        let mut out = Vec::new();
        for class in 0..2 {
            let freq = if class == 0 { 500.0 } else { 3000.0 };
            for k in 0..n_per_class {
                let phase = rng.uniform() * core::f64::consts::TAU;
                let samples: Vec<f32> = (0..len)
                    .map(|i| {
                        let u = 2.0 * core::f64::consts::PI * freq * i as f64 / sr as f64;
                        (0.7 * (u + phase).sin() + 0.01 * rng.gaussian()) as f32
                    })
                    .collect();
                out.push(Window {
                    samples,
                    sample_rate: sr,
                    source_ref: (format!("c{class}-{k}"), 0),
                    class_label: None,
                    user_id: None,
                });
            }
        }
        out
    }

    fn tiny_cfg(epochs: usize, seed: u64) -> (SimClrConfig, AugmentConfig, FeatureParams) {
        let cfg = SimClrConfig {
            temperature: 0.5,
            batch_pairs: 4,
            epochs,
            optimizer: OptimizerKind::adam(1e-3),
            blocks: vec![4, 8],
            embed_dim: 8,
            seed,
            keep_last_batch: false,
        };
        let aug = AugmentConfig { mode: AugmentMode::Aa, ..AugmentConfig::default() };
        let feat = FeatureParams { n_fft: 512, hop: 512, n_mels: 16, fmin: 0.0, fmax: 4000.0 };
        (cfg, aug, feat)
    }

    #[test]
    fn one_epoch_eight_samples_batch_four_gives_two_steps() {
        let windows = tiny_windows(4, 1);
        let (cfg, aug, feat) = tiny_cfg(1, 3);
        let out = pretrain(&windows, &cfg, &aug, &feat, &SerialExec).unwrap();
        assert_eq!(out.loss_curve.len(), 2);
        assert_eq!(out.loss_curve[0].step, 0);
        assert_eq!(out.loss_curve[1].step, 1);
    }

    #[test]
    fn pretrain_deterministic_given_seed() {
        let windows = tiny_windows(4, 2);
        let (cfg, aug, feat) = tiny_cfg(2, 9);
        let a = pretrain(&windows, &cfg, &aug, &feat, &SerialExec).unwrap();
        let b = pretrain(&windows, &cfg, &aug, &feat, &SerialExec).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.loss_curve, b.loss_curve);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        // Direction only, median over 3 seeds.
        let mut deltas = Vec::new();
        for seed in [1u64, 2, 3] {
            let windows = tiny_windows(4, 40 + seed);
            let (cfg, aug, feat) = tiny_cfg(8, seed);
            let out = pretrain(&windows, &cfg, &aug, &feat, &SerialExec).unwrap();
            let mean_epoch = |e: usize| -> f64 {
                let pts: Vec<f64> =
                    out.loss_curve.iter().filter(|p| p.epoch == e).map(|p| p.loss).collect();
                pts.iter().sum::<f64>() / pts.len() as f64
            };
            deltas.push(mean_epoch(0) - mean_epoch(7));
        }
        deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(deltas[1] > 0.0, "median loss delta {:?}", deltas);
    }

    #[test]
    fn encode_dataset_deterministic_and_rowwise() {
        let windows = tiny_windows(3, 5);
        let (cfg, aug, feat) = tiny_cfg(1, 11);
        let out = pretrain(&windows, &cfg, &aug, &feat, &SerialExec).unwrap();
        let model = out.checkpoint.model().unwrap();
        let desc = out.checkpoint.descriptor().unwrap();
        let all = encode_dataset(&model, &desc, &windows, &SerialExec).unwrap();
        let again = encode_dataset(&model, &desc, &windows, &SerialExec).unwrap();
        assert_eq!(all, again);
        // Batch-of-one equals the corresponding row of batch-of-many.
        let single = encode_dataset(&model, &desc, &windows[2..3], &SerialExec).unwrap();
        assert_eq!(single[0], all[2]);
    }

    #[test]
    fn zero_weight_encoder_gives_zero_h() {
        let windows = tiny_windows(1, 6);
        let (cfg, aug, feat) = tiny_cfg(1, 12);
        let enc_cfg = encoder_config_for(aug.mode, &feat, 4000, &cfg.blocks, cfg.embed_dim);
        let mut model: Model<f32> = Model::new(enc_cfg.clone(), &mut Rng::new(0)).unwrap();
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let desc = PipelineDescriptor {
            encoder: enc_cfg,
            mode: aug.mode,
            features: feat,
            sample_rate: 8000,
        };
        let h = encode_dataset(&model, &desc, &windows, &SerialExec).unwrap();
        assert!(h[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (cfg, aug, feat) = tiny_cfg(1, 0);
        let err = pretrain(&[], &cfg, &aug, &feat, &SerialExec).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }
}
