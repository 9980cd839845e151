//! Open-world discovery with prototype learning.
//!
//! Starting from a pre-trained encoder (or precomputed embeddings behind
//! an identity encoder), the loop keeps one unit-norm prototype per class
//! (known + novel). Each epoch it calibrates a similarity threshold from
//! the labeled instances, routes unlabeled instances to known/novel
//! candidates by their maximum cosine similarity to the known prototypes,
//! pseudo-labels augmented views by prototype argmax, optimizes a
//! supervised-contrastive + prototype loss over each batch, and updates
//! prototypes by an exponential moving average of assigned embeddings.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::augment::{self, AugmentConfig};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::features::{self, SparseFilterbank};
use crate::nn::checkpoint::{build_checkpoint, Checkpoint};
use crate::nn::{
    f, l2_normalize, l2_normalize_backward, t, Model, ModelGrads, Optimizer, OptimizerKind, Scalar,
};
use crate::rng::{derive_seed, Rng};
use crate::segment::Window;
use crate::simclr::view_to_input;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct OpenConConfig {
    pub n_known: usize,
    pub n_unknown: usize,
    /// Contrastive temperature.
    pub tau_con: f64,
    /// Prototype softmax temperature.
    pub tau_proto: f64,
    /// Prototype EMA momentum.
    pub gamma: f64,
    /// Percentile of labeled self-similarities used as the OOD threshold.
    pub lambda_percentile: f64,
    pub epochs: usize,
    /// Instances per batch (each contributes two augmented views).
    pub batch: usize,
    /// Fine-tune the encoder during discovery (ignored for the identity
    /// encoder).
    pub finetune: bool,
    pub optimizer: OptimizerKind,
    /// Gaussian noise used to form embedding-space views when the data
    /// is already embedded (identity encoder).
    pub embed_view_noise: f64,
    /// Re-seed an unknown prototype that went a whole epoch without
    /// assignments to the novel candidate farthest from every prototype.
    /// Without this, one random prototype can capture several novel
    /// clusters while the others stay dead (the k-means empty-cluster
    /// failure).
    pub reseed_dead: bool,
    /// Subtract the training-set mean from every embedding before
    /// normalization. A ReLU encoder emits non-negative representations,
    /// which squeezes all cosine similarities toward 1 and blinds the
    /// known/novel split; centering restores angular spread.
    pub center_embeddings: bool,
    pub seed: u64,
}

impl Default for OpenConConfig {
    fn default() -> Self {
        OpenConConfig {
            n_known: 2,
            n_unknown: 2,
            tau_con: 0.5,
            tau_proto: 0.1,
            gamma: 0.9,
            lambda_percentile: 10.0,
            epochs: 30,
            batch: 64,
            finetune: true,
            optimizer: OptimizerKind::adam(1e-4),
            embed_view_noise: 0.1,
            reseed_dead: true,
            center_embeddings: true,
            seed: 0,
        }
    }
}

impl OpenConConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_known + self.n_unknown < 2 {
            return Err(Error::InvalidInput("opencon needs at least two classes".into()));
        }
        if self.n_known == 0 {
            return Err(Error::InvalidInput("opencon needs at least one known class".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput("opencon.gamma must lie in (0, 1)".into()));
        }
        if self.tau_con <= 0.0 || self.tau_proto <= 0.0 {
            return Err(Error::InvalidInput("opencon temperatures must be > 0".into()));
        }
        if !(0.0..=100.0).contains(&self.lambda_percentile) {
            return Err(Error::InvalidInput("opencon.lambda_percentile must be 0..=100".into()));
        }
        if self.batch < 2 {
            return Err(Error::InvalidInput("opencon.batch must be >= 2".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_known + self.n_unknown
    }
}

/// One unit vector per class; rows 0..n_known are the known classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    pub mu: Vec<T>,
    pub n_known: usize,
    pub n_unknown: usize,
    pub dim: usize,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn n_classes(&self) -> usize {
        self.n_known + self.n_unknown
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[T] {
        &self.mu[c * self.dim..(c + 1) * self.dim]
    }

    pub fn check_unit_norm(&self) -> Result<()> {
        for c in 0..self.n_classes() {
            let norm = self.row(c).iter().map(|&v| f(v) * f(v)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidInput(format!("prototype {c} has norm {norm}")));
            }
        }
        Ok(())
    }
}

/// Labeling state of a training instance. Ground-truth classes of
/// unlabeled instances live outside this type, so the training path
/// cannot read them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelState {
    /// Known-class label index in 0..n_known.
    LabeledKnown(usize),
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitDecision {
    /// Carried a label; never routed through the OOD split.
    Labeled,
    KnownCandidate,
    NovelCandidate,
}

/// Cosine similarity of two non-zero vectors.
pub fn cosine_sim<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        dot += f(x) * f(y);
        na += f(x) * f(x);
        nb += f(y) * f(y);
    }
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Known prototypes from labeled means; unknown prototypes drawn as
/// random unit vectors from the seeded RNG.
pub fn init_prototypes<T: Scalar>(
    embeddings: &[Vec<T>],
    labels: &[LabelState],
    config: &OpenConConfig,
    rng: &mut Rng,
) -> Result<PrototypeSet<T>> {
    let dim = embeddings
        .first()
        .map(|e| e.len())
        .ok_or_else(|| Error::InvalidInput("no embeddings to initialize prototypes".into()))?;
    let mut mu = vec![T::zero(); config.n_classes() * dim];
    for c in 0..config.n_known {
        let mut acc = vec![0.0f64; dim];
        let mut count = 0usize;
        for (e, l) in embeddings.iter().zip(labels) {
            if *l == LabelState::LabeledKnown(c) {
                for (slot, &v) in acc.iter_mut().zip(e.iter()) {
                    *slot += f(v);
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidInput(format!("known class {c} has no labeled instances")));
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-9 {
            return Err(Error::Degenerate(format!(
                "labeled mean of class {c} is zero (antipodal embeddings)"
            )));
        }
        for (slot, v) in mu[c * dim..(c + 1) * dim].iter_mut().zip(acc) {
            *slot = t(v / norm);
        }
    }
    for u in 0..config.n_unknown {
        let c = config.n_known + u;
        let v = rng.unit_vector(dim);
        for (slot, x) in mu[c * dim..(c + 1) * dim].iter_mut().zip(v) {
            *slot = t(x as f64);
        }
    }
    Ok(PrototypeSet { mu, n_known: config.n_known, n_unknown: config.n_unknown, dim })
}

/// Threshold = p-th percentile of each labeled instance's cosine
/// similarity to its own class prototype.
pub fn calibrate_lambda<T: Scalar>(
    embeddings: &[Vec<T>],
    labels: &[LabelState],
    prototypes: &PrototypeSet<T>,
    percentile: f64,
) -> Result<f64> {
    let mut sims = Vec::new();
    for (e, l) in embeddings.iter().zip(labels) {
        if let LabelState::LabeledKnown(c) = l {
            sims.push(cosine_sim(e, prototypes.row(*c))?);
        }
    }
    if sims.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "lambda calibration needs >= 10 labeled instances, got {}",
            sims.len()
        )));
    }
    Ok(stats::percentile(&sims, percentile).unwrap())
}

/// Route an unlabeled embedding: KnownCandidate iff its best cosine
/// similarity over the known prototypes reaches the threshold.
pub fn ood_split<T: Scalar>(z: &[T], prototypes: &PrototypeSet<T>, lambda: f64) -> SplitDecision {
    let mut best = f64::NEG_INFINITY;
    for c in 0..prototypes.n_known {
        if let Ok(s) = cosine_sim(z, prototypes.row(c)) {
            best = best.max(s);
        }
    }
    if best >= lambda {
        SplitDecision::KnownCandidate
    } else {
        SplitDecision::NovelCandidate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRestriction {
    KnownOnly,
    /// Unknown prototypes only (falls back to all classes when there are
    /// none). Used for novel candidates during training: letting them
    /// claim a known prototype drags that prototype into the novel
    /// cluster and collapses the calibrated threshold.
    UnknownOnly,
    AllClasses,
}

/// Argmax of cosine similarity over the permitted prototypes; ties break
/// to the lowest class index.
pub fn pseudo_label<T: Scalar>(
    z: &[T],
    prototypes: &PrototypeSet<T>,
    restriction: LabelRestriction,
) -> usize {
    let range = match restriction {
        LabelRestriction::KnownOnly => 0..prototypes.n_known,
        LabelRestriction::UnknownOnly if prototypes.n_unknown > 0 => {
            prototypes.n_known..prototypes.n_classes()
        }
        _ => 0..prototypes.n_classes(),
    };
    let mut best = range.start;
    let mut best_sim = f64::NEG_INFINITY;
    for c in range {
        let s = cosine_sim(z, prototypes.row(c)).unwrap_or(f64::NEG_INFINITY);
        if s > best_sim {
            best_sim = s;
            best = c;
        }
    }
    best
}

/// P(i) = { p != i : label(p) = label(i) }.
pub fn build_positive_sets(labels: &[usize]) -> Vec<Vec<usize>> {
    let n = labels.len();
    (0..n)
        .map(|i| (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct OpenConLossOutput<T> {
    pub loss: f64,
    pub supcon: f64,
    pub proto: f64,
    /// d(loss)/d(z), 2N x dim.
    pub grad_z: Vec<T>,
    /// d(loss)/d(mu), n_classes x dim.
    pub grad_mu: Vec<T>,
}

/// L = L_supcon + L_proto over a batch of unit embeddings with one label
/// per row (views share their origin's label).
///
/// L_supcon averages, over anchors with a non-empty positive set,
/// -(1/|P(i)|) sum_{p in P(i)} log( exp(z_i.z_p/tau) / sum_{a!=i} exp(z_i.z_a/tau) ).
/// L_proto averages -log softmax_c(z_i.mu_c / tau_proto) at c = label(i).
pub fn opencon_loss<T: Scalar>(
    z: &[Vec<T>],
    labels: &[usize],
    prototypes: &PrototypeSet<T>,
    tau_con: f64,
    tau_proto: f64,
) -> Result<OpenConLossOutput<T>> {
    let n = z.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch("labels do not match batch".into()));
    }
    let dim = prototypes.dim;
    for (i, row) in z.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::ShapeMismatch(format!("embedding {i} has dim {}", row.len())));
        }
        let norm = row.iter().map(|&v| f(v) * f(v)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > crate::simclr::NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!("row {i} has norm {norm}, expected 1")));
        }
    }
    prototypes.check_unit_norm()?;
    for &l in labels {
        if l >= prototypes.n_classes() {
            return Err(Error::InvalidInput(format!("label {l} out of range")));
        }
    }

    let positives = build_positive_sets(labels);
    let mut grad_z = vec![0.0f64; n * dim];
    let mut grad_mu = vec![0.0f64; prototypes.n_classes() * dim];

    // Pairwise similarities.
    let mut sim = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = z[i].iter().zip(&z[j]).map(|(&a, &b)| f(a) * f(b)).sum();
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }

    // Supervised contrastive term.
    let anchors: Vec<usize> = (0..n).filter(|&i| !positives[i].is_empty()).collect();
    let mut supcon = 0.0f64;
    if !anchors.is_empty() && n >= 2 {
        let inv_m = 1.0 / anchors.len() as f64;
        for &i in &anchors {
            let mut max_logit = f64::NEG_INFINITY;
            for a in 0..n {
                if a != i {
                    max_logit = max_logit.max(sim[i * n + a] / tau_con);
                }
            }
            let mut denom = 0.0f64;
            for a in 0..n {
                if a != i {
                    denom += ((sim[i * n + a] / tau_con) - max_logit).exp();
                }
            }
            let log_denom = denom.ln() + max_logit;
            let p_count = positives[i].len() as f64;
            let mut loss_i = 0.0f64;
            for &p in &positives[i] {
                loss_i += log_denom - sim[i * n + p] / tau_con;
            }
            loss_i /= p_count;
            supcon += loss_i * inv_m;

            for a in 0..n {
                if a == i {
                    continue;
                }
                let q = ((sim[i * n + a] / tau_con) - log_denom).exp();
                let mut coeff = q / tau_con;
                if positives[i].contains(&a) {
                    coeff -= 1.0 / (tau_con * p_count);
                }
                let coeff = coeff * inv_m;
                for d in 0..dim {
                    grad_z[i * dim + d] += coeff * f(z[a][d]);
                    grad_z[a * dim + d] += coeff * f(z[i][d]);
                }
            }
        }
    }

    // Prototype cross-entropy term over all anchors.
    let n_classes = prototypes.n_classes();
    let inv_n = 1.0 / n as f64;
    let mut proto = 0.0f64;
    for i in 0..n {
        let mut logits = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let s: f64 = z[i].iter().zip(prototypes.row(c)).map(|(&a, &b)| f(a) * f(b)).sum();
            logits.push(s / tau_proto);
        }
        let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|l| (l - max_logit).exp()).sum();
        let log_denom = denom.ln() + max_logit;
        proto += (log_denom - logits[labels[i]]) * inv_n;
        for c in 0..n_classes {
            let softmax = (logits[c] - log_denom).exp();
            let indicator = if c == labels[i] { 1.0 } else { 0.0 };
            let coeff = (softmax - indicator) / tau_proto * inv_n;
            for d in 0..dim {
                grad_z[i * dim + d] += coeff * f(prototypes.row(c)[d]);
                grad_mu[c * dim + d] += coeff * f(z[i][d]);
            }
        }
    }

    let loss = supcon + proto;
    if !loss.is_finite() {
        return Err(Error::NonFinite("opencon loss".into()));
    }
    Ok(OpenConLossOutput {
        loss,
        supcon,
        proto,
        grad_z: grad_z.iter().map(|&g| t(g)).collect(),
        grad_mu: grad_mu.iter().map(|&g| t(g)).collect(),
    })
}

/// EMA prototype update: for each class with assigned embeddings in the
/// batch, mu_c <- normalize(gamma * mu_c + (1 - gamma) * mean(assigned)).
/// Returns how many classes hit the degenerate zero-mix case (their
/// prototype is kept unchanged).
pub fn update_prototypes<T: Scalar>(
    prototypes: &mut PrototypeSet<T>,
    z: &[Vec<T>],
    labels: &[usize],
    gamma: f64,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput("gamma must lie in [0, 1]".into()));
    }
    let dim = prototypes.dim;
    let n_classes = prototypes.n_classes();
    let mut sums = vec![0.0f64; n_classes * dim];
    let mut counts = vec![0usize; n_classes];
    for (row, &label) in z.iter().zip(labels) {
        counts[label] += 1;
        for (slot, &v) in sums[label * dim..(label + 1) * dim].iter_mut().zip(row.iter()) {
            *slot += f(v);
        }
    }
    let mut degenerate = 0usize;
    for c in 0..n_classes {
        if counts[c] == 0 {
            continue;
        }
        let inv = 1.0 / counts[c] as f64;
        let mixed: Vec<f64> = (0..dim)
            .map(|d| gamma * f(prototypes.row(c)[d]) + (1.0 - gamma) * sums[c * dim + d] * inv)
            .collect();
        let norm = mixed.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-9 {
            degenerate += 1;
            continue;
        }
        for (slot, v) in prototypes.mu[c * dim..(c + 1) * dim].iter_mut().zip(mixed) {
            *slot = t(v / norm);
        }
    }
    Ok(degenerate)
}

/// Re-seed unknown prototypes that received no assignments this epoch.
/// The replacement is the novel-candidate embedding with the lowest
/// maximum similarity to every current prototype (ties break to the
/// lowest instance index). Returns how many prototypes were re-seeded.
fn reseed_dead_prototypes(
    prototypes: &mut PrototypeSet<f32>,
    epoch_counts: &[usize],
    base: &[Vec<f32>],
    splits: &[SplitDecision],
) -> usize {
    let mut reseeded = 0usize;
    for u in 0..prototypes.n_unknown {
        let c = prototypes.n_known + u;
        if epoch_counts[c] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, z) in base.iter().enumerate() {
            if splits[i] != SplitDecision::NovelCandidate {
                continue;
            }
            let mut worst = f64::NEG_INFINITY;
            for p in 0..prototypes.n_classes() {
                if let Ok(s) = cosine_sim(z, prototypes.row(p)) {
                    worst = worst.max(s);
                }
            }
            if best.map_or(true, |(_, b)| worst < b) {
                best = Some((i, worst));
            }
        }
        if let Some((i, _)) = best {
            let dim = prototypes.dim;
            let mut row = base[i].clone();
            l2_normalize(&mut row);
            prototypes.mu[c * dim..(c + 1) * dim].copy_from_slice(&row);
            reseeded += 1;
        }
    }
    reseeded
}

/// Training data source: windows through the (possibly fine-tuned)
/// encoder, or precomputed vectors through an identity encoder.
pub enum DiscoverData<'a> {
    Windows(&'a [Window]),
    Embeddings(&'a [Vec<f32>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub instance: usize,
    pub predicted: usize,
    pub split: SplitDecision,
}

#[derive(Debug)]
pub struct DiscoverOutput {
    /// Fine-tuned (or unchanged frozen) encoder checkpoint; None for the
    /// identity encoder.
    pub checkpoint: Option<Checkpoint>,
    pub prototypes: PrototypeSet<f32>,
    pub assignments: Vec<Assignment>,
    pub loss_curve: Vec<crate::simclr::LossPoint>,
    pub lambda_history: Vec<f64>,
    /// Mean representation subtracted before normalization; apply it to
    /// any embedding scored against these prototypes. All zeros when
    /// centering is off.
    pub center: Vec<f32>,
    /// Count of degenerate prototype updates that were skipped.
    pub warnings: usize,
}

/// Shift by the center and L2-normalize.
pub fn center_and_normalize(v: &[f32], center: &[f32]) -> Vec<f32> {
    let mut out: Vec<f32> = v.iter().zip(center).map(|(&x, &c)| x - c).collect();
    l2_normalize(&mut out);
    out
}

fn mean_vector(vectors: &[Vec<f32>]) -> Vec<f32> {
    let dim = vectors[0].len();
    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        for (slot, &x) in mean.iter_mut().zip(v) {
            *slot += x as f64;
        }
    }
    mean.iter().map(|&x| (x / vectors.len() as f64) as f32).collect()
}

/// Classify one embedding with the trained prototypes: the split routes
/// it, then the permitted prototypes vote by cosine similarity.
pub fn predict_instance<T: Scalar>(
    z: &[T],
    prototypes: &PrototypeSet<T>,
    lambda: f64,
) -> (usize, SplitDecision) {
    let split = ood_split(z, prototypes, lambda);
    let label = match split {
        SplitDecision::KnownCandidate => pseudo_label(z, prototypes, LabelRestriction::KnownOnly),
        _ => pseudo_label(z, prototypes, LabelRestriction::AllClasses),
    };
    (label, split)
}

/// Run pattern discovery. `labels` must align with the data; ground-truth
/// classes of unlabeled instances are deliberately not part of the input.
pub fn discover<E: Executor>(
    pretrained: Option<&Checkpoint>,
    data: DiscoverData<'_>,
    labels: &[LabelState],
    config: &OpenConConfig,
    aug: &AugmentConfig,
    exec: &E,
) -> Result<DiscoverOutput> {
    config.validate()?;
    for l in labels {
        if let LabelState::LabeledKnown(c) = l {
            if *c >= config.n_known {
                return Err(Error::InvalidInput(format!(
                    "labeled class {c} outside 0..{}",
                    config.n_known
                )));
            }
        }
    }
    match data {
        DiscoverData::Embeddings(vectors) => {
            if vectors.len() != labels.len() {
                return Err(Error::ShapeMismatch("labels do not match embeddings".into()));
            }
            discover_identity(vectors, labels, config, exec)
        }
        DiscoverData::Windows(windows) => {
            if windows.len() != labels.len() {
                return Err(Error::ShapeMismatch("labels do not match windows".into()));
            }
            let ckpt = pretrained.ok_or_else(|| {
                Error::InvalidInput("window discovery needs a pretrained checkpoint".into())
            })?;
            discover_windows(ckpt, windows, labels, config, aug, exec)
        }
    }
}

fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(derive_seed(&[seed, epoch, u64::from(b'D')]));
    rng.shuffle(&mut order);
    order.chunks(batch).map(|c| c.to_vec()).collect()
}

/// Per-origin pseudo-label: labeled instances keep their label; unlabeled
/// candidates take the prototype argmax of their augmented views'
/// normalized mean, restricted by the split decision.
fn origin_label<T: Scalar>(
    label: LabelState,
    split: SplitDecision,
    views: &[Vec<T>; 2],
    prototypes: &PrototypeSet<T>,
) -> usize {
    match label {
        LabelState::LabeledKnown(c) => c,
        LabelState::Unlabeled => {
            let mut mean: Vec<T> = views[0]
                .iter()
                .zip(&views[1])
                .map(|(&a, &b)| t((f(a) + f(b)) * 0.5))
                .collect();
            l2_normalize(&mut mean);
            let restriction = match split {
                SplitDecision::NovelCandidate => LabelRestriction::UnknownOnly,
                _ => LabelRestriction::KnownOnly,
            };
            pseudo_label(&mean, prototypes, restriction)
        }
    }
}

fn discover_identity<E: Executor>(
    vectors: &[Vec<f32>],
    labels: &[LabelState],
    config: &OpenConConfig,
    exec: &E,
) -> Result<DiscoverOutput> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::InvalidInput("no instances to discover over".into()));
    }
    let dim = vectors[0].len();
    let center = if config.center_embeddings {
        mean_vector(vectors)
    } else {
        vec![0.0f32; dim]
    };
    let base: Vec<Vec<f32>> = vectors.iter().map(|v| center_and_normalize(v, &center)).collect();

    let mut proto_rng = Rng::new(derive_seed(&[config.seed, u64::from(b'P')]));
    let mut prototypes = init_prototypes(&base, labels, config, &mut proto_rng)?;

    let mut loss_curve = Vec::new();
    let mut lambda_history = Vec::new();
    let mut warnings = 0usize;
    for epoch in 0..config.epochs {
        let lambda = calibrate_lambda(&base, labels, &prototypes, config.lambda_percentile)?;
        lambda_history.push(lambda);
        let splits: Vec<SplitDecision> = base
            .iter()
            .zip(labels)
            .map(|(z, l)| match l {
                LabelState::LabeledKnown(_) => SplitDecision::Labeled,
                LabelState::Unlabeled => ood_split(z, &prototypes, lambda),
            })
            .collect();

        let mut epoch_counts = vec![0usize; config.n_classes()];
        for (step, batch) in
            epoch_batches(n, config.batch, config.seed, epoch as u64).into_iter().enumerate()
        {
            let noise = config.embed_view_noise;
            let seed = config.seed;
            let views: Vec<[Vec<f32>; 2]> = exec.map(batch.len(), |bi| {
                let i = batch[bi];
                let make = |view: u64| {
                    let mut rng = augment::view_rng(seed, epoch as u64, i as u64, view);
                    let mut v: Vec<f32> =
                        base[i].iter().map(|&x| x + (rng.gaussian() * noise) as f32).collect();
                    l2_normalize(&mut v);
                    v
                };
                [make(0), make(1)]
            });

            let mut rows: Vec<Vec<f32>> = Vec::with_capacity(batch.len() * 2);
            let mut row_labels = Vec::with_capacity(batch.len() * 2);
            let mut batch_base: Vec<Vec<f32>> = Vec::with_capacity(batch.len());
            let mut batch_labels = Vec::with_capacity(batch.len());
            for (bi, &i) in batch.iter().enumerate() {
                let label = origin_label(labels[i], splits[i], &views[bi], &prototypes);
                rows.push(views[bi][0].clone());
                rows.push(views[bi][1].clone());
                row_labels.push(label);
                row_labels.push(label);
                // EMA anchoring: known prototypes follow labeled
                // instances only; pseudo-labeled known-candidates would
                // feed split mistakes back into the threshold. Novel
                // candidates are what the unknown prototypes exist for.
                if matches!(labels[i], LabelState::LabeledKnown(_))
                    || splits[i] == SplitDecision::NovelCandidate
                {
                    batch_base.push(base[i].clone());
                    batch_labels.push(label);
                }
            }
            for &l in &row_labels {
                epoch_counts[l] += 1;
            }
            let out =
                opencon_loss(&rows, &row_labels, &prototypes, config.tau_con, config.tau_proto)?;
            loss_curve.push(crate::simclr::LossPoint { epoch, step, loss: out.loss });
            // The EMA tracks un-augmented embeddings: the threshold and
            // the split are calibrated on those, and heavily augmented
            // views would drag the prototypes off that manifold.
            warnings +=
                update_prototypes(&mut prototypes, &batch_base, &batch_labels, config.gamma)?;
        }
        if config.reseed_dead {
            reseed_dead_prototypes(&mut prototypes, &epoch_counts, &base, &splits);
        }
    }

    let lambda = calibrate_lambda(&base, labels, &prototypes, config.lambda_percentile)?;
    lambda_history.push(lambda);
    let assignments = final_assignments(&base, labels, &prototypes, lambda);
    Ok(DiscoverOutput {
        checkpoint: None,
        prototypes,
        assignments,
        loss_curve,
        lambda_history,
        center,
        warnings,
    })
}

fn final_assignments(
    base: &[Vec<f32>],
    labels: &[LabelState],
    prototypes: &PrototypeSet<f32>,
    lambda: f64,
) -> Vec<Assignment> {
    base.iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (z, l))| match l {
            LabelState::LabeledKnown(_) => Assignment {
                instance: i,
                predicted: pseudo_label(z, prototypes, LabelRestriction::KnownOnly),
                split: SplitDecision::Labeled,
            },
            LabelState::Unlabeled => {
                let (predicted, split) = predict_instance(z, prototypes, lambda);
                Assignment { instance: i, predicted, split }
            }
        })
        .collect()
}

fn discover_windows<E: Executor>(
    pretrained: &Checkpoint,
    windows: &[Window],
    labels: &[LabelState],
    config: &OpenConConfig,
    aug: &AugmentConfig,
    exec: &E,
) -> Result<DiscoverOutput> {
    aug.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidInput("no instances to discover over".into()));
    }
    let descriptor = pretrained.descriptor()?;
    let mut model = pretrained.model()?;
    let mut opt = Optimizer::new(config.optimizer, &model);
    let feat = descriptor.features.clone();
    let fb =
        SparseFilterbank::from_dense(&features::mel_filterbank(descriptor.sample_rate, &feat)?);
    let colormap = features::default_colormap();
    let n = windows.len();

    // Un-augmented inputs are fixed; embeddings are recomputed whenever
    // the encoder changes.
    let base_inputs: Vec<Vec<f32>> = {
        let results = exec.map(n, |i| {
            crate::simclr::window_to_input(&windows[i], descriptor.mode, &feat, &fb, &colormap)
        });
        results.into_iter().collect::<Result<_>>()?
    };
    // IA base featurization is augmentation-independent; cache it.
    let base_images = match descriptor.mode {
        crate::augment::AugmentMode::Ia => {
            let rendered = exec.map(n, |i| {
                let spec = features::log_mel_with(
                    &windows[i].samples,
                    descriptor.sample_rate,
                    &feat,
                    &fb,
                )?;
                features::render_image(&spec, &colormap)
            });
            Some(rendered.into_iter().collect::<Result<Vec<_>>>()?)
        }
        crate::augment::AugmentMode::Aa => None,
    };
    let encode_raw = |model: &Model<f32>, exec: &E| -> Result<Vec<Vec<f32>>> {
        let results = exec.map(n, |i| {
            let (h, _) = model.encode_sample(&base_inputs[i])?;
            Ok::<Vec<f32>, Error>(h)
        });
        results.into_iter().collect()
    };
    let dim = model.config.repr_dim();
    // (center, centered+normalized embeddings); the center is treated as
    // a constant within an epoch.
    let rebase = |raw: &[Vec<f32>]| -> (Vec<f32>, Vec<Vec<f32>>) {
        let center = if config.center_embeddings {
            mean_vector(raw)
        } else {
            vec![0.0f32; dim]
        };
        let base = raw.iter().map(|h| center_and_normalize(h, &center)).collect();
        (center, base)
    };

    let (mut center, mut base) = rebase(&encode_raw(&model, exec)?);
    let mut proto_rng = Rng::new(derive_seed(&[config.seed, u64::from(b'P')]));
    let mut prototypes = init_prototypes(&base, labels, config, &mut proto_rng)?;

    let mut loss_curve = Vec::new();
    let mut lambda_history = Vec::new();
    let mut warnings = 0usize;
    for epoch in 0..config.epochs {
        if config.finetune && epoch > 0 {
            (center, base) = rebase(&encode_raw(&model, exec)?);
        }
        let lambda = calibrate_lambda(&base, labels, &prototypes, config.lambda_percentile)?;
        lambda_history.push(lambda);
        let splits: Vec<SplitDecision> = base
            .iter()
            .zip(labels)
            .map(|(z, l)| match l {
                LabelState::LabeledKnown(_) => SplitDecision::Labeled,
                LabelState::Unlabeled => ood_split(z, &prototypes, lambda),
            })
            .collect();

        let mut epoch_counts = vec![0usize; config.n_classes()];
        for (step, batch) in
            epoch_batches(n, config.batch, config.seed, epoch as u64).into_iter().enumerate()
        {
            let model_ref = &model;
            let seed = config.seed;
            // Two augmented views per instance: augment, featurize,
            // encode, normalize.
            let center_ref = &center;
            let base_images_ref = base_images.as_deref();
            let forwards = exec.map(batch.len() * 2, |slot| {
                let bi = slot / 2;
                let view = (slot % 2) as u64;
                let i = batch[bi];
                let mut rng = augment::view_rng(seed, epoch as u64, i as u64, view);
                let viewed = match base_images_ref {
                    Some(images) => crate::augment::ViewKind::Image(augment::augment_image(
                        &images[i], aug, &mut rng,
                    )),
                    None => augment::make_view(&windows[i], aug, &feat, &fb, &colormap, &mut rng)?,
                };
                let input = view_to_input(&viewed);
                let (h, cache) = model_ref.encode_sample(&input)?;
                let mut z: Vec<f32> =
                    h.iter().zip(center_ref).map(|(&x, &c)| x - c).collect();
                let norm = l2_normalize(&mut z);
                Ok::<_, Error>((z, norm, cache))
            });

            let mut rows: Vec<Vec<f32>> = Vec::with_capacity(batch.len() * 2);
            let mut norms = Vec::with_capacity(batch.len() * 2);
            let mut caches = Vec::with_capacity(batch.len() * 2);
            for r in forwards {
                let (z, norm, cache) = r?;
                rows.push(z);
                norms.push(norm);
                caches.push(cache);
            }
            let mut row_labels = Vec::with_capacity(batch.len() * 2);
            let mut batch_base: Vec<Vec<f32>> = Vec::with_capacity(batch.len());
            let mut batch_labels = Vec::with_capacity(batch.len());
            for (bi, &i) in batch.iter().enumerate() {
                let views = [rows[bi * 2].clone(), rows[bi * 2 + 1].clone()];
                let label = origin_label(labels[i], splits[i], &views, &prototypes);
                row_labels.push(label);
                row_labels.push(label);
                // Same EMA anchoring rule as the identity path.
                if matches!(labels[i], LabelState::LabeledKnown(_))
                    || splits[i] == SplitDecision::NovelCandidate
                {
                    batch_base.push(base[i].clone());
                    batch_labels.push(label);
                }
            }
            for &l in &row_labels {
                epoch_counts[l] += 1;
            }

            let out =
                opencon_loss(&rows, &row_labels, &prototypes, config.tau_con, config.tau_proto)?;
            loss_curve.push(crate::simclr::LossPoint { epoch, step, loss: out.loss });

            if config.finetune {
                // d(h - center)/dh is the identity (the center is a
                // constant within the epoch), so the shift adds nothing
                // to the chain.
                let dim = prototypes.dim;
                let grad_rows = &out.grad_z;
                let partials = exec.map(caches.len(), |i| {
                    let grad_h = l2_normalize_backward(
                        &rows[i],
                        norms[i],
                        &grad_rows[i * dim..(i + 1) * dim],
                    );
                    model_ref.backward_encoder(&caches[i], &grad_h)
                });
                let mut total = ModelGrads::zeros_like(&model);
                for part in &partials {
                    total.add(part);
                }
                total.check_finite()?;
                opt.step(&mut model, &total)?;
            }
            // EMA on un-augmented embeddings; see the identity-path note.
            warnings +=
                update_prototypes(&mut prototypes, &batch_base, &batch_labels, config.gamma)?;
        }
        if config.reseed_dead {
            reseed_dead_prototypes(&mut prototypes, &epoch_counts, &base, &splits);
        }
    }

    (center, base) = rebase(&encode_raw(&model, exec)?);
    let lambda = calibrate_lambda(&base, labels, &prototypes, config.lambda_percentile)?;
    lambda_history.push(lambda);
    let assignments = final_assignments(&base, labels, &prototypes, lambda);
    let checkpoint = build_checkpoint(&descriptor, &model, &opt, &proto_rng);
    Ok(DiscoverOutput {
        checkpoint: Some(checkpoint),
        prototypes,
        assignments,
        loss_curve,
        lambda_history,
        center,
        warnings,
    })
}
