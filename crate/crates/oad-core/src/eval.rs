//! Experiment protocol: user-exclusive splits, label masking, the
//! n_models x n_subsets trial matrix, Hungarian matching for novel-class
//! scoring, and per-class accuracy aggregation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::nn::checkpoint::Checkpoint;
use crate::opencon::{discover, predict_instance, DiscoverData, LabelState, OpenConConfig};
use crate::rng::{derive_seed, Rng};
use crate::segment::{ClassLabel, Window};
use crate::simclr;
use crate::stats;

/// One dataset instance: a path (or synthetic id), its class, and the
/// contributing user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub class: ClassLabel,
    pub user_id: String,
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.user_id.is_empty() {
                return Err(Error::InvalidInput(format!("row {i} ({}) has no user_id", row.path)));
            }
            if let Some(prev) = seen.insert(row.path.clone(), i) {
                return Err(Error::InvalidInput(format!(
                    "duplicate path {} at rows {prev} and {i}",
                    row.path
                )));
            }
        }
        Ok(())
    }
}

/// Stable class indexing for a run: known classes first, then unknown,
/// each in `ClassLabel` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub known: Vec<ClassLabel>,
    pub unknown: Vec<ClassLabel>,
}

impl ClassMap {
    pub fn from_rows(rows: &[ManifestRow]) -> Self {
        let mut known = Vec::new();
        let mut unknown = Vec::new();
        for row in rows {
            let bucket = if row.class.is_known() { &mut known } else { &mut unknown };
            if !bucket.contains(&row.class) {
                bucket.push(row.class.clone());
            }
        }
        known.sort();
        unknown.sort();
        ClassMap { known, unknown }
    }

    pub fn n_known(&self) -> usize {
        self.known.len()
    }

    pub fn n_unknown(&self) -> usize {
        self.unknown.len()
    }

    pub fn n_classes(&self) -> usize {
        self.known.len() + self.unknown.len()
    }

    pub fn index_of(&self, class: &ClassLabel) -> Option<usize> {
        if let Some(i) = self.known.iter().position(|c| c == class) {
            return Some(i);
        }
        self.unknown.iter().position(|c| c == class).map(|i| i + self.known.len())
    }

    pub fn name_of(&self, index: usize) -> Option<&ClassLabel> {
        if index < self.known.len() {
            self.known.get(index)
        } else {
            self.unknown.get(index - self.known.len())
        }
    }
}

/// Split a manifest into train/test with user exclusivity: every instance
/// of a user lands on exactly one side. Among seeded candidate splits,
/// the one whose per-class test fractions deviate least from the target
/// wins.
pub fn user_split(
    manifest: &Manifest,
    test_fraction: f64,
    seed: u64,
) -> Result<(Manifest, Manifest)> {
    manifest.validate()?;
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidInput("test_fraction must lie in (0, 1)".into()));
    }
    // Per-class user sets; a class whose instances all come from one user
    // cannot be split.
    let mut class_users: BTreeMap<&ClassLabel, Vec<&str>> = BTreeMap::new();
    for row in &manifest.rows {
        let users = class_users.entry(&row.class).or_default();
        if !users.contains(&row.user_id.as_str()) {
            users.push(&row.user_id);
        }
    }
    for (class, users) in &class_users {
        if users.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "class {} has all instances from one user; cannot split",
                class.as_str()
            )));
        }
    }

    // Users grouped by primary class (class of their first instance), so
    // test selection can be stratified.
    let mut user_primary: BTreeMap<&str, &ClassLabel> = BTreeMap::new();
    for row in &manifest.rows {
        user_primary.entry(&row.user_id).or_insert(&row.class);
    }
    let mut users_by_class: BTreeMap<&ClassLabel, Vec<&str>> = BTreeMap::new();
    for row in &manifest.rows {
        let users = users_by_class.entry(user_primary[row.user_id.as_str()]).or_default();
        if !users.contains(&row.user_id.as_str()) {
            users.push(&row.user_id);
        }
    }

    let mut best: Option<(f64, Vec<&str>)> = None;
    for attempt in 0..32u64 {
        // Stratified greedy: per class, take shuffled users until that
        // class's test instance count reaches its target.
        let mut test_users: Vec<&str> = Vec::new();
        for (ci, (class, users)) in users_by_class.iter().enumerate() {
            let class_total =
                manifest.rows.iter().filter(|r| user_primary[r.user_id.as_str()] == *class).count();
            let target = (test_fraction * class_total as f64).round().max(1.0) as usize;
            let mut shuffled = users.clone();
            Rng::new(derive_seed(&[seed, attempt, ci as u64, u64::from(b'U')]))
                .shuffle(&mut shuffled);
            let mut count = 0usize;
            for user in shuffled {
                if count >= target {
                    break;
                }
                count += manifest.rows.iter().filter(|r| r.user_id == user).count();
                test_users.push(user);
            }
        }
        // Objective: worst per-class deviation from the target fraction.
        let mut worst = 0.0f64;
        for (class, _) in &class_users {
            let class_rows: Vec<&ManifestRow> =
                manifest.rows.iter().filter(|r| &&r.class == class).collect();
            let in_test =
                class_rows.iter().filter(|r| test_users.contains(&r.user_id.as_str())).count();
            let frac = in_test as f64 / class_rows.len() as f64;
            worst = worst.max((frac - test_fraction).abs());
            // A class entirely on one side is useless for evaluation.
            if in_test == 0 || in_test == class_rows.len() {
                worst = worst.max(1.0);
            }
        }
        if best.as_ref().map_or(true, |(b, _)| worst < *b) {
            best = Some((worst, test_users));
        }
    }
    let (_, test_users) = best.unwrap();

    let mut train = Manifest::default();
    let mut test = Manifest::default();
    for row in &manifest.rows {
        if test_users.contains(&row.user_id.as_str()) {
            test.rows.push(row.clone());
        } else {
            train.rows.push(row.clone());
        }
    }
    Ok((train, test))
}

/// Mask training labels: exactly round(label_fraction * n_c) instances of
/// each known class keep their label; every unknown-class instance is
/// unlabeled.
pub fn mask_labels(
    rows: &[ManifestRow],
    class_map: &ClassMap,
    label_fraction: f64,
    seed: u64,
) -> Result<Vec<LabelState>> {
    if !(0.0..=1.0).contains(&label_fraction) {
        return Err(Error::InvalidInput("label_fraction must lie in [0, 1]".into()));
    }
    let mut states = vec![LabelState::Unlabeled; rows.len()];
    for (k, class) in class_map.known.iter().enumerate() {
        let mut indices: Vec<usize> =
            rows.iter().enumerate().filter(|(_, r)| &r.class == class).map(|(i, _)| i).collect();
        let want = (label_fraction * indices.len() as f64).round() as usize;
        Rng::new(derive_seed(&[seed, k as u64, u64::from(b'L')])).shuffle(&mut indices);
        for &i in indices.iter().take(want) {
            states[i] = LabelState::LabeledKnown(k);
        }
    }
    Ok(states)
}

/// Maximum-total-count assignment of clusters to classes (Hungarian
/// algorithm, O(n^3)). Input: counts[cluster][class]. Returns, per
/// cluster, the matched class (None for padding when the matrix is
/// rectangular) and the total matched count.
pub fn hungarian_match(counts: &[Vec<usize>]) -> Result<(Vec<Option<usize>>, usize)> {
    let rows = counts.len();
    if rows == 0 || counts[0].is_empty() {
        return Err(Error::InvalidInput("empty assignment matrix".into()));
    }
    let cols = counts[0].len();
    if counts.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch("ragged assignment matrix".into()));
    }
    let n = rows.max(cols);
    let peak = counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    // Minimize cost = peak - count over a padded square matrix.
    let cost = |r: usize, c: usize| -> i64 {
        if r < rows && c < cols {
            peak - counts[r][c] as i64
        } else {
            peak
        }
    };

    // Standard potentials formulation; indices are 1-based internally.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut match_col = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        match_col[0] = r;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; rows];
    let mut total = 0usize;
    for j in 1..=n {
        let r = match_col[j];
        if r >= 1 && r - 1 < rows && j - 1 < cols {
            assignment[r - 1] = Some(j - 1);
            total += counts[r - 1][j - 1];
        }
    }
    Ok((assignment, total))
}

/// Accuracy of one class, with the labeled/unlabeled breakdown when the
/// training label states are known.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub class_index: usize,
    pub accuracy: f64,
    pub n_instances: usize,
    pub labeled: Option<(f64, usize)>,
    pub unlabeled: Option<(f64, usize)>,
}

/// Score predictions against ground truth. Known classes are scored
/// directly; novel clusters are first matched one-to-one onto the true
/// novel classes by [`hungarian_match`]. Classes without instances are
/// omitted (absent, not zero).
pub fn per_class_accuracy(
    predictions: &[usize],
    truths: &[usize],
    label_states: Option<&[LabelState]>,
    n_known: usize,
    n_unknown: usize,
) -> Result<Vec<ClassAccuracy>> {
    if predictions.len() != truths.len() {
        return Err(Error::ShapeMismatch("predictions do not match truths".into()));
    }
    let n_total = n_known + n_unknown;
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= n_total || t >= n_total {
            return Err(Error::InvalidInput(format!(
                "class index out of range: pred {p} true {t}"
            )));
        }
    }

    // Map novel clusters onto true novel classes.
    let cluster_to_class: Vec<Option<usize>> = if n_unknown > 0 {
        let mut counts = vec![vec![0usize; n_unknown]; n_unknown];
        for (&p, &t) in predictions.iter().zip(truths) {
            if p >= n_known && t >= n_known {
                counts[p - n_known][t - n_known] += 1;
            }
        }
        hungarian_match(&counts)?.0
    } else {
        Vec::new()
    };

    // An instance is correct if its (matched) prediction equals its truth.
    let correct = |p: usize, t: usize| -> bool {
        if p < n_known {
            p == t
        } else {
            match cluster_to_class[p - n_known] {
                Some(c) => c + n_known == t,
                None => false,
            }
        }
    };

    let mut out = Vec::new();
    for class in 0..n_total {
        let idx: Vec<usize> = (0..truths.len()).filter(|&i| truths[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        let hits = idx.iter().filter(|&&i| correct(predictions[i], truths[i])).count();
        let sub = |filter: &dyn Fn(usize) -> bool| -> Option<(f64, usize)> {
            let members: Vec<usize> = idx.iter().copied().filter(|&i| filter(i)).collect();
            if members.is_empty() {
                return None;
            }
            let h = members.iter().filter(|&&i| correct(predictions[i], truths[i])).count();
            Some((h as f64 / members.len() as f64, members.len()))
        };
        let (labeled, unlabeled) = match label_states {
            Some(states) => (
                sub(&|i| matches!(states[i], LabelState::LabeledKnown(_))),
                sub(&|i| matches!(states[i], LabelState::Unlabeled)),
            ),
            None => (None, None),
        };
        out.push(ClassAccuracy {
            class_index: class,
            accuracy: hits as f64 / idx.len() as f64,
            n_instances: idx.len(),
            labeled,
            unlabeled,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub model_seed: u64,
    pub test_subset: usize,
    pub class_index: usize,
    pub accuracy: f64,
    pub n_instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub class_index: usize,
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub class_map: ClassMap,
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub n_models: usize,
    pub n_subsets: usize,
    pub test_fraction: f64,
    pub label_fraction: f64,
    /// Subsets are disjoint user partitions by default; this switches to
    /// per-subset resampling from the full test-user pool.
    pub resample_subsets: bool,
    pub master_seed: u64,
    pub opencon: OpenConConfig,
    pub augment: AugmentConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            n_models: 5,
            n_subsets: 10,
            test_fraction: 0.2,
            label_fraction: 0.9,
            resample_subsets: false,
            master_seed: 0,
            opencon: OpenConConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

/// Instance payloads aligned with the manifest rows.
pub enum TrialData<'a> {
    Windows(&'a [Window]),
    Embeddings(&'a [Vec<f32>]),
}

/// User-respecting subset partition: users of each class are shuffled and
/// dealt round-robin, so every subset sees every class whenever a class
/// has at least n_subsets test users.
fn partition_test_users(
    test: &Manifest,
    n_subsets: usize,
    seed: u64,
    resample: bool,
) -> Vec<Vec<usize>> {
    // User -> primary class (class of their first instance).
    let mut user_class: BTreeMap<&str, &ClassLabel> = BTreeMap::new();
    for row in &test.rows {
        user_class.entry(&row.user_id).or_insert(&row.class);
    }
    let mut by_class: BTreeMap<&ClassLabel, Vec<&str>> = BTreeMap::new();
    for (user, class) in &user_class {
        by_class.entry(class).or_default().push(user);
    }

    let mut subsets: Vec<Vec<&str>> = vec![Vec::new(); n_subsets];
    if resample {
        for (ci, (_, users)) in by_class.iter().enumerate() {
            let per = users.len().div_ceil(n_subsets).max(1);
            for (s, subset) in subsets.iter_mut().enumerate() {
                let mut pool = users.clone();
                Rng::new(derive_seed(&[seed, ci as u64, s as u64, u64::from(b'R')]))
                    .shuffle(&mut pool);
                subset.extend(pool.into_iter().take(per));
            }
        }
    } else {
        for (ci, (_, users)) in by_class.iter().enumerate() {
            let mut pool = users.clone();
            Rng::new(derive_seed(&[seed, ci as u64, u64::from(b'T')])).shuffle(&mut pool);
            for (k, user) in pool.into_iter().enumerate() {
                subsets[k % n_subsets].push(user);
            }
        }
    }

    subsets
        .into_iter()
        .map(|users| {
            test.rows
                .iter()
                .enumerate()
                .filter(|(_, r)| users.contains(&r.user_id.as_str()))
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// The full protocol: train `n_models` discovery models with distinct
/// derived seeds, score each on `n_subsets` user-respecting test subsets,
/// and aggregate per-class statistics.
pub fn run_trials<E: Executor>(
    pretrained: Option<&Checkpoint>,
    manifest: &Manifest,
    data: TrialData<'_>,
    config: &TrialConfig,
    exec: &E,
) -> Result<TrialReport> {
    manifest.validate()?;
    let n = manifest.rows.len();
    let data_len = match &data {
        TrialData::Windows(w) => w.len(),
        TrialData::Embeddings(e) => e.len(),
    };
    if data_len != n {
        return Err(Error::ShapeMismatch(format!(
            "manifest has {n} rows but {data_len} payloads supplied"
        )));
    }
    let class_map = ClassMap::from_rows(&manifest.rows);
    if class_map.n_known() == 0 {
        return Err(Error::InvalidInput("manifest has no known-class instances".into()));
    }

    // One user-exclusive train/test split per protocol run.
    let (train, test) = user_split(manifest, config.test_fraction, config.master_seed)?;
    let index_of = |path: &str| manifest.rows.iter().position(|m| m.path == path).unwrap();
    let train_idx: Vec<usize> = train.rows.iter().map(|r| index_of(&r.path)).collect();
    let test_idx: Vec<usize> = test.rows.iter().map(|r| index_of(&r.path)).collect();

    let mut opencon = config.opencon.clone();
    opencon.n_known = class_map.n_known();
    opencon.n_unknown = class_map.n_unknown();

    let mut rows = Vec::new();
    for m in 0..config.n_models {
        let model_seed = derive_seed(&[config.master_seed, m as u64, u64::from(b'M')]);
        let labels = mask_labels(&train.rows, &class_map, config.label_fraction, model_seed)?;
        let mut cfg = opencon.clone();
        cfg.seed = model_seed;

        let (output, test_embeddings): (crate::opencon::DiscoverOutput, Vec<Vec<f32>>) =
            match &data {
                TrialData::Windows(windows) => {
                    let train_windows: Vec<Window> =
                        train_idx.iter().map(|&i| windows[i].clone()).collect();
                    let out = discover(
                        pretrained,
                        DiscoverData::Windows(&train_windows),
                        &labels,
                        &cfg,
                        &config.augment,
                        exec,
                    )?;
                    let ckpt = out.checkpoint.as_ref().unwrap();
                    let model = ckpt.model()?;
                    let desc = ckpt.descriptor()?;
                    let test_windows: Vec<Window> =
                        test_idx.iter().map(|&i| windows[i].clone()).collect();
                    let h = simclr::encode_dataset(&model, &desc, &test_windows, exec)?;
                    let z = h
                        .iter()
                        .map(|v| crate::opencon::center_and_normalize(v, &out.center))
                        .collect();
                    (out, z)
                }
                TrialData::Embeddings(vectors) => {
                    let train_vecs: Vec<Vec<f32>> =
                        train_idx.iter().map(|&i| vectors[i].clone()).collect();
                    let out = discover(
                        None,
                        DiscoverData::Embeddings(&train_vecs),
                        &labels,
                        &cfg,
                        &config.augment,
                        exec,
                    )?;
                    let z = test_idx
                        .iter()
                        .map(|&i| crate::opencon::center_and_normalize(&vectors[i], &out.center))
                        .collect();
                    (out, z)
                }
            };

        let lambda = *output.lambda_history.last().unwrap();
        let predictions: Vec<usize> = test_embeddings
            .iter()
            .map(|z| predict_instance(z, &output.prototypes, lambda).0)
            .collect();
        let truths: Vec<usize> = test_idx
            .iter()
            .map(|&i| class_map.index_of(&manifest.rows[i].class).unwrap())
            .collect();

        let subsets =
            partition_test_users(&test, config.n_subsets, model_seed, config.resample_subsets);
        for (s, subset) in subsets.iter().enumerate() {
            if subset.is_empty() {
                continue;
            }
            let preds: Vec<usize> = subset.iter().map(|&i| predictions[i]).collect();
            let subset_truths: Vec<usize> = subset.iter().map(|&i| truths[i]).collect();
            let scores = per_class_accuracy(
                &preds,
                &subset_truths,
                None,
                class_map.n_known(),
                class_map.n_unknown(),
            )?;
            for score in scores {
                rows.push(TrialRow {
                    model_seed,
                    test_subset: s,
                    class_index: score.class_index,
                    accuracy: score.accuracy,
                    n_instances: score.n_instances,
                });
            }
        }
    }

    let summary = summarize(&rows, class_map.n_classes());
    Ok(TrialReport { class_map, rows, summary })
}

/// Per-class mean/std/quartiles over trial rows.
pub fn summarize(rows: &[TrialRow], n_classes: usize) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for class in 0..n_classes {
        let acc: Vec<f64> =
            rows.iter().filter(|r| r.class_index == class).map(|r| r.accuracy).collect();
        if acc.is_empty() {
            continue;
        }
        out.push(SummaryRow {
            class_index: class,
            mean: stats::mean(&acc),
            std: stats::std_dev(&acc),
            q1: stats::percentile(&acc, 25.0).unwrap(),
            median: stats::percentile(&acc, 50.0).unwrap(),
            q3: stats::percentile(&acc, 75.0).unwrap(),
        });
    }
    out
}
