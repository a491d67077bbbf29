//! The in-memory dataset representation plus standardization, splitting,
//! and minibatching.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// Mean and standard deviation used to standardize one column.
/// Untouched columns carry the identity transform (mean 0, std 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    pub const IDENTITY: ColumnStats = ColumnStats {
        mean: 0.0,
        std: 1.0,
    };
}

/// Per-column standardization statistics; stored so the transform is
/// invertible and derivatives can be reported in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// One entry per alternative attribute, pooled over alternatives.
    pub attr: Vec<ColumnStats>,
    /// One entry per shared characteristic.
    pub shared: Vec<ColumnStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub attr_names: Vec<String>,
    pub attr_units: Vec<String>,
    pub attr_kinds: Vec<ColumnKind>,
    pub shared_names: Vec<String>,
    pub shared_kinds: Vec<ColumnKind>,
    /// Statistics of the standardization applied to this dataset, if any.
    pub standardization: Option<Standardization>,
    /// Rows dropped during ingestion because of missing cells.
    pub dropped_rows: usize,
}

impl DatasetMeta {
    pub fn unnamed(k_x: usize, k_q: usize) -> Self {
        DatasetMeta {
            attr_names: (0..k_x).map(|k| format!("x{}", k + 1)).collect(),
            attr_units: vec![String::new(); k_x],
            attr_kinds: vec![ColumnKind::Continuous; k_x],
            shared_names: (0..k_q).map(|k| format!("q{}", k + 1)).collect(),
            shared_kinds: vec![ColumnKind::Binary; k_q],
            standardization: None,
            dropped_rows: 0,
        }
    }
}

/// N choice observations over J alternatives with K_x alternative attributes
/// and K_q shared individual characteristics.
///
/// `x` is stored row-major as `[observation][alternative][attribute]`.
/// There are no missing values: ingestion drops incomplete rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiceDataset {
    pub n: usize,
    pub j: usize,
    pub k_x: usize,
    pub k_q: usize,
    x: Vec<f64>,
    q: Vec<f64>,
    y: Vec<usize>,
    pub meta: DatasetMeta,
}

impl ChoiceDataset {
    pub fn new(
        j: usize,
        k_x: usize,
        k_q: usize,
        x: Vec<f64>,
        q: Vec<f64>,
        y: Vec<usize>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let n = y.len();
        if x.len() != n * j * k_x || q.len() != n * k_q {
            return Err(Error::Dataset(format!(
                "inconsistent extents: n={}, j={}, k_x={}, k_q={}, |x|={}, |q|={}",
                n,
                j,
                k_x,
                k_q,
                x.len(),
                q.len()
            )));
        }
        if y.iter().any(|&c| c >= j) {
            return Err(Error::Dataset("choice index out of range".into()));
        }
        Ok(ChoiceDataset {
            n,
            j,
            k_x,
            k_q,
            x,
            q,
            y,
            meta,
        })
    }

    #[inline]
    pub fn x_at(&self, i: usize, alt: usize, attr: usize) -> f64 {
        self.x[(i * self.j + alt) * self.k_x + attr]
    }

    #[inline]
    pub fn q_at(&self, i: usize, k: usize) -> f64 {
        self.q[i * self.k_q + k]
    }

    pub fn choices(&self) -> &[usize] {
        &self.y
    }

    /// Attribute matrix of one alternative for the given observations
    /// (`len(idx) x K_x`).
    pub fn x_alt_matrix(&self, idx: &[usize], alt: usize) -> Array {
        let mut data = Vec::with_capacity(idx.len() * self.k_x);
        for &i in idx {
            let base = (i * self.j + alt) * self.k_x;
            data.extend_from_slice(&self.x[base..base + self.k_x]);
        }
        Array::from_vec(vec![idx.len(), self.k_x], data).expect("extent bookkeeping")
    }

    /// Shared-characteristic matrix for the given observations (`len(idx) x K_q`).
    pub fn q_matrix(&self, idx: &[usize]) -> Array {
        let mut data = Vec::with_capacity(idx.len() * self.k_q);
        for &i in idx {
            data.extend_from_slice(&self.q[i * self.k_q..(i + 1) * self.k_q]);
        }
        Array::from_vec(vec![idx.len(), self.k_q], data).expect("extent bookkeeping")
    }

    pub fn y_vec(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.y[i]).collect()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    /// New dataset holding only the given observations, metadata preserved.
    pub fn subset(&self, idx: &[usize]) -> ChoiceDataset {
        let mut x = Vec::with_capacity(idx.len() * self.j * self.k_x);
        let mut q = Vec::with_capacity(idx.len() * self.k_q);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            let xb = i * self.j * self.k_x;
            x.extend_from_slice(&self.x[xb..xb + self.j * self.k_x]);
            q.extend_from_slice(&self.q[i * self.k_q..(i + 1) * self.k_q]);
            y.push(self.y[i]);
        }
        ChoiceDataset {
            n: idx.len(),
            j: self.j,
            k_x: self.k_x,
            k_q: self.k_q,
            x,
            q,
            y,
            meta: self.meta.clone(),
        }
    }

    pub fn x_raw(&self) -> &[f64] {
        &self.x
    }

    pub fn q_raw(&self) -> &[f64] {
        &self.q
    }
}

/// Standardize continuous columns to zero mean / unit (sample) variance
/// using this dataset's own statistics. Call on the training split only and
/// carry the stats to the test split with [`apply_standardization`].
///
/// Alternative attributes are pooled over alternatives (the attribute
/// coefficients are shared across alternatives, so per-alternative scaling
/// would distort them); binary columns pass through untouched.
pub fn standardize(ds: &ChoiceDataset) -> Result<(ChoiceDataset, Standardization)> {
    let mut attr = Vec::with_capacity(ds.k_x);
    for k in 0..ds.k_x {
        if ds.meta.attr_kinds[k] == ColumnKind::Binary {
            attr.push(ColumnStats::IDENTITY);
            continue;
        }
        let vals: Vec<f64> = (0..ds.n)
            .flat_map(|i| (0..ds.j).map(move |a| ds.x_at(i, a, k)))
            .collect();
        attr.push(column_stats(&vals, &ds.meta.attr_names[k])?);
    }
    let mut shared = Vec::with_capacity(ds.k_q);
    for k in 0..ds.k_q {
        if ds.meta.shared_kinds[k] == ColumnKind::Binary {
            shared.push(ColumnStats::IDENTITY);
            continue;
        }
        let vals: Vec<f64> = (0..ds.n).map(|i| ds.q_at(i, k)).collect();
        shared.push(column_stats(&vals, &ds.meta.shared_names[k])?);
    }
    let stats = Standardization { attr, shared };
    Ok((apply_standardization(ds, &stats), stats))
}

fn column_stats(vals: &[f64], name: &str) -> Result<ColumnStats> {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::Dataset(format!(
            "continuous column `{}` has zero variance",
            name
        )));
    }
    Ok(ColumnStats {
        mean,
        std: var.sqrt(),
    })
}

/// Apply previously computed standardization statistics (e.g. train stats to
/// the test split).
pub fn apply_standardization(ds: &ChoiceDataset, stats: &Standardization) -> ChoiceDataset {
    let mut out = ds.clone();
    for i in 0..out.n {
        for a in 0..out.j {
            for k in 0..out.k_x {
                let s = &stats.attr[k];
                let idx = (i * out.j + a) * out.k_x + k;
                out.x[idx] = (out.x[idx] - s.mean) / s.std;
            }
        }
        for k in 0..out.k_q {
            let s = &stats.shared[k];
            let idx = i * out.k_q + k;
            out.q[idx] = (out.q[idx] - s.mean) / s.std;
        }
    }
    out.meta.standardization = Some(stats.clone());
    out
}

/// Undo standardization, restoring original units.
pub fn invert_standardization(ds: &ChoiceDataset) -> Result<ChoiceDataset> {
    let stats = ds
        .meta
        .standardization
        .clone()
        .ok_or_else(|| Error::Dataset("dataset is not standardized".into()))?;
    let mut out = ds.clone();
    for i in 0..out.n {
        for a in 0..out.j {
            for k in 0..out.k_x {
                let s = &stats.attr[k];
                let idx = (i * out.j + a) * out.k_x + k;
                out.x[idx] = out.x[idx] * s.std + s.mean;
            }
        }
        for k in 0..out.k_q {
            let s = &stats.shared[k];
            let idx = i * out.k_q + k;
            out.q[idx] = out.q[idx] * s.std + s.mean;
        }
    }
    out.meta.standardization = None;
    Ok(out)
}

/// Deterministic stratified holdout split. Test gets `round(fraction * n_c)`
/// per class (largest-remainder rounding to hit the overall size exactly),
/// so class proportions are preserved.
pub fn split(
    ds: &ChoiceDataset,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(ChoiceDataset, ChoiceDataset)> {
    let (train_idx, test_idx) = split_indices(ds, holdout_fraction, seed)?;
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Index form of [`split`]: `(train, test)` observation indices, sorted,
/// disjoint and exhaustive. The partition depends only on (y, n, seed).
pub fn split_indices(
    ds: &ChoiceDataset,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must be in (0, 1), got {}",
            holdout_fraction
        )));
    }
    let target_test = (holdout_fraction * ds.n as f64).round() as usize;
    if target_test == 0 || target_test == ds.n {
        return Err(Error::InvalidArgument(
            "holdout fraction leaves an empty split".into(),
        ));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.j];
    for (i, &c) in ds.y.iter().enumerate() {
        per_class[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // largest-remainder allocation of test slots per class
    let mut take: Vec<usize> = Vec::with_capacity(ds.j);
    let mut quota: Vec<(usize, f64)> = Vec::with_capacity(ds.j);
    let mut assigned = 0usize;
    for (c, members) in per_class.iter().enumerate() {
        let exact = holdout_fraction * members.len() as f64;
        let base = exact.floor() as usize;
        assigned += base;
        take.push(base);
        quota.push((c, exact - base as f64));
    }
    quota.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut remainder = target_test.saturating_sub(assigned);
    for &(c, _) in &quota {
        if remainder == 0 {
            break;
        }
        if take[c] < per_class[c].len() {
            take[c] += 1;
            remainder -= 1;
        }
    }
    let mut test_idx = Vec::with_capacity(target_test);
    let mut train_idx = Vec::with_capacity(ds.n - target_test);
    for (c, members) in per_class.iter().enumerate() {
        let mut m = members.clone();
        m.shuffle(&mut rng);
        test_idx.extend_from_slice(&m[..take[c]]);
        train_idx.extend_from_slice(&m[take[c]..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((train_idx, test_idx))
}

/// Index batches for one epoch: a seeded reshuffle of `0..n_train`, cut into
/// `batch_size` chunks, with a trailing batch of fewer than 2 rows dropped
/// (batch statistics need at least 2 observations).
pub fn minibatches(n_train: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 2, "batch_size must be at least 2");
    let mut idx: Vec<usize> = (0..n_train).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    idx.shuffle(&mut rng);
    let mut out: Vec<Vec<usize>> = idx.chunks(batch_size).map(|c| c.to_vec()).collect();
    if let Some(last) = out.last() {
        if last.len() < 2 {
            out.pop();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> ChoiceDataset {
        // J=2, K_x=2 (one continuous, one binary), K_q=2 (continuous, binary)
        let mut x = Vec::new();
        let mut q = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let t = i as f64;
            x.extend_from_slice(&[t, 1.0, t + 0.5, 0.0]);
            q.extend_from_slice(&[10.0 + t, (i % 2) as f64]);
            y.push(i % 2);
        }
        let mut meta = DatasetMeta::unnamed(2, 2);
        meta.attr_kinds = vec![ColumnKind::Continuous, ColumnKind::Binary];
        meta.shared_kinds = vec![ColumnKind::Continuous, ColumnKind::Binary];
        ChoiceDataset::new(2, 2, 2, x, q, y, meta).unwrap()
    }

    #[test]
    fn binary_columns_pass_through() {
        let ds = toy(10);
        let (std_ds, stats) = standardize(&ds).unwrap();
        assert_eq!(stats.attr[1], ColumnStats::IDENTITY);
        assert_eq!(stats.shared[1], ColumnStats::IDENTITY);
        for i in 0..10 {
            assert_eq!(std_ds.x_at(i, 0, 1), 1.0);
            assert_eq!(std_ds.q_at(i, 1), (i % 2) as f64);
        }
    }

    #[test]
    fn standardize_then_invert_is_identity() {
        let ds = toy(10);
        let (std_ds, _) = standardize(&ds).unwrap();
        let back = invert_standardization(&std_ds).unwrap();
        for i in 0..10 {
            for a in 0..2 {
                for k in 0..2 {
                    assert!((back.x_at(i, a, k) - ds.x_at(i, a, k)).abs() < 1e-12);
                }
            }
            for k in 0..2 {
                assert!((back.q_at(i, k) - ds.q_at(i, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_variance_continuous_column_errors() {
        let mut ds = toy(10);
        ds.meta.attr_kinds[1] = ColumnKind::Continuous; // constant column 1s/0s pooled varies
        // make a truly constant continuous shared column
        ds.meta.shared_kinds[1] = ColumnKind::Continuous;
        for i in 0..ds.n {
            ds.q[i * 2 + 1] = 3.0;
        }
        assert!(standardize(&ds).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_deterministic() {
        let ds = toy(100);
        let (tr, te) = split(&ds, 0.2, 7).unwrap();
        assert_eq!(te.n, 20);
        assert_eq!(tr.n + te.n, 100);
        let (tr2, te2) = split(&ds, 0.2, 7).unwrap();
        assert_eq!(tr.x_raw(), tr2.x_raw());
        assert_eq!(te.choices(), te2.choices());
        // stratification: both classes appear proportionally (50/50 here)
        let ones = te.choices().iter().filter(|&&c| c == 1).count();
        assert_eq!(ones, 10);
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        let ds = toy(10);
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
        assert!(split(&ds, 0.001, 1).is_err());
    }

    #[test]
    fn minibatch_sizes_and_coverage() {
        let batches = minibatches(10, 3, 42);
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3]); // trailing singleton dropped
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9); // a permutation minus the dropped row

        let a = minibatches(10, 3, 9);
        let b = minibatches(10, 3, 9);
        assert_eq!(a, b);
        let c = minibatches(10, 3, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn split_indices_partition_the_dataset() {
        let ds = toy(37);
        let (tr, te) = split_indices(&ds, 0.2, 11).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn train_stats_ignore_test_rows() {
        let ds = toy(50);
        let (tr_idx, te_idx) = split_indices(&ds, 0.2, 3).unwrap();
        let (_, stats1) = standardize(&ds.subset(&tr_idx)).unwrap();
        // perturb only test rows; the partition depends only on (y, n, seed)
        let mut ds2 = ds.clone();
        for &i in &te_idx {
            ds2.x[(i * 2) * 2] += 1e6;
            ds2.q[i * 2] -= 1e6;
        }
        let (tr2_idx, _) = split_indices(&ds2, 0.2, 3).unwrap();
        assert_eq!(tr_idx, tr2_idx);
        let (_, stats2) = standardize(&ds2.subset(&tr2_idx)).unwrap();
        assert_eq!(stats1, stats2);
    }
}
