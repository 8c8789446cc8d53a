//! Seeded dataset splitting, subsampling, and feature masking.
//!
//! Every operation here is a pure function of (inputs, seed): fixed seeds give
//! bit-identical results, and input row order is never shuffled implicitly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Row, TableDataset};
use crate::error::{Error, Result};
use crate::schema::{DatasetSchema, TaskKind};

/// A labeled-shots / unlabeled-pool / test partition of one dataset.
#[derive(Clone, Debug)]
pub struct TransferSplit {
    /// Labeled examples, ordered class-by-class (declaration order), then by
    /// sampling order within a class.
    pub labeled_shots: Vec<Row>,
    /// The remaining 80% with the label cell removed, in original row order.
    pub unlabeled_pool: Vec<Row>,
    /// Held-out rows with labels retained for scoring.
    pub test_set: Vec<Row>,
    pub seed: u64,
}

/// Select `n` distinct indices from `0..len` uniformly without replacement.
///
/// Implemented as a partial Fisher–Yates shuffle so the draw is deterministic
/// per seed and independent of everything but (len, n, rng state).
fn sample_indices(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let n = n.min(len);
    for i in 0..n {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx
}

/// Number of test rows for a dataset of `n` rows: nearest integer to
/// `fraction * n` (ties round up).
fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction + 0.5).floor() as usize
}

/// Apportion `total` test slots across classes proportionally to class sizes,
/// using largest remainders so the counts sum exactly to `total`.
fn apportion(class_sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    if n == 0 {
        return vec![0; class_sizes.len()];
    }
    let ideals: Vec<f64> = class_sizes
        .iter()
        .map(|&c| total as f64 * c as f64 / n as f64)
        .collect();
    let mut counts: Vec<usize> = ideals.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    // Largest fractional remainder first; class declaration order breaks ties.
    order.sort_by(|&a, &b| {
        let ra = ideals[a] - ideals[a].floor();
        let rb = ideals[b] - ideals[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &class in order.iter().take(total.saturating_sub(assigned)) {
        counts[class] += 1;
    }
    // Never apportion more slots than a class has rows.
    for (count, &size) in counts.iter_mut().zip(class_sizes) {
        *count = (*count).min(size);
    }
    counts
}

/// Split a labeled dataset into labeled shots, an unlabeled pool, and a test
/// set.
///
/// Classification: the test set is a stratified `test_fraction` draw, then
/// `shots` rows per class are sampled uniformly from the remainder; everything
/// else loses its label and becomes the unlabeled pool. Regression: `shots` is
/// a flat count and the test draw is unstratified.
pub fn make_transfer_split(
    ds: &TableDataset,
    shots: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<TransferSplit> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test_fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match ds.schema.task_kind {
        TaskKind::Classification => split_classification(ds, shots, test_fraction, seed, &mut rng),
        TaskKind::Regression => split_regression(ds, shots, test_fraction, seed, &mut rng),
    }
}

fn split_classification(
    ds: &TableDataset,
    shots: usize,
    test_fraction: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TransferSplit> {
    let schema = &ds.schema;
    let target = schema.target.as_str();

    // Row indices per class, in declaration order of the classes.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); schema.class_labels.len()];
    for (idx, row) in ds.rows.iter().enumerate() {
        let token = row.class_token(target).ok_or_else(|| {
            Error::Config(format!("row {idx} has no label in column {target:?}"))
        })?;
        let class = schema
            .class_index(token)
            .ok_or_else(|| Error::Config(format!("row {idx} has unknown label {token:?}")))?;
        by_class[class].push(idx);
    }

    let class_sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let total_test = test_count(ds.rows.len(), test_fraction);
    let test_quota = apportion(&class_sizes, total_test);

    let mut labeled = Vec::new();
    let mut test = Vec::new();
    let mut pool_indices = Vec::new();
    for (class, indices) in by_class.iter().enumerate() {
        let take_test = test_quota[class];
        let picked = sample_indices(indices.len(), take_test, rng);
        let mut in_test = vec![false; indices.len()];
        for &p in &picked {
            in_test[p] = true;
        }
        for &p in &picked {
            test.push(ds.rows[indices[p]].clone());
        }

        let remaining: Vec<usize> = (0..indices.len()).filter(|&i| !in_test[i]).collect();
        if remaining.len() < shots {
            return Err(Error::InsufficientClassRows {
                class: schema.class_labels[class].0.clone(),
                available: remaining.len(),
                needed: shots,
            });
        }
        let picked_shots = sample_indices(remaining.len(), shots, rng);
        let mut in_shots = vec![false; remaining.len()];
        for &p in &picked_shots {
            in_shots[p] = true;
        }
        for &p in &picked_shots {
            labeled.push(ds.rows[indices[remaining[p]]].clone());
        }
        for (i, &r) in remaining.iter().enumerate() {
            if !in_shots[i] {
                pool_indices.push(indices[r]);
            }
        }
    }

    // The pool keeps the original dataset order so downstream tie-breaking by
    // pool index is stable.
    pool_indices.sort_unstable();
    let unlabeled_pool = pool_indices
        .into_iter()
        .map(|i| ds.rows[i].without(target))
        .collect();

    Ok(TransferSplit {
        labeled_shots: labeled,
        unlabeled_pool,
        test_set: test,
        seed,
    })
}

fn split_regression(
    ds: &TableDataset,
    shots: usize,
    test_fraction: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TransferSplit> {
    let target = ds.schema.target.as_str();
    let n = ds.rows.len();
    let take_test = test_count(n, test_fraction);
    let picked = sample_indices(n, take_test, rng);
    let mut in_test = vec![false; n];
    for &p in &picked {
        in_test[p] = true;
    }
    let test: Vec<Row> = picked.iter().map(|&p| ds.rows[p].clone()).collect();

    let remaining: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    if remaining.len() < shots {
        return Err(Error::InsufficientClassRows {
            class: "(regression)".into(),
            available: remaining.len(),
            needed: shots,
        });
    }
    let picked_shots = sample_indices(remaining.len(), shots, rng);
    let mut in_shots = vec![false; remaining.len()];
    for &p in &picked_shots {
        in_shots[p] = true;
    }
    let labeled: Vec<Row> = picked_shots
        .iter()
        .map(|&p| ds.rows[remaining[p]].clone())
        .collect();
    let mut pool_indices: Vec<usize> = remaining
        .iter()
        .enumerate()
        .filter(|(i, _)| !in_shots[*i])
        .map(|(_, &r)| r)
        .collect();
    pool_indices.sort_unstable();
    let unlabeled_pool = pool_indices
        .into_iter()
        .map(|i| ds.rows[i].without(target))
        .collect();

    Ok(TransferSplit {
        labeled_shots: labeled,
        unlabeled_pool,
        test_set: test,
        seed,
    })
}

/// Draw `n` rows uniformly without replacement, deterministically per seed.
///
/// When `n >= pool.len()` the whole pool is returned in its input order (the
/// identity permutation): there is only one such subset, so no shuffling is
/// needed or wanted.
pub fn sample_source_rows(pool: &[Row], n: usize, seed: u64) -> Vec<Row> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_indices(pool.len(), n, &mut rng)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}

/// Replace `floor(fraction * feature_count)` non-target cells with missing,
/// uniformly at random per seed. The target cell is never masked.
pub fn mask_features(row: &Row, schema: &DatasetSchema, fraction: f64, seed: u64) -> Result<Row> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "mask fraction must be in [0, 1], got {fraction}"
        )));
    }
    let features = schema.feature_columns();
    let k = ((features.len() as f64) * fraction).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = row.clone();
    for i in sample_indices(features.len(), k, &mut rng) {
        masked.set(features[i].name.clone(), crate::data::Cell::Missing);
    }
    Ok(masked)
}
