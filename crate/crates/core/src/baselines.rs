//! Self-contained k-nearest-neighbor and logistic/linear-regression
//! baselines over baseline-encoded features, including the heterogeneous
//! zero-padding arm.
//!
//! Everything here is deterministic: zero initialization, fixed iteration
//! order, explicit tie rules. Identical inputs give bit-identical fits and
//! predictions, which the experiment layer relies on for reproducibility.

use std::collections::BTreeMap;

use crate::data::Row;
use crate::encode::{zero_pad_rows, zero_pad_union, BaselineEncoder};
use crate::error::{Error, Result};
use crate::schema::DatasetSchema;

/// Gradient-descent hyperparameters for the logistic and linear models.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GdParams {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for GdParams {
    fn default() -> Self {
        GdParams { l2: 1e-4, lr: 0.1, epochs: 500 }
    }
}

/// Which classifier a [`FittedBaseline`] wraps.
#[derive(Clone, Debug, PartialEq)]
pub enum BaselineKind {
    Knn { k: usize },
    Logistic(GdParams),
}

/// Majority vote over the `k` nearest training points (squared Euclidean).
///
/// Distance ties break by training index (lower wins a slot); vote ties break
/// by smallest class index. `k` larger than the training set uses the whole
/// set.
pub fn knn_predict(
    train: &[Vec<f64>],
    labels: &[usize],
    queries: &[Vec<f64>],
    k: usize,
    n_classes: usize,
) -> Vec<usize> {
    assert_eq!(train.len(), labels.len(), "one label per training vector");
    assert!(!train.is_empty(), "kNN needs at least one training point");
    let k = k.max(1).min(train.len());
    queries
        .iter()
        .map(|query| {
            let mut scored: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, point)| (squared_distance(query, point), i))
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut votes = vec![0usize; n_classes];
            for &(_, i) in &scored[..k] {
                votes[labels[i]] += 1;
            }
            votes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(class, _)| class)
                .unwrap_or(0)
        })
        .collect()
}

/// Mean target of the `k` nearest training points; the regression analogue of
/// [`knn_predict`] with the same tie rules.
pub fn knn_regress(
    train: &[Vec<f64>],
    targets: &[f64],
    queries: &[Vec<f64>],
    k: usize,
) -> Vec<f64> {
    assert_eq!(train.len(), targets.len(), "one target per training vector");
    assert!(!train.is_empty(), "kNN needs at least one training point");
    let k = k.max(1).min(train.len());
    queries
        .iter()
        .map(|query| {
            let mut scored: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, point)| (squared_distance(query, point), i))
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            scored[..k].iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
        })
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Multinomial logistic regression: per-class weight vectors and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    /// `weights[class][dim]`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect()
    }

    /// Softmax class probabilities (numerically stabilized).
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x))
    }

    /// Most probable class; score ties break toward the smaller class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let scores = self.scores(x);
        let mut best = 0usize;
        for (class, &score) in scores.iter().enumerate().skip(1) {
            if score > scores[best] {
                best = class;
            }
        }
        best
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<usize> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Mean softmax cross-entropy plus `l2/2 · ‖weights‖²` (biases unpenalized).
/// Exposed so gradients can be checked against finite differences.
pub fn logistic_loss(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &[Vec<f64>],
    y: &[usize],
    l2: f64,
) -> f64 {
    let n = x.len() as f64;
    let model = LogisticModel { weights: weights.to_vec(), bias: bias.to_vec() };
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let p = model.probabilities(xi);
        loss -= p[yi].max(f64::MIN_POSITIVE).ln();
    }
    loss /= n;
    let penalty: f64 = weights.iter().flatten().map(|w| w * w).sum::<f64>();
    loss + 0.5 * l2 * penalty
}

/// Analytic gradient of [`logistic_loss`] in (weights, bias) order.
pub fn logistic_grad(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &[Vec<f64>],
    y: &[usize],
    l2: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n_classes = weights.len();
    let dim = weights.first().map(|w| w.len()).unwrap_or(0);
    let n = x.len() as f64;
    let model = LogisticModel { weights: weights.to_vec(), bias: bias.to_vec() };
    let mut grad_w = vec![vec![0.0; dim]; n_classes];
    let mut grad_b = vec![0.0; n_classes];
    for (xi, &yi) in x.iter().zip(y) {
        let p = model.probabilities(xi);
        for class in 0..n_classes {
            let delta = p[class] - if class == yi { 1.0 } else { 0.0 };
            for (g, &xv) in grad_w[class].iter_mut().zip(xi) {
                *g += delta * xv;
            }
            grad_b[class] += delta;
        }
    }
    for class in 0..n_classes {
        for (g, &w) in grad_w[class].iter_mut().zip(&weights[class]) {
            *g = *g / n + l2 * w;
        }
        grad_b[class] /= n;
    }
    (grad_w, grad_b)
}

/// Fit a multinomial logistic model by full-batch gradient descent from zero
/// initialization. Deterministic: no randomness anywhere.
pub fn logistic_fit(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &GdParams,
) -> LogisticModel {
    assert_eq!(x.len(), y.len(), "one label per training vector");
    assert!(!x.is_empty(), "logistic fit needs at least one training point");
    assert!(n_classes >= 1);
    let dim = x[0].len();
    let mut weights = vec![vec![0.0; dim]; n_classes];
    let mut bias = vec![0.0; n_classes];
    for _ in 0..params.epochs {
        let (grad_w, grad_b) = logistic_grad(&weights, &bias, x, y, params.l2);
        for class in 0..n_classes {
            for (w, g) in weights[class].iter_mut().zip(&grad_w[class]) {
                *w -= params.lr * g;
            }
            bias[class] -= params.lr * grad_b[class];
        }
    }
    LogisticModel { weights, bias }
}

/// Linear regression fit by full-batch gradient descent on the mean squared
/// error plus `l2/2 · ‖weights‖²`; the regression analogue of the logistic
/// baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

pub fn linear_fit(x: &[Vec<f64>], y: &[f64], params: &GdParams) -> LinearModel {
    assert_eq!(x.len(), y.len(), "one target per training vector");
    assert!(!x.is_empty(), "linear fit needs at least one training point");
    let dim = x[0].len();
    let n = x.len() as f64;
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    for _ in 0..params.epochs {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let err = weights.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>() + bias - yi;
            for (g, &v) in grad_w.iter_mut().zip(xi) {
                *g += err * v;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= params.lr * (*g / n + params.l2 * *w);
        }
        bias -= params.lr * (grad_b / n);
    }
    LinearModel { weights, bias }
}

enum FittedModel {
    Knn { k: usize, train: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize },
    Logistic(LogisticModel),
}

/// A classifier fitted on labeled rows together with the encoder that maps
/// rows into its feature space.
pub struct FittedBaseline {
    encoder: BaselineEncoder,
    model: FittedModel,
}

impl FittedBaseline {
    /// Fit on labeled rows. The encoder is fitted on the same rows, so the
    /// whole model is a function of (schema, shots, kind).
    pub fn fit(schema: &DatasetSchema, shots: &[Row], kind: &BaselineKind) -> Result<Self> {
        let (vectors, labels) = encode_labeled(schema, shots)?;
        let encoder = BaselineEncoder::fit(schema, shots)?;
        let n_classes = schema.class_labels.len();
        let model = match kind {
            BaselineKind::Knn { k } => {
                FittedModel::Knn { k: *k, train: vectors, labels, n_classes }
            }
            BaselineKind::Logistic(params) => {
                FittedModel::Logistic(logistic_fit(&vectors, &labels, n_classes, params))
            }
        };
        Ok(FittedBaseline { encoder, model })
    }

    /// Predicted class indices for `rows`.
    pub fn predict_rows(&self, rows: &[Row]) -> Vec<usize> {
        let queries = self.encoder.encode(rows);
        match &self.model {
            FittedModel::Knn { k, train, labels, n_classes } => {
                knn_predict(train, labels, &queries, *k, *n_classes)
            }
            FittedModel::Logistic(model) => model.predict_batch(&queries),
        }
    }
}

/// Encode rows and extract class-index labels; rows must all carry an
/// admissible label under `schema`.
fn encode_labeled(
    schema: &DatasetSchema,
    rows: &[Row],
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if rows.is_empty() {
        return Err(Error::Config("baseline fitting needs at least one labeled row".into()));
    }
    let encoder = BaselineEncoder::fit(schema, rows)?;
    let vectors = encoder.encode(rows);
    let mut labels = Vec::with_capacity(rows.len());
    for row in rows {
        let token = row
            .class_token(&schema.target)
            .ok_or_else(|| Error::MissingValue(schema.target.clone()))?;
        let index = schema.class_index(token).ok_or_else(|| {
            Error::Config(format!("label {token:?} is not an admissible class token"))
        })?;
        labels.push(index);
    }
    Ok((vectors, labels))
}

/// How heterogeneous source rows participate in baseline fitting.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum SourceLabelPolicy {
    /// Source rows are excluded from the fit; they only motivate the widened
    /// (zero-padded) feature space.
    #[default]
    Exclude,
    /// Source label values map onto target class tokens and the source rows
    /// join the fit set.
    Map(BTreeMap<String, String>),
}

/// Fit and predict over the zero-padded column union of a target and a
/// heterogeneous source table.
///
/// Target shots always enter the fit; whether source rows do is the policy's
/// call. With zero source rows this is identical to fitting the plain
/// baseline on the target schema, bit for bit.
pub fn heterogeneous_baseline(
    target_schema: &DatasetSchema,
    source_schema: &DatasetSchema,
    shots: &[Row],
    source_rows: &[Row],
    queries: &[Row],
    kind: &BaselineKind,
    policy: &SourceLabelPolicy,
) -> Result<Vec<usize>> {
    let merged = zero_pad_union(target_schema, source_schema)?;
    let fit_rows: Vec<Row> = match policy {
        SourceLabelPolicy::Exclude => shots.to_vec(),
        SourceLabelPolicy::Map(mapping) => {
            // Source rows keep their label cell (renamed onto the target
            // column) so the mapping can translate it.
            let mut rows = shots.to_vec();
            for source_row in source_rows {
                let raw = source_row.class_token(&source_schema.target).ok_or_else(|| {
                    Error::MissingValue(source_schema.target.clone())
                })?;
                let token = mapping.get(raw).ok_or_else(|| {
                    Error::Config(format!("source label {raw:?} has no mapping entry"))
                })?;
                let mut padded = source_row.without(&source_schema.target);
                padded.set(
                    merged.target.clone(),
                    crate::data::Cell::Category(token.clone()),
                );
                rows.push(padded);
            }
            rows
        }
    };
    let (vectors, labels) = encode_labeled(&merged, &fit_rows)?;
    let encoder = BaselineEncoder::fit(&merged, &fit_rows)?;
    let padded_queries = zero_pad_rows(queries, &[], source_schema);
    let query_vectors = encoder.encode(&padded_queries);
    let n_classes = merged.class_labels.len();
    Ok(match kind {
        BaselineKind::Knn { k } => knn_predict(&vectors, &labels, &query_vectors, *k, n_classes),
        BaselineKind::Logistic(params) => {
            logistic_fit(&vectors, &labels, n_classes, params).predict_batch(&query_vectors)
        }
    })
}
