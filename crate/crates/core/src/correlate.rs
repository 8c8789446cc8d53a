//! Selecting the source feature the pseudo-task predicts.
//!
//! Two identifiers live here: the prompt-based one (ask the model which
//! feature matters most, parse the choice) and a self-contained statistical
//! surrogate used both as a standalone policy and as the fallback when the
//! model's answer can't be parsed twice.
//!
//! The statistical surrogate ranks features against the observed labels by
//! association strength: the correlation ratio for numeric features (equal to
//! the absolute point-biserial correlation when the label is binary) and
//! Cramér's V for categorical features. Both live on [0, 1], so the scores
//! are comparable across feature kinds. Exact ties fall back to a
//! single-decision-stump accuracy, then to schema column order.

use crate::backend::CompletionClient;
use crate::data::{Cell, Row};
use crate::error::{Error, Result};
use crate::parse::{parse_feature, ParsedAnswer};
use crate::prompt::assemble;
use crate::schema::{ColumnKind, ColumnSpec, DatasetSchema};
use crate::serialize::{
    candidate_displays, render_correlation_instruction, PromptSegment, SerializationMode,
};

/// Appended to the correlation prompt on the single retry after an
/// unparseable answer.
const RETRY_SUFFIX: &str = "You must answer with exactly one feature name from the list.";

/// Outcome of the prompt-based identification, including the prompts that
/// were sent (for dumping and replay preparation).
#[derive(Clone, Debug)]
pub struct LlmIdentification {
    /// The chosen column name, or `None` when both attempts were unparseable.
    pub feature: Option<String>,
    /// The exact prompt(s) sent: the initial one, plus the retry if needed.
    pub prompts: Vec<String>,
    /// Raw response texts, parallel to `prompts`.
    pub responses: Vec<String>,
}

/// Build the correlation-identification prompt over `context` segments
/// (labeled demonstrations, or a task description when no labels exist).
pub fn correlation_prompt(
    context: &[PromptSegment],
    candidates: &[&ColumnSpec],
    source_schema: &DatasetSchema,
    target_schema: &DatasetSchema,
    mode: SerializationMode,
) -> Result<String> {
    let instruction =
        render_correlation_instruction(candidates, source_schema, target_schema, mode)?;
    let mut segments: Vec<PromptSegment> = context.to_vec();
    segments.push(instruction);
    assemble(&segments)
}

/// Ask the backend which candidate feature matters most for the target task.
///
/// One retry with an explicit answer-format reminder; a second unparseable
/// answer yields `feature: None` and the caller decides on a fallback.
pub fn identify_with_llm(
    context: &[PromptSegment],
    candidates: &[&ColumnSpec],
    source_schema: &DatasetSchema,
    target_schema: &DatasetSchema,
    mode: SerializationMode,
    client: &CompletionClient,
) -> Result<LlmIdentification> {
    let prompt = correlation_prompt(context, candidates, source_schema, target_schema, mode)?;
    let displays = candidate_displays(candidates, source_schema, mode);
    let mut prompts = Vec::with_capacity(2);
    let mut responses = Vec::with_capacity(2);
    let mut attempt_prompt = prompt.clone();
    for _ in 0..2 {
        let completion = client.complete(&attempt_prompt)?;
        prompts.push(attempt_prompt.clone());
        responses.push(completion.text.clone());
        match parse_feature(&completion.text, &displays) {
            ParsedAnswer::Feature { index, .. } => {
                return Ok(LlmIdentification {
                    feature: Some(candidates[index].name.clone()),
                    prompts,
                    responses,
                });
            }
            _ => {
                attempt_prompt = format!("{prompt}\n{RETRY_SUFFIX}");
            }
        }
    }
    Ok(LlmIdentification { feature: None, prompts, responses })
}

/// Association score of one feature against the labels, on [0, 1].
/// `None` when the score is undefined (constant feature, no usable rows).
fn association(
    values: &[&Cell],
    labels: &[usize],
    n_classes: usize,
    kind: ColumnKind,
) -> Option<f64> {
    match kind {
        ColumnKind::Numeric => correlation_ratio(values, labels, n_classes),
        ColumnKind::Categorical => cramers_v(values, labels, n_classes),
    }
}

/// Correlation ratio: sqrt(between-class sum of squares / total sum of
/// squares) of the numeric values grouped by label.
fn correlation_ratio(values: &[&Cell], labels: &[usize], n_classes: usize) -> Option<f64> {
    let mut xs: Vec<(f64, usize)> = Vec::new();
    for (cell, &label) in values.iter().zip(labels) {
        if let Some(x) = cell.as_f64() {
            xs.push((x, label));
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let total_mean = xs.iter().map(|(x, _)| x).sum::<f64>() / xs.len() as f64;
    let mut class_sum = vec![0.0; n_classes];
    let mut class_count = vec![0usize; n_classes];
    for &(x, label) in &xs {
        class_sum[label] += x;
        class_count[label] += 1;
    }
    let ss_total: f64 = xs.iter().map(|(x, _)| (x - total_mean).powi(2)).sum();
    if ss_total == 0.0 {
        return None; // Constant feature: association undefined.
    }
    let ss_between: f64 = class_sum
        .iter()
        .zip(&class_count)
        .filter(|(_, &count)| count > 0)
        .map(|(&sum, &count)| {
            let mean = sum / count as f64;
            count as f64 * (mean - total_mean).powi(2)
        })
        .sum();
    Some((ss_between / ss_total).clamp(0.0, 1.0).sqrt())
}

/// Cramér's V from the feature-category × label contingency table.
fn cramers_v(values: &[&Cell], labels: &[usize], n_classes: usize) -> Option<f64> {
    let mut categories: Vec<String> = Vec::new();
    let mut observations: Vec<(usize, usize)> = Vec::new(); // (category idx, label)
    for (cell, &label) in values.iter().zip(labels) {
        let code = match cell {
            Cell::Category(code) => code.clone(),
            Cell::Missing => continue,
            other => other.render().unwrap_or_default(),
        };
        let cat = match categories.iter().position(|c| *c == code) {
            Some(i) => i,
            None => {
                categories.push(code);
                categories.len() - 1
            }
        };
        observations.push((cat, label));
    }
    let n = observations.len();
    if n < 2 {
        return None;
    }
    let n_cats = categories.len();
    let classes_seen = {
        let mut seen = vec![false; n_classes];
        for &(_, label) in &observations {
            seen[label] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    let denom_dims = n_cats.min(classes_seen).saturating_sub(1);
    if denom_dims == 0 {
        return None; // Constant feature or single observed class.
    }
    let mut table = vec![vec![0.0f64; n_classes]; n_cats];
    let mut row_sum = vec![0.0f64; n_cats];
    let mut col_sum = vec![0.0f64; n_classes];
    for &(cat, label) in &observations {
        table[cat][label] += 1.0;
        row_sum[cat] += 1.0;
        col_sum[label] += 1.0;
    }
    let n = n as f64;
    let mut chi2 = 0.0;
    for cat in 0..n_cats {
        for class in 0..n_classes {
            let expected = row_sum[cat] * col_sum[class] / n;
            if expected > 0.0 {
                let d = table[cat][class] - expected;
                chi2 += d * d / expected;
            }
        }
    }
    Some((chi2 / (n * denom_dims as f64)).clamp(0.0, n as f64).sqrt().min(1.0))
}

/// Best single-split ("decision stump") accuracy of a feature predicting the
/// labels; the tie-break when association scores are equal.
fn stump_accuracy(
    values: &[&Cell],
    labels: &[usize],
    n_classes: usize,
    kind: ColumnKind,
) -> f64 {
    match kind {
        ColumnKind::Numeric => {
            let mut xs: Vec<(f64, usize)> = Vec::new();
            for (cell, &label) in values.iter().zip(labels) {
                if let Some(x) = cell.as_f64() {
                    xs.push((x, label));
                }
            }
            if xs.is_empty() {
                return 0.0;
            }
            xs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let n = xs.len() as f64;
            // Majority-class accuracy is the no-split floor.
            let mut counts = vec![0usize; n_classes];
            for &(_, label) in &xs {
                counts[label] += 1;
            }
            let mut best = counts.iter().copied().max().unwrap_or(0) as f64 / n;
            // Each boundary between distinct values: majority vote per side.
            for split in 1..xs.len() {
                if xs[split].0 == xs[split - 1].0 {
                    continue;
                }
                let mut left = vec![0usize; n_classes];
                for &(_, label) in &xs[..split] {
                    left[label] += 1;
                }
                let right: Vec<usize> =
                    counts.iter().zip(&left).map(|(&total, &l)| total - l).collect();
                let correct = left.iter().copied().max().unwrap_or(0)
                    + right.iter().copied().max().unwrap_or(0);
                best = best.max(correct as f64 / n);
            }
            best
        }
        ColumnKind::Categorical => {
            // Per-category majority vote.
            let mut counts: Vec<(String, Vec<usize>)> = Vec::new();
            let mut total = 0usize;
            for (cell, &label) in values.iter().zip(labels) {
                let Cell::Category(code) = cell else { continue };
                total += 1;
                match counts.iter_mut().find(|(c, _)| c == code) {
                    Some((_, per_class)) => per_class[label] += 1,
                    None => {
                        let mut per_class = vec![0usize; n_classes];
                        per_class[label] += 1;
                        counts.push((code.clone(), per_class));
                    }
                }
            }
            if total == 0 {
                return 0.0;
            }
            let correct: usize = counts
                .iter()
                .map(|(_, per_class)| per_class.iter().copied().max().unwrap_or(0))
                .sum();
            correct as f64 / total as f64
        }
    }
}

/// Rank the schema's feature columns by association with the labels and
/// return the strongest one.
///
/// Rows without a recognizable label are skipped; at least two labeled rows
/// are required. Features with undefined association (constant columns) rank
/// below every defined one; if every feature is undefined, the first feature
/// column in schema order is returned.
pub fn conventional_identify(rows: &[Row], schema: &DatasetSchema) -> Result<String> {
    let features = schema.feature_columns();
    if features.is_empty() {
        return Err(Error::NoCandidateFeatures);
    }
    let mut labels: Vec<usize> = Vec::new();
    let mut labeled_rows: Vec<&Row> = Vec::new();
    for row in rows {
        if let Some(token) = row.class_token(&schema.target) {
            if let Some(index) = schema.class_index(token) {
                labels.push(index);
                labeled_rows.push(row);
            }
        }
    }
    if labels.len() < 2 {
        return Err(Error::Config(format!(
            "conventional identification needs at least 2 labeled rows, found {}",
            labels.len()
        )));
    }
    let n_classes = schema.class_labels.len();

    // (has score, score, stump accuracy, negative schema position) maximized.
    let mut best: Option<(bool, f64, f64, usize)> = None;
    let mut best_name = features[0].name.clone();
    for (position, spec) in features.iter().enumerate() {
        let values: Vec<&Cell> = labeled_rows.iter().map(|row| row.get(&spec.name)).collect();
        let score = association(&values, &labels, n_classes, spec.kind);
        let key = match score {
            Some(s) => (true, s, stump_accuracy(&values, &labels, n_classes, spec.kind), position),
            None => (false, 0.0, 0.0, position),
        };
        let better = match &best {
            None => true,
            Some(current) => {
                (key.0, key.1, key.2) > (current.0, current.1, current.2)
                    // Strict improvement only: equal scores keep the earlier
                    // (schema-order) column.
            }
        };
        if better {
            best = Some(key);
            best_name = spec.name.clone();
        }
    }
    Ok(best_name)
}
