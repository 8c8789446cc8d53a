//! End-to-end orchestration: feature selection, pseudo-demonstration
//! construction, prompt assembly, completion, and scoring for one
//! (dataset, split, mode) run.
//!
//! A run happens in two phases. [`Pipeline::prepare`] resolves everything
//! that precedes the per-query fan-out — the predicted-feature choice, the
//! pseudo-demonstration set, the rendered prefix segments — and captures the
//! exact prompts it sent along the way. [`PreparedRun::execute`] then renders
//! and completes one prompt per test row (optionally across threads) and
//! scores the parsed answers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::CompletionClient;
use crate::correlate::{conventional_identify, identify_with_llm};
use crate::data::{Row, TableDataset};
use crate::encode::{nearest_indices, BaselineEncoder};
use crate::error::{Error, Result};
use crate::parse::{parse_class, parse_number, ParsedAnswer};
use crate::prompt::assemble;
use crate::schema::{ColumnSpec, DatasetSchema, TaskKind};
use crate::serialize::{
    render_labeled_demo, render_pseudo_demo, render_task_description, render_test_query,
    PromptSegment, SerializationMode,
};
use crate::split::{mask_features, sample_source_rows, TransferSplit};

/// Where pseudo-demonstration rows come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    /// No transfer source (baseline prompting only).
    #[default]
    None,
    /// The unlabeled pool of the target dataset itself.
    UnlabeledSame,
    /// A different table with its own columns; `dataset` names the loaded
    /// source table in the experiment spec.
    Heterogeneous { dataset: String },
}

/// How the predicted feature for pseudo-demonstrations is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum TargetSelection {
    /// Ask the backend which feature matters most (the method's default).
    #[default]
    LlmIdentified,
    /// Use this column, validated against the source schema.
    Fixed { name: String },
    /// A uniformly random non-label column (ablation arm).
    Random { seed: u64 },
    /// The statistical surrogate ranking, no model involved.
    Conventional,
}

/// Which prompting method a run evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMethod {
    #[default]
    IclBaseline,
    P2t,
}

/// Full configuration of one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineMode {
    pub prediction: PredictionMethod,
    /// Labeled examples per class (classification) or in total (regression).
    pub shots: usize,
    pub source: SourceKind,
    pub target_selection: TargetSelection,
    pub serialization: SerializationMode,
    /// Neighbors gathered per labeled shot in few-shot pseudo construction.
    pub neighbors_per_shot: usize,
    /// Source rows sampled when no labeled shot anchors a neighbor search
    /// (zero-shot and heterogeneous transfer).
    pub zero_shot_source_n: usize,
    /// Heterogeneous transfer: use the source table's own label column as the
    /// predicted feature instead of running feature selection.
    pub hetero_source_label_as_fk: bool,
    /// Fraction of feature values hidden from every rendered row (robustness
    /// ablation); the label is never masked.
    pub mask_fraction: f64,
}

impl Default for PipelineMode {
    fn default() -> Self {
        PipelineMode {
            prediction: PredictionMethod::IclBaseline,
            shots: 1,
            source: SourceKind::None,
            target_selection: TargetSelection::LlmIdentified,
            serialization: SerializationMode::Descriptive,
            neighbors_per_shot: 30,
            zero_shot_source_n: 30,
            hetero_source_label_as_fk: false,
            mask_fraction: 0.0,
        }
    }
}

/// One scored test query.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub prompt: String,
    pub response: String,
    pub truncated: bool,
    /// Class index the answer parsed to, when classification and parseable.
    pub predicted_class: Option<usize>,
    /// Numeric prediction, when regression (fallback applied if unparseable).
    pub predicted_value: Option<f64>,
    pub truth_class: Option<usize>,
    pub truth_value: Option<f64>,
    /// Classification only; an unparseable answer scores as incorrect.
    pub correct: Option<bool>,
    pub unparseable: bool,
}

/// The finished run: selected feature, pseudo-demo bookkeeping, and one
/// outcome per test row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineRun {
    /// The column pseudo-demonstrations predict; absent for the baseline.
    pub f_k: Option<String>,
    pub pseudo_count: usize,
    /// The pseudo set came up empty and the run fell back to plain prompting.
    pub degraded_to_baseline: bool,
    /// Prompts sent during feature selection, in order.
    pub correlation_prompts: Vec<String>,
    pub correlation_responses: Vec<String>,
    pub outcomes: Vec<QueryOutcome>,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    pub unparseable_count: usize,
}

/// One target dataset (plus optional heterogeneous source) under a mode.
pub struct Pipeline<'a> {
    pub target: &'a TableDataset,
    pub source: Option<&'a TableDataset>,
    pub mode: &'a PipelineMode,
}

/// Everything resolved before the per-query fan-out.
pub struct PreparedRun {
    schema: DatasetSchema,
    serialization: SerializationMode,
    shots_values: Vec<f64>,
    pub f_k: Option<String>,
    pub pseudo_count: usize,
    pub degraded_to_baseline: bool,
    pub correlation_prompts: Vec<String>,
    pub correlation_responses: Vec<String>,
    /// Task, pseudo, and labeled segments, in sanctioned order.
    pub prefix: Vec<PromptSegment>,
    /// Test rows (masked when the mode asks for it), labels retained.
    pub test_rows: Vec<Row>,
}

impl Pipeline<'_> {
    fn validate(&self) -> Result<()> {
        let mode = self.mode;
        if mode.prediction == PredictionMethod::P2t && mode.source == SourceKind::None {
            return Err(Error::Config(
                "p2t prediction needs a transfer source (unlabeled_same or heterogeneous)".into(),
            ));
        }
        if let SourceKind::Heterogeneous { .. } = mode.source {
            if mode.prediction == PredictionMethod::P2t && self.source.is_none() {
                return Err(Error::Config(
                    "heterogeneous source named in mode but no source dataset bound".into(),
                ));
            }
        }
        if !(0.0..=1.0).contains(&mode.mask_fraction) {
            return Err(Error::Config(format!(
                "mask_fraction must be in [0, 1], got {}",
                mode.mask_fraction
            )));
        }
        Ok(())
    }

    /// The source schema and row pool the pseudo-demonstrations draw from.
    fn source_binding<'b>(
        &'b self,
        split: &'b TransferSplit,
    ) -> Result<(&'b DatasetSchema, &'b [Row])> {
        match &self.mode.source {
            SourceKind::None => Err(Error::Config("no transfer source bound".into())),
            SourceKind::UnlabeledSame => Ok((&self.target.schema, &split.unlabeled_pool)),
            SourceKind::Heterogeneous { .. } => {
                let source = self
                    .source
                    .ok_or_else(|| Error::Config("heterogeneous source dataset missing".into()))?;
                Ok((&source.schema, &source.rows))
            }
        }
    }

    /// Resolve the predicted feature per the mode's selection policy.
    fn select_feature(
        &self,
        split: &TransferSplit,
        labeled_demos: &[PromptSegment],
        source_schema: &DatasetSchema,
        client: &CompletionClient,
        prompts: &mut Vec<String>,
        responses: &mut Vec<String>,
    ) -> Result<String> {
        let target_label = &self.target.schema.target;
        let heterogeneous = matches!(self.mode.source, SourceKind::Heterogeneous { .. });
        if heterogeneous && self.mode.hetero_source_label_as_fk {
            let name = source_schema.target.clone();
            if name == *target_label {
                return Err(Error::Config(format!(
                    "source label column {name:?} collides with the target's label column"
                )));
            }
            return Ok(name);
        }
        // Candidates: every source column except the target task's label.
        let candidates: Vec<&ColumnSpec> = source_schema
            .columns
            .iter()
            .filter(|c| c.name != *target_label)
            .collect();
        if candidates.is_empty() {
            return Err(Error::NoCandidateFeatures);
        }
        match &self.mode.target_selection {
            TargetSelection::Fixed { name } => {
                if name == target_label {
                    return Err(Error::Config(format!(
                        "fixed predicted feature {name:?} is the task's own label column"
                    )));
                }
                if !candidates.iter().any(|c| c.name == *name) {
                    return Err(Error::Config(format!(
                        "fixed predicted feature {name:?} is not a source column"
                    )));
                }
                Ok(name.clone())
            }
            TargetSelection::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let pick = rng.gen_range(0..candidates.len());
                Ok(candidates[pick].name.clone())
            }
            TargetSelection::Conventional => {
                self.conventional_choice(split, heterogeneous, source_schema)
            }
            TargetSelection::LlmIdentified => {
                let context: Vec<PromptSegment> = if labeled_demos.is_empty() {
                    vec![render_task_description(&self.target.schema, self.mode.serialization)]
                } else {
                    labeled_demos.to_vec()
                };
                let identification = identify_with_llm(
                    &context,
                    &candidates,
                    source_schema,
                    &self.target.schema,
                    self.mode.serialization,
                    client,
                )?;
                prompts.extend(identification.prompts);
                responses.extend(identification.responses);
                match identification.feature {
                    Some(name) => Ok(name),
                    None => {
                        log::warn!(
                            "feature selection unparseable twice; falling back to the \
                             statistical surrogate"
                        );
                        self.conventional_choice(split, heterogeneous, source_schema)
                    }
                }
            }
        }
    }

    fn conventional_choice(
        &self,
        split: &TransferSplit,
        heterogeneous: bool,
        source_schema: &DatasetSchema,
    ) -> Result<String> {
        if heterogeneous {
            // The surrogate correlates source features against target labels,
            // which requires rows carrying both — a same-table source only.
            return Err(Error::Config(
                "statistical feature selection needs the unlabeled_same source; set \
                 hetero_source_label_as_fk or use fixed/random selection for heterogeneous \
                 transfer"
                    .into(),
            ));
        }
        conventional_identify(&split.labeled_shots, source_schema)
    }

    /// Choose and render pseudo-demonstration rows.
    fn build_pseudo_demos(
        &self,
        split: &TransferSplit,
        shots: &[Row],
        f_k: &str,
        source_schema: &DatasetSchema,
        pool: &[Row],
    ) -> Result<Vec<PromptSegment>> {
        let mode = self.mode;
        let anchored = mode.source == SourceKind::UnlabeledSame && !shots.is_empty();
        let chosen: Vec<Row> = if anchored {
            // Per-shot neighbor search over the full pool, deduplicated
            // across shots by first occurrence.
            // Scale statistics come from shots and pool together; the label
            // column is never encoded, so the pool's stripped labels don't
            // matter.
            let mut fit_rows: Vec<Row> = shots.to_vec();
            fit_rows.extend(pool.iter().cloned());
            let encoder = BaselineEncoder::fit(source_schema, &fit_rows)?;
            let mut seen = vec![false; pool.len()];
            let mut picked: Vec<usize> = Vec::new();
            for shot in shots {
                let (indices, _) = nearest_indices(shot, pool, mode.neighbors_per_shot, &encoder);
                for index in indices {
                    if !seen[index] {
                        seen[index] = true;
                        picked.push(index);
                    }
                }
            }
            picked.into_iter().map(|i| pool[i].clone()).collect()
        } else {
            // No anchors: a seeded uniform sample of eligible source rows.
            let eligible: Vec<Row> = pool
                .iter()
                .filter(|row| !row.get(f_k).is_missing())
                .cloned()
                .collect();
            sample_source_rows(&eligible, mode.zero_shot_source_n, split.seed)
        };
        let mut segments = Vec::new();
        for row in &chosen {
            if row.get(f_k).is_missing() {
                continue; // A pseudo-demo must have its answer value.
            }
            segments.push(render_pseudo_demo(row, source_schema, f_k, mode.serialization)?);
        }
        Ok(segments)
    }

    /// Run every pre-query step: masking, rendering, feature selection,
    /// pseudo-demo construction, prefix assembly.
    pub fn prepare(&self, split: &TransferSplit, client: &CompletionClient) -> Result<PreparedRun> {
        self.validate()?;
        let mode = self.mode;
        let schema = &self.target.schema;

        let mask = |rows: &[Row], salt: u64| -> Result<Vec<Row>> {
            if mode.mask_fraction == 0.0 {
                return Ok(rows.to_vec());
            }
            rows.iter()
                .enumerate()
                .map(|(i, row)| {
                    mask_features(
                        row,
                        schema,
                        mode.mask_fraction,
                        split.seed ^ salt.wrapping_add(i as u64),
                    )
                })
                .collect()
        };
        let shots = mask(&split.labeled_shots, SHOT_MASK_SALT)?;
        let test_rows = mask(&split.test_set, TEST_MASK_SALT)?;

        let task = render_task_description(schema, mode.serialization);
        let labeled: Vec<PromptSegment> = shots
            .iter()
            .map(|row| render_labeled_demo(row, schema, mode.serialization))
            .collect::<Result<_>>()?;

        let shots_values: Vec<f64> = if schema.task_kind == TaskKind::Regression {
            shots.iter().filter_map(|row| row.get(&schema.target).as_f64()).collect()
        } else {
            Vec::new()
        };

        let mut correlation_prompts = Vec::new();
        let mut correlation_responses = Vec::new();
        let mut f_k = None;
        let mut pseudo: Vec<PromptSegment> = Vec::new();
        let mut degraded = false;

        if mode.prediction == PredictionMethod::P2t {
            let (source_schema, pool) = self.source_binding(split)?;
            let name = self.select_feature(
                split,
                &labeled,
                source_schema,
                client,
                &mut correlation_prompts,
                &mut correlation_responses,
            )?;
            pseudo = self.build_pseudo_demos(split, &shots, &name, source_schema, pool)?;
            if pseudo.is_empty() {
                log::warn!(
                    "no eligible pseudo-demonstration rows for feature {name:?}; degrading to \
                     plain prompting"
                );
                degraded = true;
            }
            f_k = Some(name);
        }

        let mut prefix = Vec::with_capacity(1 + pseudo.len() + labeled.len());
        prefix.push(task);
        prefix.extend(pseudo);
        prefix.extend(labeled);

        Ok(PreparedRun {
            schema: schema.clone(),
            serialization: mode.serialization,
            shots_values,
            f_k,
            pseudo_count: prefix
                .iter()
                .filter(|s| s.kind == crate::serialize::SegmentKind::PseudoDemo)
                .count(),
            degraded_to_baseline: degraded,
            correlation_prompts,
            correlation_responses,
            prefix,
            test_rows,
        })
    }
}

// Distinct salts so shot masking and test masking never share a row seed.
const SHOT_MASK_SALT: u64 = 0x5407_0000;
const TEST_MASK_SALT: u64 = 0x7e57_0000;

impl PreparedRun {
    /// The exact prompt that query `index` sends.
    pub fn prompt_for(&self, index: usize) -> Result<String> {
        let row = self
            .test_rows
            .get(index)
            .ok_or_else(|| Error::Config(format!("no test row at index {index}")))?;
        let mut segments = self.prefix.clone();
        segments.push(render_test_query(row, &self.schema, self.serialization)?);
        assemble(&segments)
    }

    /// Ground truth of query `index` as (class index, numeric value).
    fn truth(&self, row: &Row) -> (Option<usize>, Option<f64>) {
        match self.schema.task_kind {
            TaskKind::Classification => {
                let class = row
                    .class_token(&self.schema.target)
                    .and_then(|token| self.schema.class_index(token));
                (class, None)
            }
            TaskKind::Regression => (None, row.get(&self.schema.target).as_f64()),
        }
    }

    /// Fallback regression prediction for unparseable answers: the mean of
    /// the labeled-shot targets, or 0 with no shots.
    fn regression_fallback(&self) -> f64 {
        if self.shots_values.is_empty() {
            0.0
        } else {
            self.shots_values.iter().sum::<f64>() / self.shots_values.len() as f64
        }
    }

    fn score_one(&self, index: usize, client: &CompletionClient) -> Result<QueryOutcome> {
        let row = &self.test_rows[index];
        let prompt = self.prompt_for(index)?;
        let completion = client.complete(&prompt)?;
        let (truth_class, truth_value) = self.truth(row);
        let tokens: Vec<String> =
            self.schema.class_tokens().iter().map(|t| t.to_string()).collect();
        let outcome = match self.schema.task_kind {
            TaskKind::Classification => match parse_class(&completion.text, &tokens) {
                ParsedAnswer::Class { index: predicted, .. } => QueryOutcome {
                    prompt,
                    response: completion.text,
                    truncated: completion.truncated,
                    predicted_class: Some(predicted),
                    predicted_value: None,
                    truth_class,
                    truth_value,
                    correct: truth_class.map(|t| t == predicted),
                    unparseable: false,
                },
                _ => QueryOutcome {
                    prompt,
                    response: completion.text,
                    truncated: completion.truncated,
                    predicted_class: None,
                    predicted_value: None,
                    truth_class,
                    truth_value,
                    // An unreadable answer is scored as a miss.
                    correct: truth_class.map(|_| false),
                    unparseable: true,
                },
            },
            TaskKind::Regression => match parse_number(&completion.text) {
                ParsedAnswer::Number(value) => QueryOutcome {
                    prompt,
                    response: completion.text,
                    truncated: completion.truncated,
                    predicted_class: None,
                    predicted_value: Some(value),
                    truth_class,
                    truth_value,
                    correct: None,
                    unparseable: false,
                },
                _ => QueryOutcome {
                    prompt,
                    response: completion.text,
                    truncated: completion.truncated,
                    predicted_class: None,
                    predicted_value: Some(self.regression_fallback()),
                    truth_class,
                    truth_value,
                    correct: None,
                    unparseable: true,
                },
            },
        };
        Ok(outcome)
    }

    /// Complete and score every test query. `parallel` bounds the worker
    /// threads; outcomes keep test-row order regardless.
    pub fn execute(&self, client: &CompletionClient, parallel: usize) -> Result<PipelineRun> {
        let n = self.test_rows.len();
        let outcomes: Vec<QueryOutcome> = if parallel <= 1 || n <= 1 {
            let mut all = Vec::with_capacity(n);
            for index in 0..n {
                all.push(self.score_one(index, client)?);
            }
            all
        } else {
            let workers = parallel.min(n);
            let next = AtomicUsize::new(0);
            let slots: Vec<Mutex<Option<Result<QueryOutcome>>>> =
                (0..n).map(|_| Mutex::new(None)).collect();
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let index = next.fetch_add(1, Ordering::SeqCst);
                        if index >= n {
                            break;
                        }
                        let result = self.score_one(index, client);
                        *slots[index].lock().expect("slot lock") = Some(result);
                    });
                }
            });
            let mut all = Vec::with_capacity(n);
            for slot in slots {
                all.push(slot.into_inner().expect("slot lock").expect("worker filled slot")?);
            }
            all
        };

        let unparseable_count = outcomes.iter().filter(|o| o.unparseable).count();
        let (accuracy, mse) = match self.schema.task_kind {
            TaskKind::Classification => {
                let scored: Vec<bool> = outcomes.iter().filter_map(|o| o.correct).collect();
                let accuracy = if scored.is_empty() {
                    None
                } else {
                    Some(scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64)
                };
                (accuracy, None)
            }
            TaskKind::Regression => {
                let pairs: Vec<(f64, f64)> = outcomes
                    .iter()
                    .filter_map(|o| Some((o.predicted_value?, o.truth_value?)))
                    .collect();
                let mse = if pairs.is_empty() {
                    None
                } else {
                    Some(
                        pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
                            / pairs.len() as f64,
                    )
                };
                (None, mse)
            }
        };

        Ok(PipelineRun {
            f_k: self.f_k.clone(),
            pseudo_count: self.pseudo_count,
            degraded_to_baseline: self.degraded_to_baseline,
            correlation_prompts: self.correlation_prompts.clone(),
            correlation_responses: self.correlation_responses.clone(),
            outcomes,
            accuracy,
            mse,
            unparseable_count,
        })
    }
}
