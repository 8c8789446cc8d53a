//! Config-driven experiment running: seeds × methods over one target dataset,
//! metric aggregation into versioned reports, exact-prompt dumping, and cache
//! maintenance.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{estimate_tokens, BackendConfig, BackendKind, CompletionCache, CompletionClient};
use crate::baselines::{
    heterogeneous_baseline, knn_regress, linear_fit, BaselineKind, FittedBaseline, GdParams,
    SourceLabelPolicy,
};
use crate::data::{load_csv, TableDataset};
use crate::encode::BaselineEncoder;
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, PipelineMode, PipelineRun, PredictionMethod, SourceKind};
use crate::schema::TaskKind;
use crate::split::{make_transfer_split, sample_source_rows, TransferSplit};

/// Current report / spec format version.
pub const SCHEMA_VERSION: u32 = 1;

/// A dataset on disk: the CSV and its schema manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetBinding {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

/// The methods a run can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    /// Plain prompting with labeled demonstrations only.
    Icl,
    /// Prompting with pseudo-demonstrations from the transfer source.
    P2t,
    /// k-nearest-neighbor baseline.
    Knn,
    /// Logistic (classification) / linear (regression) baseline.
    Lr,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Icl => "icl",
            MethodName::P2t => "p2t",
            MethodName::Knn => "knn",
            MethodName::Lr => "lr",
        }
    }

    fn is_llm(self) -> bool {
        matches!(self, MethodName::Icl | MethodName::P2t)
    }
}

/// A complete experiment description, loadable from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub target: DatasetBinding,
    /// Heterogeneous transfer source, when the mode names one.
    #[serde(default)]
    pub source: Option<DatasetBinding>,
    #[serde(default)]
    pub mode: PipelineMode,
    pub seeds: Vec<u64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub backend: BackendConfig,
    pub methods: Vec<MethodName>,
    /// Report destination; `None` leaves emission to the caller.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_test_fraction() -> f64 {
    0.2
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::json("experiment spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_json(&text)?;
        // Dataset paths are relative to the spec file's directory.
        if let Some(dir) = path.parent() {
            spec.rebase(dir);
        }
        Ok(spec)
    }

    fn rebase(&mut self, dir: &Path) {
        let rebase_one = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        };
        rebase_one(&mut self.target.csv);
        rebase_one(&mut self.target.schema);
        if let Some(source) = &mut self.source {
            rebase_one(&mut source.csv);
            rebase_one(&mut source.schema);
        }
        if let Some(cache) = &mut self.backend.cache_path {
            rebase_one(cache);
        }
        if let Some(output) = &mut self.output {
            rebase_one(output);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec schema_version {} (this build reads {})",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        let distinct: BTreeSet<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        if distinct.len() != self.methods.len() {
            return Err(Error::Config("methods list contains duplicates".into()));
        }
        if self.methods.contains(&MethodName::P2t) {
            if self.mode.source == SourceKind::None {
                return Err(Error::Config(
                    "p2t method needs mode.source = unlabeled_same or heterogeneous".into(),
                ));
            }
            if matches!(self.mode.source, SourceKind::Heterogeneous { .. })
                && self.source.is_none()
            {
                return Err(Error::Config(
                    "mode.source is heterogeneous but no source dataset is bound".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-seed result of one method.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Accuracy (classification) or mean squared error (regression).
    pub score: f64,
    pub queries: usize,
    pub unparseable: usize,
    /// Prompts sent, test queries plus feature-selection traffic.
    pub prompts: usize,
    pub token_estimate: u64,
}

/// Aggregated result of one method across seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub per_seed: Vec<SeedOutcome>,
    pub mean: f64,
    /// Sample standard deviation (n−1); 0 for a single seed.
    pub std: f64,
    pub prompt_count: u64,
    pub token_estimate: u64,
    pub unparseable_count: u64,
}

impl MethodReport {
    fn from_outcomes(method: MethodName, per_seed: Vec<SeedOutcome>) -> Self {
        let scores: Vec<f64> = per_seed.iter().map(|s| s.score).collect();
        let (mean, std) = mean_and_std(&scores);
        MethodReport {
            method: method.as_str().to_string(),
            prompt_count: per_seed.iter().map(|s| s.prompts as u64).sum(),
            token_estimate: per_seed.iter().map(|s| s.token_estimate).sum(),
            unparseable_count: per_seed.iter().map(|s| s.unparseable as u64).sum(),
            per_seed,
            mean,
            std,
        }
    }
}

/// Mean and sample standard deviation (n−1 denominator; 0 when n < 2).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// The finished experiment: per-method aggregates plus identifying context.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub dataset: String,
    pub task_kind: TaskKind,
    /// "accuracy" (higher is better) or "mse" (lower is better).
    pub metric: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodReport>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("run report", e))
    }
}

/// A loaded experiment ready to run.
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub target: TableDataset,
    pub source: Option<TableDataset>,
}

impl Experiment {
    /// Load the datasets an already-validated spec names.
    pub fn load(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let target = load_csv(&spec.target.csv, &spec.target.schema)?;
        let source = match &spec.source {
            Some(binding) => Some(load_csv(&binding.csv, &binding.schema)?),
            None => None,
        };
        Ok(Experiment { spec, target, source })
    }

    fn mode_for(&self, method: MethodName) -> PipelineMode {
        let mut mode = self.spec.mode.clone();
        mode.prediction = match method {
            MethodName::P2t => PredictionMethod::P2t,
            _ => PredictionMethod::IclBaseline,
        };
        mode
    }

    fn split_for(&self, seed: u64) -> Result<TransferSplit> {
        make_transfer_split(&self.target, self.spec.mode.shots, self.spec.test_fraction, seed)
    }

    /// One LLM method at one seed.
    fn llm_seed(
        &self,
        method: MethodName,
        seed: u64,
        client: &CompletionClient,
        parallel: usize,
    ) -> Result<(SeedOutcome, PipelineRun)> {
        let mode = self.mode_for(method);
        let split = self.split_for(seed)?;
        let pipeline = Pipeline { target: &self.target, source: self.source.as_ref(), mode: &mode };
        let prepared = pipeline.prepare(&split, client)?;
        let run = prepared.execute(client, parallel)?;
        let score = match self.target.schema.task_kind {
            TaskKind::Classification => run.accuracy.ok_or_else(|| {
                Error::Config("classification run produced no scored queries".into())
            })?,
            TaskKind::Regression => run
                .mse
                .ok_or_else(|| Error::Config("regression run produced no scored queries".into()))?,
        };
        let prompt_texts: Vec<&String> = run
            .correlation_prompts
            .iter()
            .chain(run.outcomes.iter().map(|o| &o.prompt))
            .collect();
        let outcome = SeedOutcome {
            seed,
            score,
            queries: run.outcomes.len(),
            unparseable: run.unparseable_count,
            prompts: prompt_texts.len(),
            token_estimate: prompt_texts.iter().map(|p| estimate_tokens(p) as u64).sum(),
        };
        Ok((outcome, run))
    }

    /// One classical baseline at one seed.
    fn baseline_seed(&self, method: MethodName, seed: u64) -> Result<SeedOutcome> {
        let split = self.split_for(seed)?;
        let schema = &self.target.schema;
        let shots = &split.labeled_shots;
        if shots.is_empty() {
            return Err(Error::Config(format!(
                "{} needs labeled shots; shots=0 has no classical analogue",
                method.as_str()
            )));
        }
        let score = match schema.task_kind {
            TaskKind::Classification => {
                let truth: Vec<usize> = split
                    .test_set
                    .iter()
                    .map(|row| {
                        row.class_token(&schema.target)
                            .and_then(|t| schema.class_index(t))
                            .ok_or_else(|| Error::MissingValue(schema.target.clone()))
                    })
                    .collect::<Result<_>>()?;
                let kind = match method {
                    MethodName::Knn => BaselineKind::Knn { k: self.spec.mode.shots.max(1) },
                    _ => BaselineKind::Logistic(GdParams::default()),
                };
                let predicted = match (&self.spec.mode.source, &self.source) {
                    (SourceKind::Heterogeneous { .. }, Some(source)) => {
                        let n = self.spec.mode.zero_shot_source_n;
                        let source_rows = sample_source_rows(&source.rows, n, seed);
                        heterogeneous_baseline(
                            schema,
                            &source.schema,
                            shots,
                            &source_rows,
                            &split.test_set,
                            &kind,
                            &SourceLabelPolicy::Exclude,
                        )?
                    }
                    _ => FittedBaseline::fit(schema, shots, &kind)?.predict_rows(&split.test_set),
                };
                let correct =
                    predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
                correct as f64 / truth.len().max(1) as f64
            }
            TaskKind::Regression => {
                let truth: Vec<f64> = split
                    .test_set
                    .iter()
                    .map(|row| {
                        row.get(&schema.target)
                            .as_f64()
                            .ok_or_else(|| Error::MissingValue(schema.target.clone()))
                    })
                    .collect::<Result<_>>()?;
                let encoder = BaselineEncoder::fit(schema, shots)?;
                let train = encoder.encode(shots);
                let targets: Vec<f64> = shots
                    .iter()
                    .map(|row| {
                        row.get(&schema.target)
                            .as_f64()
                            .ok_or_else(|| Error::MissingValue(schema.target.clone()))
                    })
                    .collect::<Result<_>>()?;
                let queries = encoder.encode(&split.test_set);
                let predicted = match method {
                    MethodName::Knn => {
                        knn_regress(&train, &targets, &queries, self.spec.mode.shots.max(1))
                    }
                    _ => linear_fit(&train, &targets, &GdParams::default())
                        .predict_batch(&queries),
                };
                predicted
                    .iter()
                    .zip(&truth)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    / truth.len().max(1) as f64
            }
        };
        Ok(SeedOutcome {
            seed,
            score,
            queries: split.test_set.len(),
            unparseable: 0,
            prompts: 0,
            token_estimate: 0,
        })
    }

    /// Run every configured method over every seed.
    pub fn run(&self, client: &CompletionClient, parallel: usize) -> Result<RunReport> {
        let mut methods = Vec::with_capacity(self.spec.methods.len());
        for &method in &self.spec.methods {
            let mut per_seed = Vec::with_capacity(self.spec.seeds.len());
            for &seed in &self.spec.seeds {
                let outcome = if method.is_llm() {
                    self.llm_seed(method, seed, client, parallel)?.0
                } else {
                    self.baseline_seed(method, seed)?
                };
                per_seed.push(outcome);
            }
            methods.push(MethodReport::from_outcomes(method, per_seed));
        }
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            dataset: self.target.provenance.clone(),
            task_kind: self.target.schema.task_kind,
            metric: match self.target.schema.task_kind {
                TaskKind::Classification => "accuracy".to_string(),
                TaskKind::Regression => "mse".to_string(),
            },
            seeds: self.spec.seeds.clone(),
            methods,
        })
    }

    /// Write the exact prompt of every (LLM method, seed, query) to
    /// `out_dir`, plus any feature-selection prompts, without network
    /// activity.
    ///
    /// The provided client must be incapable of network I/O (replay or
    /// scripted); the CLI converts a live backend into a replay over its own
    /// cache before calling this.
    pub fn dump_prompts(&self, client: &CompletionClient, out_dir: &Path) -> Result<Vec<PathBuf>> {
        if client.backend_kind() == BackendKind::HttpChat {
            return Err(Error::Config(
                "prompt dumping requires a replay or scripted client".into(),
            ));
        }
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let mut written = Vec::new();
        let mut write = |name: String, content: &str| -> Result<()> {
            let path = out_dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        for &method in &self.spec.methods {
            if !method.is_llm() {
                continue;
            }
            let mode = self.mode_for(method);
            for &seed in &self.spec.seeds {
                let split = self.split_for(seed)?;
                let pipeline =
                    Pipeline { target: &self.target, source: self.source.as_ref(), mode: &mode };
                let prepared = pipeline.prepare(&split, client)?;
                for (index, prompt) in prepared.correlation_prompts.iter().enumerate() {
                    write(
                        format!("{}_seed{seed}_correlation_{index}.txt", method.as_str()),
                        prompt,
                    )?;
                }
                for index in 0..prepared.test_rows.len() {
                    let prompt = prepared.prompt_for(index)?;
                    write(format!("{}_seed{seed}_q{index}.txt", method.as_str()), &prompt)?;
                }
            }
        }
        Ok(written)
    }
}

/// Cache maintenance subcommands.
#[derive(Clone, Debug)]
pub enum CacheCommand {
    /// Entry count and a token-volume estimate.
    Stats,
    /// Drop every entry whose model differs from `keep_model`.
    Prune { keep_model: String },
    /// Re-emit the cache, deduplicated and key-sorted, to `out`.
    Export { out: PathBuf },
}

/// Operate on a JSON-lines completion cache file.
pub fn cache_tool(cache_path: &Path, command: CacheCommand) -> Result<String> {
    let cache = CompletionCache::open(cache_path)?;
    match command {
        CacheCommand::Stats => {
            let entries = cache.entries_sorted();
            let tokens: u64 = entries
                .iter()
                .map(|e| {
                    (estimate_tokens(&e.prompt_text) + estimate_tokens(&e.response_text)) as u64
                })
                .sum();
            Ok(format!("{} entries, ~{} tokens (prompt + response estimate)", entries.len(), tokens))
        }
        CacheCommand::Prune { keep_model } => {
            let entries = cache.entries_sorted();
            let kept: Vec<_> =
                entries.iter().filter(|e| e.model_name == keep_model).cloned().collect();
            let dropped = entries.len() - kept.len();
            let tmp = cache_path.with_extension("jsonl.tmp");
            {
                let mut lines = String::new();
                for entry in &kept {
                    let line = serde_json::to_string(entry)
                        .map_err(|e| Error::json("serializing cache entry", e))?;
                    lines.push_str(&line);
                    lines.push('\n');
                }
                std::fs::write(&tmp, lines).map_err(|e| Error::io(&tmp, e))?;
            }
            std::fs::rename(&tmp, cache_path).map_err(|e| Error::io(cache_path, e))?;
            Ok(format!("kept {} entries, dropped {dropped}", kept.len()))
        }
        CacheCommand::Export { out } => {
            let entries = cache.entries_sorted();
            let mut lines = String::new();
            for entry in &entries {
                let line = serde_json::to_string(entry)
                    .map_err(|e| Error::json("serializing cache entry", e))?;
                lines.push_str(&line);
                lines.push('\n');
            }
            std::fs::write(&out, lines).map_err(|e| Error::io(&out, e))?;
            Ok(format!("exported {} entries to {}", entries.len(), out.display()))
        }
    }
}

/// Render a report as a fixed-width text table: one row per dataset, one
/// column per method, mean ± std.
pub fn render_human_table(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "metric: {} over seeds {:?}", report.metric, report.seeds);
    let name_width = report.dataset.len().max("dataset".len());
    let cells: Vec<String> = report
        .methods
        .iter()
        .map(|m| format!("{:.3} ± {:.3}", m.mean, m.std))
        .collect();
    let widths: Vec<usize> = report
        .methods
        .iter()
        .zip(&cells)
        .map(|(m, c)| m.method.len().max(c.len()))
        .collect();
    let _ = write!(out, "{:name_width$}", "dataset");
    for (method, width) in report.methods.iter().zip(&widths) {
        let _ = write!(out, "  {:>width$}", method.method, width = width);
    }
    let _ = writeln!(out);
    let _ = write!(out, "{:name_width$}", report.dataset);
    for (cell, width) in cells.iter().zip(&widths) {
        let _ = write!(out, "  {:>width$}", cell, width = width);
    }
    let _ = writeln!(out);
    out
}
