//! Core library for prompt-based tabular transfer learning.
//!
//! The crate turns tabular datasets into natural-language prompts, builds
//! pseudo-demonstrations from unlabeled or foreign-schema source tables, talks
//! to a chat-completion backend (live, cached, or scripted), parses answers
//! back into labels or numbers, and runs the surrounding evaluation protocol
//! with classical baselines for comparison.
//!
//! Modules are layered bottom-up:
//! - [`schema`], [`data`]: dataset descriptions, typed cells, CSV loading.
//! - [`split`]: seeded labeled/unlabeled/test splits and row sampling.
//! - [`encode`]: numeric feature encoding, neighbor search, schema union.
//! - [`serialize`], [`prompt`]: text rendering and prompt assembly.
//! - [`parse`]: mapping completions back to class tokens, numbers, features.
//! - [`backend`]: chat-completion client with a content-addressed cache.
//! - [`correlate`]: picking the feature the pseudo-task predicts.
//! - [`baselines`]: k-nearest-neighbor and logistic-regression references.
//! - [`pipeline`]: end-to-end prompt construction and query execution.
//! - [`experiment`]: multi-seed runs, reports, prompt dumps, cache tooling.

pub mod backend;
pub mod baselines;
pub mod correlate;
pub mod data;
pub mod encode;
pub mod error;
pub mod experiment;
pub mod parse;
pub mod pipeline;
pub mod prompt;
pub mod schema;
pub mod serialize;
pub mod split;

pub use backend::{BackendConfig, BackendKind, ChatExchange, Completion, CompletionCache, CompletionClient};
pub use data::{Cell, LoadOptions, Row, TableDataset};
pub use encode::BaselineEncoder;
pub use error::{Error, Result};
pub use experiment::{ExperimentSpec, MethodReport, RunReport};
pub use pipeline::{PipelineMode, PipelineRun, SourceKind, TargetSelection};
pub use prompt::{assemble, split_segments, Composition};
pub use schema::{ColumnKind, ColumnSpec, DatasetSchema, PromptStyle, RestatementStyle, TaskKind};
pub use serialize::{PromptSegment, SegmentKind, SerializationMode};
pub use split::{make_transfer_split, sample_source_rows, TransferSplit};
