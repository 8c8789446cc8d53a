//! Shared helpers for the integration tests: fixture loading, golden-file
//! normalization, and the reference prompt constructions used by both the
//! per-listing golden tests and the acceptance gate.
#![allow(dead_code)]

use std::path::PathBuf;

use p2t_core::correlate::correlation_prompt;
use p2t_core::data::load_csv;
use p2t_core::pipeline::{Pipeline, PipelineMode, PredictionMethod, PreparedRun};
use p2t_core::serialize::{render_labeled_demo, render_task_description, render_test_query};
use p2t_core::{
    assemble, CompletionClient, SerializationMode, SourceKind, TableDataset, TargetSelection,
    TransferSplit,
};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_fixture(stem: &str) -> TableDataset {
    load_csv(
        fixture_path(&format!("{stem}.csv")),
        fixture_path(&format!("{stem}.schema.json")),
    )
    .expect("fixture loads")
}

/// Golden file content after the documented normalization: insert the space
/// after "Answer:" where a value follows it directly, and trim the trailing
/// newline. Nothing else is rewritten.
pub fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let raw = std::fs::read_to_string(&path).expect("golden file exists");
    let mut out = String::with_capacity(raw.len() + 8);
    let mut rest = raw.as_str();
    while let Some(pos) = rest.find("Answer:") {
        let after = pos + "Answer:".len();
        out.push_str(&rest[..after]);
        rest = &rest[after..];
        if rest.chars().next().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
    }
    out.push_str(rest);
    out.trim_end_matches('\n').to_string()
}

pub fn scripted(answer: &'static str) -> CompletionClient {
    CompletionClient::scripted(move |_| answer.to_string())
}

/// The plain in-context-learning prompt built from explicit segments.
pub fn icl_prompt_from_segments() -> String {
    let ds = load_fixture("customers");
    let mode = SerializationMode::Descriptive;
    let segments = vec![
        render_task_description(&ds.schema, mode),
        render_labeled_demo(&ds.rows[0], &ds.schema, mode).unwrap(),
        render_labeled_demo(&ds.rows[1], &ds.schema, mode).unwrap(),
        render_test_query(&ds.rows[2], &ds.schema, mode).unwrap(),
    ];
    assemble(&segments).unwrap()
}

/// The same prompt built through the pipeline over an explicit split.
pub fn icl_prompt_from_pipeline() -> String {
    let ds = load_fixture("customers");
    let split = TransferSplit {
        labeled_shots: vec![ds.rows[0].clone(), ds.rows[1].clone()],
        unlabeled_pool: vec![],
        test_set: vec![ds.rows[2].clone()],
        seed: 0,
    };
    let mode = PipelineMode::default();
    let pipeline = Pipeline { target: &ds, source: None, mode: &mode };
    let prepared = pipeline.prepare(&split, &scripted("class1")).unwrap();
    prepared.prompt_for(0).unwrap()
}

/// The feature-identification prompt over the two labeled rows, class2 first.
pub fn correlation_prompt_customers() -> String {
    let ds = load_fixture("customers");
    let mode = SerializationMode::Descriptive;
    let candidates = ds.schema.feature_columns();
    let context = vec![
        render_labeled_demo(&ds.rows[1], &ds.schema, mode).unwrap(),
        render_labeled_demo(&ds.rows[0], &ds.schema, mode).unwrap(),
    ];
    correlation_prompt(&context, &candidates, &ds.schema, &ds.schema, mode).unwrap()
}

/// A full few-shot transfer run over the Customers rows. The returned run
/// carries both the identification prompt and the final prediction prompt.
pub fn few_shot_prepared_customers() -> (TableDataset, PreparedRun) {
    let ds = load_fixture("customers");
    let split = TransferSplit {
        labeled_shots: vec![ds.rows[1].clone(), ds.rows[0].clone()],
        unlabeled_pool: vec![ds.rows[3].clone(), ds.rows[4].clone()],
        test_set: vec![ds.rows[2].clone()],
        seed: 0,
    };
    let mode = PipelineMode {
        prediction: PredictionMethod::P2t,
        source: SourceKind::UnlabeledSame,
        target_selection: TargetSelection::LlmIdentified,
        neighbors_per_shot: 1,
        ..PipelineMode::default()
    };
    let pipeline = Pipeline { target: &ds, source: None, mode: &mode };
    let client = scripted("annual spending on grocery products");
    let prepared = pipeline.prepare(&split, &client).unwrap();
    (ds, prepared)
}

/// The zero-shot heterogeneous prompt: foreign-schema pseudo-demonstrations
/// ahead of the target-task test query.
pub fn zero_shot_hetero_prompt() -> String {
    let target = load_fixture("adult");
    let source = load_fixture("electricity");
    let split = TransferSplit {
        labeled_shots: vec![],
        unlabeled_pool: vec![],
        test_set: vec![target.rows[0].clone()],
        seed: 0,
    };
    let mode = PipelineMode {
        prediction: PredictionMethod::P2t,
        shots: 0,
        source: SourceKind::Heterogeneous { dataset: "electricity".into() },
        target_selection: TargetSelection::Fixed { name: "ave_monthly_income".into() },
        ..PipelineMode::default()
    };
    let pipeline = Pipeline { target: &target, source: Some(&source), mode: &mode };
    let prepared = pipeline.prepare(&split, &scripted("class1")).unwrap();
    prepared.prompt_for(0).unwrap()
}

/// The authored correlation figure over the diabetes rows.
pub fn correlation_prompt_diabetes() -> String {
    let ds = load_fixture("diabetes");
    let mode = SerializationMode::Descriptive;
    let candidates = ds.schema.feature_columns();
    let context = vec![
        render_labeled_demo(&ds.rows[0], &ds.schema, mode).unwrap(),
        render_labeled_demo(&ds.rows[1], &ds.schema, mode).unwrap(),
    ];
    correlation_prompt(&context, &candidates, &ds.schema, &ds.schema, mode).unwrap()
}

/// All five golden comparisons as (name, actual, expected) triples.
pub fn golden_triples() -> Vec<(&'static str, String, String)> {
    let (_, few_shot) = few_shot_prepared_customers();
    vec![
        (
            "lift_icl_customers.txt",
            icl_prompt_from_segments(),
            golden("lift_icl_customers.txt"),
        ),
        (
            "correlation_customers.txt",
            correlation_prompt_customers(),
            golden("correlation_customers.txt"),
        ),
        (
            "p2t_few_shot_customers.txt",
            few_shot.prompt_for(0).unwrap(),
            golden("p2t_few_shot_customers.txt"),
        ),
        (
            "p2t_zero_shot_adult_electricity.txt",
            zero_shot_hetero_prompt(),
            golden("p2t_zero_shot_adult_electricity.txt"),
        ),
        (
            "figure2_correlation_diabetes.txt",
            correlation_prompt_diabetes(),
            golden("figure2_correlation_diabetes.txt"),
        ),
    ]
}
