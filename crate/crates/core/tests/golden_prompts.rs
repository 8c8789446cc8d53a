//! Byte-exact golden tests: the serializer and the pipeline must reproduce
//! the transcribed reference prompts exactly.
//!
//! Golden files are transcriptions of the reference renderings. The only
//! transform applied before comparison is documented whitespace
//! normalization: the transcriptions are inconsistent about whether a value
//! follows `Answer:` with a space, so a space is inserted where it is
//! missing ("Answer:18822.41" → "Answer: 18822.41"; a bare "Answer:" query
//! terminator is untouched), and one trailing newline is trimmed. Nothing
//! else is rewritten.

mod common;

use common::{
    correlation_prompt_diabetes, few_shot_prepared_customers, golden, icl_prompt_from_pipeline,
    icl_prompt_from_segments, load_fixture, scripted,
};
use p2t_core::correlate::identify_with_llm;
use p2t_core::serialize::render_labeled_demo;
use p2t_core::SerializationMode;

#[test]
fn icl_baseline_prompt_matches_golden_listing() {
    let from_segments = icl_prompt_from_segments();
    assert_eq!(from_segments, golden("lift_icl_customers.txt"));
    assert_eq!(icl_prompt_from_pipeline(), from_segments);
}

#[test]
fn correlation_prompt_matches_golden_listing() {
    assert_eq!(common::correlation_prompt_customers(), golden("correlation_customers.txt"));
}

/// One P2T few-shot run over the Customers rows reproduces both the
/// feature-identification prompt and the final few-shot prompt.
#[test]
fn p2t_few_shot_pipeline_matches_both_golden_listings() {
    let (_, prepared) = few_shot_prepared_customers();
    assert_eq!(prepared.f_k.as_deref(), Some("grocery"));
    assert_eq!(prepared.correlation_prompts.len(), 1);
    assert_eq!(prepared.correlation_prompts[0], golden("correlation_customers.txt"));
    assert_eq!(prepared.prompt_for(0).unwrap(), golden("p2t_few_shot_customers.txt"));
}

#[test]
fn p2t_zero_shot_heterogeneous_prompt_matches_golden_listing() {
    assert_eq!(
        common::zero_shot_hetero_prompt(),
        golden("p2t_zero_shot_adult_electricity.txt")
    );
}

#[test]
fn correlation_prompt_matches_authored_golden_figure() {
    let prompt = correlation_prompt_diabetes();
    assert_eq!(prompt, golden("figure2_correlation_diabetes.txt"));

    // The same prompt drives identification end to end.
    let ds = load_fixture("diabetes");
    let mode = SerializationMode::Descriptive;
    let candidates = ds.schema.feature_columns();
    let context = vec![
        render_labeled_demo(&ds.rows[0], &ds.schema, mode).unwrap(),
        render_labeled_demo(&ds.rows[1], &ds.schema, mode).unwrap(),
    ];
    let client = scripted("Glucose");
    let identified =
        identify_with_llm(&context, &candidates, &ds.schema, &ds.schema, mode, &client).unwrap();
    assert_eq!(identified.feature.as_deref(), Some("Glucose"));
    assert_eq!(identified.prompts[0], prompt);
}

/// The normalization helper itself: inserts the space only before a value.
#[test]
fn answer_spacing_normalization_is_minimal() {
    for name in [
        "lift_icl_customers.txt",
        "correlation_customers.txt",
        "p2t_few_shot_customers.txt",
        "p2t_zero_shot_adult_electricity.txt",
        "figure2_correlation_diabetes.txt",
    ] {
        let normalized = golden(name);
        assert!(!normalized.contains("Answer:  "), "{name}: double space introduced");
        assert!(
            !normalized.ends_with("Answer: "),
            "{name}: query terminator must stay bare"
        );
        assert!(!normalized.ends_with('\n'), "{name}: trailing newline must be trimmed");
    }
}
