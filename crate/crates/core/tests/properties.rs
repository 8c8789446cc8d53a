//! Property tests for the library's unconditional invariants: parsers are
//! total, splits partition their input deterministically, masking respects
//! the label, and the token estimate is monotone.

use proptest::prelude::*;

use p2t_core::data::{Cell, Row, TableDataset};
use p2t_core::parse::{parse_class, parse_feature, parse_number, ParsedAnswer};
use p2t_core::schema::{ColumnKind, ColumnSpec, DatasetSchema, PromptStyle, TaskKind};
use p2t_core::split::mask_features;
use p2t_core::{backend::estimate_tokens, make_transfer_split};

fn two_class_schema(feature_count: usize) -> DatasetSchema {
    let mut columns: Vec<ColumnSpec> = (0..feature_count)
        .map(|i| ColumnSpec {
            name: format!("f{i}"),
            kind: ColumnKind::Numeric,
            description: format!("measurement {i}"),
            value_glosses: None,
            codes: None,
        })
        .collect();
    columns.push(ColumnSpec {
        name: "label".into(),
        kind: ColumnKind::Categorical,
        description: "outcome".into(),
        value_glosses: None,
        codes: Some(vec!["class1".into(), "class2".into()]),
    });
    DatasetSchema {
        columns,
        target: "label".into(),
        class_labels: vec![
            ("class1".into(), "first kind".into()),
            ("class2".into(), "second kind".into()),
        ],
        task_kind: TaskKind::Classification,
        style: PromptStyle::default(),
    }
}

fn dataset(schema: &DatasetSchema, rows: usize) -> TableDataset {
    let rows: Vec<Row> = (0..rows)
        .map(|i| {
            let mut row = Row::new();
            for col in &schema.columns {
                if col.name == schema.target {
                    let token = if i % 2 == 0 { "class1" } else { "class2" };
                    row.set(&col.name, Cell::Category(token.into()));
                } else {
                    row.set(&col.name, Cell::Float(i as f64));
                }
            }
            row
        })
        .collect();
    TableDataset::new(schema.clone(), rows, "synthetic").unwrap()
}

proptest! {
    /// Class parsing is total: any response yields either a declared class or
    /// an unparseable echo, never a panic or an out-of-range index.
    #[test]
    fn parse_class_is_total(response in ".{0,200}") {
        let tokens: Vec<String> =
            ["class1", "class2", "class3"].iter().map(|s| s.to_string()).collect();
        match parse_class(&response, &tokens) {
            ParsedAnswer::Class { index, token } => {
                prop_assert!(index < tokens.len());
                prop_assert_eq!(token, tokens[index].clone());
            }
            ParsedAnswer::Unparseable(echo) => prop_assert_eq!(echo, response),
            other => prop_assert!(false, "unexpected variant {other:?}"),
        }
    }

    /// Number parsing is total and only ever returns finite values.
    #[test]
    fn parse_number_is_total_and_finite(response in ".{0,200}") {
        match parse_number(&response) {
            ParsedAnswer::Number(x) => prop_assert!(x.is_finite()),
            ParsedAnswer::Unparseable(echo) => prop_assert_eq!(echo, response),
            other => prop_assert!(false, "unexpected variant {other:?}"),
        }
    }

    /// Feature parsing never invents a candidate.
    #[test]
    fn parse_feature_stays_in_the_candidate_set(response in ".{0,200}") {
        let candidates: Vec<String> =
            ["alpha width", "beta height", "gamma depth"].iter().map(|s| s.to_string()).collect();
        match parse_feature(&response, &candidates) {
            ParsedAnswer::Feature { index, choice } => {
                prop_assert!(index < candidates.len());
                prop_assert_eq!(choice, candidates[index].clone());
            }
            ParsedAnswer::Unparseable(echo) => prop_assert_eq!(echo, response),
            other => prop_assert!(false, "unexpected variant {other:?}"),
        }
    }

    /// A trailing "answer" marker redirects class parsing to the text after
    /// it whenever a class token follows the marker.
    #[test]
    fn parse_class_prefers_text_after_the_answer_marker(
        prefix in "[a-z ]{0,40}",
        pick in 0usize..2,
    ) {
        let tokens: Vec<String> = ["class1", "class2"].iter().map(|s| s.to_string()).collect();
        let wrong = &tokens[1 - pick];
        let right = &tokens[pick];
        let response = format!("{prefix}{wrong} maybe. Answer: {right}");
        match parse_class(&response, &tokens) {
            ParsedAnswer::Class { index, .. } => prop_assert_eq!(index, pick),
            other => prop_assert!(false, "should parse, got {other:?}"),
        }
    }

    /// Splits partition the dataset: every row lands in exactly one of
    /// shots/pool/test, shots keep labels, the pool is label-free.
    #[test]
    fn split_partitions_rows(rows in 8usize..60, shots in 0usize..3, seed in 0u64..500) {
        let schema = two_class_schema(3);
        let ds = dataset(&schema, rows);
        let split = make_transfer_split(&ds, shots, 0.2, seed).unwrap();
        let total = split.labeled_shots.len() + split.unlabeled_pool.len() + split.test_set.len();
        prop_assert_eq!(total, rows);
        // Rows are identifiable by their unique f0 value.
        let mut seen: Vec<f64> = split
            .labeled_shots
            .iter()
            .chain(&split.unlabeled_pool)
            .chain(&split.test_set)
            .map(|r| r.get("f0").as_f64().unwrap())
            .collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        prop_assert_eq!(seen.len(), rows, "duplicate or lost rows");
        for shot in &split.labeled_shots {
            prop_assert!(shot.class_token("label").is_some());
        }
        for pooled in &split.unlabeled_pool {
            prop_assert!(matches!(pooled.get("label"), Cell::Missing));
        }
        for test_row in &split.test_set {
            prop_assert!(test_row.class_token("label").is_some());
        }
    }

    /// Same seed, same split; the draw is a pure function of its inputs.
    #[test]
    fn split_is_deterministic_per_seed(rows in 8usize..40, seed in 0u64..500) {
        let schema = two_class_schema(2);
        let ds = dataset(&schema, rows);
        let a = make_transfer_split(&ds, 1, 0.2, seed).unwrap();
        let b = make_transfer_split(&ds, 1, 0.2, seed).unwrap();
        prop_assert_eq!(a.labeled_shots, b.labeled_shots);
        prop_assert_eq!(a.unlabeled_pool, b.unlabeled_pool);
        prop_assert_eq!(a.test_set, b.test_set);
    }

    /// Masking never touches the label and masks exactly
    /// floor(fraction × feature count) cells.
    #[test]
    fn masking_spares_the_label_and_hits_its_quota(
        features in 1usize..8,
        fraction in 0.0f64..=1.0,
        seed in 0u64..1000,
    ) {
        let schema = two_class_schema(features);
        let ds = dataset(&schema, 4);
        let row = &ds.rows[0];
        let masked = mask_features(row, &schema, fraction, seed).unwrap();
        prop_assert_eq!(masked.class_token("label"), row.class_token("label"));
        let missing = (0..features)
            .filter(|i| matches!(masked.get(&format!("f{i}")), Cell::Missing))
            .count();
        prop_assert_eq!(missing, (fraction * features as f64).floor() as usize);
    }

    /// Appending text never shrinks the token estimate.
    #[test]
    fn token_estimate_is_monotone_under_append(a in ".{0,120}", b in ".{0,120}") {
        let joined = format!("{a}{b}");
        prop_assert!(estimate_tokens(&joined) >= estimate_tokens(&a));
        prop_assert!(estimate_tokens(&joined) >= estimate_tokens(&b));
    }
}
