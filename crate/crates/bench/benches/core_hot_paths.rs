//! Benchmarks for the hot paths: neighbor search over a large unlabeled
//! pool, row serialization, baseline encoding, and logistic fitting.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use p2t_core::baselines::{logistic_fit, GdParams};
use p2t_core::schema::{
    ColumnKind, ColumnSpec, DatasetSchema, PromptStyle, RestatementStyle, TaskKind,
};
use p2t_core::serialize::{render_labeled_demo, SerializationMode};
use p2t_core::{BaselineEncoder, Cell, Row};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn bench_schema(features: usize) -> DatasetSchema {
    let mut columns: Vec<ColumnSpec> = (0..features)
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
        description: "outcome label".into(),
        value_glosses: None,
        codes: Some(vec!["class1".into(), "class2".into()]),
    });
    DatasetSchema {
        columns,
        target: "label".into(),
        class_labels: vec![
            ("class1".into(), "a negative case".into()),
            ("class2".into(), "a positive case".into()),
        ],
        task_kind: TaskKind::Classification,
        style: PromptStyle {
            question_prefix: "Question: ".into(),
            clause_opener: "If the ".into(),
            pseudo_ask_question_mark: false,
            restatement: RestatementStyle::ChooseBetween,
            enumerate_with_and: true,
        },
    }
}

fn random_rows(schema: &DatasetSchema, n: usize, seed: u64) -> Vec<Row> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut row = Row::new();
            for column in &schema.columns {
                if column.name == schema.target {
                    let token = if rng.gen_bool(0.5) { "class1" } else { "class2" };
                    row.set(&column.name, Cell::Category(token.into()));
                } else {
                    row.set(&column.name, Cell::Float(rng.gen_range(-10.0..10.0)));
                }
            }
            row
        })
        .collect()
}

fn neighbor_search(c: &mut Criterion) {
    let schema = bench_schema(8);
    let pool = random_rows(&schema, 10_000, 7);
    let anchors = random_rows(&schema, 4, 11);
    let encoder = BaselineEncoder::fit(&schema, &pool).unwrap();
    c.bench_function("neighbor_search_10k_pool", |b| {
        b.iter(|| {
            for anchor in &anchors {
                let (indices, _) = p2t_core::encode::nearest_indices(anchor, &pool, 30, &encoder);
                black_box(indices);
            }
        })
    });
}

fn row_serialization(c: &mut Criterion) {
    let schema = bench_schema(8);
    let rows = random_rows(&schema, 64, 13);
    c.bench_function("render_labeled_demo_64_rows", |b| {
        b.iter(|| {
            for row in &rows {
                let segment =
                    render_labeled_demo(row, &schema, SerializationMode::Descriptive).unwrap();
                black_box(segment);
            }
        })
    });
}

fn baseline_encoding(c: &mut Criterion) {
    let schema = bench_schema(8);
    let rows = random_rows(&schema, 1_000, 17);
    c.bench_function("baseline_encode_1k_rows", |b| {
        b.iter_batched(
            || rows.clone(),
            |rows| {
                let encoder = BaselineEncoder::fit(&schema, &rows).unwrap();
                black_box(encoder.encode(&rows));
            },
            BatchSize::SmallInput,
        )
    });
}

fn logistic_training(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(19);
    let train: Vec<Vec<f64>> =
        (0..64).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<usize> = train.iter().map(|x| usize::from(x[0] + x[1] > 0.0)).collect();
    let params = GdParams { epochs: 100, ..GdParams::default() };
    c.bench_function("logistic_fit_64x8_100_epochs", |b| {
        b.iter(|| black_box(logistic_fit(&train, &labels, 2, &params)))
    });
}

criterion_group!(
    hot_paths,
    neighbor_search,
    row_serialization,
    baseline_encoding,
    logistic_training
);
criterion_main!(hot_paths);
