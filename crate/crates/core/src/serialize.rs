//! Natural-language rendering of rows, demonstrations, task descriptions, and
//! correlation-identification instructions.
//!
//! Every renderer is a pure function of its inputs, so identical inputs give
//! identical bytes. Wording that varies between datasets (question prefix,
//! clause opener, list punctuation, restatement shape) comes from the schema's
//! [`PromptStyle`](crate::schema::PromptStyle); everything else is fixed
//! template text.
//!
//! Answers are always rendered as `Answer: <value>` with a single space, and a
//! bare `Answer:` closes a test query.

use crate::data::Row;
use crate::error::{Error, Result};
use crate::schema::{ColumnSpec, DatasetSchema, RestatementStyle, TaskKind};

/// Which prompt role a rendered piece of text plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Task,
    PseudoDemo,
    LabeledDemo,
    TestQuery,
    CorrelationInstruction,
}

/// A rendered prompt piece with its role.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSegment {
    pub kind: SegmentKind,
    pub text: String,
}

impl PromptSegment {
    fn new(kind: SegmentKind, text: String) -> Self {
        debug_assert!(!text.is_empty(), "segments are never empty");
        PromptSegment { kind, text }
    }
}

/// Column naming: curated descriptions, or anonymous "feature i" / "output y"
/// indicators for datasets without usable descriptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SerializationMode {
    #[default]
    Descriptive,
    Generic,
}

/// Join items as "a, b, and c" ("a, and b" for two; bare item for one).
fn and_list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        _ => format!(
            "{}, and {}",
            items[..items.len() - 1].join(", "),
            items[items.len() - 1]
        ),
    }
}

/// Join items as "a or b" for two, "a, b, or c" beyond.
fn or_list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        2 => format!("{} or {}", items[0], items[1]),
        _ => format!(
            "{}, or {}",
            items[..items.len() - 1].join(", "),
            items[items.len() - 1]
        ),
    }
}

/// List used for feature enumerations: the style decides whether the final
/// item gets ", and".
fn feature_list(items: &[String], schema: &DatasetSchema) -> String {
    if schema.style.enumerate_with_and {
        and_list(items)
    } else {
        items.join(", ")
    }
}

/// "Class1 indicates <gloss>, and class2 indicates <gloss>." with the leading
/// letter capitalized.
fn gloss_sentence(schema: &DatasetSchema) -> String {
    let items: Vec<String> = schema
        .class_labels
        .iter()
        .map(|(token, gloss)| format!("{token} indicates {gloss}"))
        .collect();
    let mut sentence = and_list(&items);
    if let Some(first) = sentence.get(..1) {
        let upper = first.to_uppercase();
        sentence.replace_range(..1, &upper);
    }
    sentence.push('.');
    sentence
}

/// "[class1, class2]" — canonical tokens, plain comma join.
fn token_bracket(schema: &DatasetSchema) -> String {
    format!("[{}]", schema.class_tokens().join(", "))
}

/// "class1 or class2" — tokens for "...its value is ..." sentences.
fn token_or_list(schema: &DatasetSchema) -> String {
    let tokens: Vec<String> = schema.class_tokens().iter().map(|t| t.to_string()).collect();
    or_list(&tokens)
}

/// Display name of a column: its description, or "feature i" in generic mode
/// (i is the 1-based position among the schema's non-target columns).
fn column_display(spec: &ColumnSpec, schema: &DatasetSchema, mode: SerializationMode) -> String {
    match mode {
        SerializationMode::Descriptive => spec.description.clone(),
        SerializationMode::Generic => {
            if spec.name == schema.target {
                "output y".to_string()
            } else {
                let idx = schema
                    .feature_columns()
                    .iter()
                    .position(|c| c.name == spec.name)
                    .expect("feature column belongs to schema");
                format!("feature {}", idx + 1)
            }
        }
    }
}

/// Display name for a column that serves as a question's ask.
fn ask_display(column: &str, schema: &DatasetSchema, mode: SerializationMode) -> Result<String> {
    let spec = schema
        .column(column)
        .ok_or_else(|| Error::SchemaMismatch(format!("unknown ask column {column:?}")))?;
    Ok(column_display(spec, schema, mode))
}

/// Parenthetical code glosses, e.g. " (1 indicates Lisbon, 2 indicates Porto,
/// and 3 indicates Other)". Dropped in generic mode.
fn gloss_paren(spec: &ColumnSpec, mode: SerializationMode) -> String {
    if mode == SerializationMode::Generic {
        return String::new();
    }
    match &spec.value_glosses {
        Some(glosses) if !glosses.is_empty() => {
            let items: Vec<String> = glosses
                .iter()
                .map(|(code, gloss)| format!("{code} indicates {gloss}"))
                .collect();
            format!(" ({})", and_list(&items))
        }
        _ => String::new(),
    }
}

/// The question body up to (and excluding) the closing punctuation:
/// "Question: If the <desc> is <v>, ..., then what is the <ask-desc>".
///
/// Clauses follow schema column order and skip the ask column, the target
/// column, and every missing cell.
fn question_stem(
    row: &Row,
    schema: &DatasetSchema,
    ask_column: &str,
    mode: SerializationMode,
) -> Result<String> {
    let mut clauses = Vec::new();
    for spec in &schema.columns {
        if spec.name == ask_column || spec.name == schema.target {
            continue;
        }
        let Some(value) = row.get(&spec.name).render() else {
            continue; // Missing cells are omitted entirely.
        };
        clauses.push(format!(
            "{}{} is {}",
            column_display(spec, schema, mode),
            gloss_paren(spec, mode),
            value
        ));
    }
    if clauses.is_empty() {
        return Err(Error::EmptyRow);
    }
    let style = &schema.style;
    Ok(format!(
        "{}{}{}, then what is the {}",
        style.question_prefix,
        style.clause_opener,
        clauses.join(", "),
        ask_display(ask_column, schema, mode)?
    ))
}

/// Serialize a row into a question about `ask_column`.
pub fn serialize_question(
    row: &Row,
    schema: &DatasetSchema,
    ask_column: &str,
    mode: SerializationMode,
) -> Result<String> {
    Ok(format!("{}?", question_stem(row, schema, ask_column, mode)?))
}

/// The choice restatement inserted between a question and its answer.
fn restatement(schema: &DatasetSchema, mode: SerializationMode) -> String {
    let tokens = token_bracket(schema);
    let descriptive = mode == SerializationMode::Descriptive;
    match schema.style.restatement {
        RestatementStyle::ChooseBetween => {
            if descriptive {
                format!("Choose between {tokens}. {}", gloss_sentence(schema))
            } else {
                format!("Choose between {tokens}.")
            }
        }
        RestatementStyle::ChoicesSuffix => {
            if descriptive {
                format!("{} Choices: {tokens}.?", gloss_sentence(schema))
            } else {
                format!("Choices: {tokens}.?")
            }
        }
    }
}

/// Render the task description: the step-by-step instruction paragraph and the
/// variable-enumeration paragraph, separated by a blank line.
pub fn render_task_description(schema: &DatasetSchema, mode: SerializationMode) -> PromptSegment {
    let para1 = match schema.task_kind {
        TaskKind::Classification => {
            let base = format!(
                "Read a given information and questions. Think step by step, and then predict \
                 whether its value is {}. You must choose in {}.",
                token_or_list(schema),
                token_bracket(schema)
            );
            if mode == SerializationMode::Descriptive {
                format!("{base} {}", gloss_sentence(schema))
            } else {
                base
            }
        }
        TaskKind::Regression => {
            "Read a given information and questions. Think step by step, and then predict its \
             value."
                .to_string()
        }
    };
    let features = schema.feature_columns();
    let displays: Vec<String> = features
        .iter()
        .map(|spec| column_display(spec, schema, mode))
        .collect();
    let target_display = column_display(schema.target_column(), schema, mode);
    let para2 = format!(
        "The dataset consists of {} input variables: {}. The output variable is the {}.",
        features.len(),
        feature_list(&displays, schema),
        target_display
    );
    PromptSegment::new(SegmentKind::Task, format!("{para1}\n\n{para2}"))
}

/// Render a labeled demonstration: question, restatement, and the answer.
pub fn render_labeled_demo(
    row: &Row,
    schema: &DatasetSchema,
    mode: SerializationMode,
) -> Result<PromptSegment> {
    let stem = question_stem(row, schema, &schema.target, mode)?;
    let answer = row
        .get(&schema.target)
        .render()
        .ok_or_else(|| Error::MissingValue(schema.target.clone()))?;
    let text = match schema.task_kind {
        TaskKind::Classification => {
            format!("{stem}? {} Answer: {answer}", restatement(schema, mode))
        }
        TaskKind::Regression => format!("{stem}? Answer: {answer}"),
    };
    Ok(PromptSegment::new(SegmentKind::LabeledDemo, text))
}

/// Render the test query: a labeled demonstration's shape with the answer left
/// open ("Answer:" with no value).
pub fn render_test_query(
    row: &Row,
    schema: &DatasetSchema,
    mode: SerializationMode,
) -> Result<PromptSegment> {
    let stem = question_stem(row, schema, &schema.target, mode)?;
    let text = match schema.task_kind {
        TaskKind::Classification => {
            format!("{stem}? {} Answer:", restatement(schema, mode))
        }
        TaskKind::Regression => format!("{stem}? Answer:"),
    };
    Ok(PromptSegment::new(SegmentKind::TestQuery, text))
}

/// Render a pseudo-demonstration: predict `f_k` from the remaining features.
///
/// The clause list skips `f_k` itself, the schema's own label column, and
/// missing cells. The ask's closing punctuation comes from the style ("." in
/// the curated-description house style, "?" in the raw-name style), and the
/// answer is `f_k`'s rendered value.
pub fn render_pseudo_demo(
    row: &Row,
    schema: &DatasetSchema,
    f_k: &str,
    mode: SerializationMode,
) -> Result<PromptSegment> {
    let answer = row
        .get(f_k)
        .render()
        .ok_or_else(|| Error::MissingValue(f_k.to_string()))?;
    let stem = question_stem(row, schema, f_k, mode)?;
    let punct = if schema.style.pseudo_ask_question_mark {
        "?"
    } else {
        "."
    };
    Ok(PromptSegment::new(
        SegmentKind::PseudoDemo,
        format!("{stem}{punct} Answer: {answer}"),
    ))
}

/// Render the correlation-identification instruction.
///
/// The segment's canonical text is `opening + "\n\n" + closing`; assembly
/// wraps the labeled demonstrations between the two parts. The opening is two
/// lines: the choose-the-most-important-feature instruction with the candidate
/// list, then the variable enumeration with the class glosses. `candidates`
/// are the columns offered as choices (display naming follows `mode` against
/// `source_schema`); `target_schema` supplies the class tokens, glosses, and
/// list style.
pub fn render_correlation_instruction(
    candidates: &[&ColumnSpec],
    source_schema: &DatasetSchema,
    target_schema: &DatasetSchema,
    mode: SerializationMode,
) -> Result<PromptSegment> {
    if candidates.is_empty() {
        return Err(Error::NoCandidateFeatures);
    }
    let displays: Vec<String> = candidates
        .iter()
        .map(|spec| column_display(spec, source_schema, mode))
        .collect();
    let choice_list = feature_list(&displays, target_schema);

    let (predict_clause, closing_predict) = match target_schema.task_kind {
        TaskKind::Classification => {
            let tokens = token_or_list(target_schema);
            (
                format!("predict whether its value is {tokens}"),
                format!("predict its value is {tokens}"),
            )
        }
        TaskKind::Regression => ("predict its value".to_string(), "predict its value".to_string()),
    };
    let line1 = format!(
        "Read a given information and questions. Think step by step, and then choose the most \
         important feature to {predict_clause}. You must choose in [{choice_list}]."
    );
    let output_clause = match (target_schema.task_kind, mode) {
        (TaskKind::Classification, SerializationMode::Descriptive) => {
            format!("The output variable is: {}", gloss_sentence(target_schema))
        }
        _ => {
            let target_display =
                column_display(target_schema.target_column(), target_schema, mode);
            format!("The output variable is the {target_display}.")
        }
    };
    let line2 = format!(
        "The dataset consists of {} input variables: {}. {output_clause}",
        candidates.len(),
        feature_list(&displays, target_schema)
    );
    let closing = format!(
        "Choose the most important feature to {closing_predict}. Answer:"
    );
    Ok(PromptSegment::new(
        SegmentKind::CorrelationInstruction,
        format!("{line1}\n{line2}\n\n{closing}"),
    ))
}

/// Display strings for correlation candidates, in candidate order. Used to
/// map a parsed choice back to its column.
pub fn candidate_displays(
    candidates: &[&ColumnSpec],
    source_schema: &DatasetSchema,
    mode: SerializationMode,
) -> Vec<String> {
    candidates
        .iter()
        .map(|spec| column_display(spec, source_schema, mode))
        .collect()
}
