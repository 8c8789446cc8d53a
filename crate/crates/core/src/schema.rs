//! Dataset schemas: column specifications, class labels, and the per-dataset
//! prompt style.
//!
//! A schema is loaded from a JSON manifest and is the single source of truth
//! for column order, column kinds, natural-language descriptions, admissible
//! category codes, and the wording knobs that differ between datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage/encoding kind of a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// One column: its name, kind, prose description, and (for categorical
/// columns) the admissible codes with optional glosses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Natural-language description used when serializing rows,
    /// e.g. "annual spending on fresh product". For datasets without curated
    /// descriptions this is simply the column name.
    pub description: String,
    /// Gloss per category code, e.g. {"1": "Lisbon"}. Rendered parenthetically
    /// as "(1 indicates Lisbon, ...)" after the description. Keys are kept
    /// sorted so rendering is deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_glosses: Option<BTreeMap<String, String>>,
    /// Admissible category codes. May be omitted when `value_glosses` is
    /// present, in which case the gloss keys are the admissible set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<String>>,
}

impl ColumnSpec {
    /// The admissible code set for a categorical column, in declaration order
    /// (`codes` wins over gloss keys when both are present).
    pub fn admissible_codes(&self) -> Vec<&str> {
        if let Some(codes) = &self.codes {
            codes.iter().map(String::as_str).collect()
        } else if let Some(glosses) = &self.value_glosses {
            glosses.keys().map(String::as_str).collect()
        } else {
            Vec::new()
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }
}

/// Whether the target column is a class label or a real value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// How the choice restatement after a question's ask is phrased.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestatementStyle {
    /// "Choose between [class1, class2]. <gloss sentence>"
    ChooseBetween,
    /// "<gloss sentence> Choices: [class1, class2].?"
    ChoicesSuffix,
}

/// Per-dataset wording knobs. Defaults reproduce the curated-description
/// house style; raw-column-name datasets override them in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptStyle {
    /// Text before the serialized clauses, including any trailing space.
    pub question_prefix: String,
    /// Clause opener including the article, e.g. "If the " or "When ".
    pub clause_opener: String,
    /// Whether a pseudo-demonstration's ask ends with "?" instead of ".".
    pub pseudo_ask_question_mark: bool,
    pub restatement: RestatementStyle,
    /// Whether feature enumerations put ", and" before the final item.
    pub enumerate_with_and: bool,
}

impl Default for PromptStyle {
    fn default() -> Self {
        PromptStyle {
            question_prefix: "Question: ".to_string(),
            clause_opener: "If the ".to_string(),
            pseudo_ask_question_mark: false,
            restatement: RestatementStyle::ChooseBetween,
            enumerate_with_and: true,
        }
    }
}

/// A full dataset schema: ordered columns, the label column, the class-token
/// vocabulary, and the prompt style.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
    /// Name of the label column. Must appear exactly once in `columns`.
    pub target: String,
    /// Ordered (canonical token, gloss) pairs, e.g.
    /// ("class1", "Horeca (Hotel, Restaurant, Cafe) channel").
    /// Empty for regression tasks.
    pub class_labels: Vec<(String, String)>,
    pub task_kind: TaskKind,
    #[serde(default)]
    pub style: PromptStyle,
}

impl DatasetSchema {
    /// Parse a manifest from JSON text and validate it.
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DatasetSchema =
            serde_json::from_str(text).map_err(|e| Error::json("schema manifest", e))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Load and validate a manifest file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Check every schema invariant; called by the loaders.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for col in &self.columns {
            if col.name.is_empty() {
                return Err(Error::SchemaMismatch("empty column name".into()));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
            match col.kind {
                ColumnKind::Numeric => {
                    if col.value_glosses.is_some() {
                        return Err(Error::SchemaMismatch(format!(
                            "numeric column {:?} carries value_glosses",
                            col.name
                        )));
                    }
                }
                ColumnKind::Categorical => {
                    if col.admissible_codes().is_empty() {
                        return Err(Error::SchemaMismatch(format!(
                            "categorical column {:?} enumerates no admissible codes",
                            col.name
                        )));
                    }
                }
            }
        }
        let target_count = self
            .columns
            .iter()
            .filter(|c| c.name == self.target)
            .count();
        if target_count != 1 {
            return Err(Error::SchemaMismatch(format!(
                "target {:?} appears {} times in columns",
                self.target, target_count
            )));
        }
        match self.task_kind {
            TaskKind::Classification => {
                if self.class_labels.len() < 2 {
                    return Err(Error::SchemaMismatch(
                        "classification schema needs at least 2 class labels".into(),
                    ));
                }
                let mut tokens = BTreeSet::new();
                for (token, _) in &self.class_labels {
                    if !tokens.insert(token.as_str()) {
                        return Err(Error::SchemaMismatch(format!(
                            "duplicate class token {:?}",
                            token
                        )));
                    }
                }
                // The label column stores canonical class tokens, so every
                // token must be admissible there.
                let target_col = self.column(&self.target).expect("target checked above");
                if target_col.kind == ColumnKind::Categorical {
                    let admissible: BTreeSet<&str> =
                        target_col.admissible_codes().into_iter().collect();
                    for (token, _) in &self.class_labels {
                        if !admissible.contains(token.as_str()) {
                            return Err(Error::SchemaMismatch(format!(
                                "class token {:?} is not an admissible code of target {:?}",
                                token, self.target
                            )));
                        }
                    }
                } else {
                    return Err(Error::SchemaMismatch(format!(
                        "classification target {:?} must be a categorical column",
                        self.target
                    )));
                }
            }
            TaskKind::Regression => {
                if !self.class_labels.is_empty() {
                    return Err(Error::SchemaMismatch(
                        "regression schema must not declare class labels".into(),
                    ));
                }
                let target_col = self.column(&self.target).expect("target checked above");
                if target_col.kind != ColumnKind::Numeric {
                    return Err(Error::SchemaMismatch(format!(
                        "regression target {:?} must be a numeric column",
                        self.target
                    )));
                }
            }
        }
        Ok(())
    }

    /// Look up a column by name.
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// All non-target columns in schema order.
    pub fn feature_columns(&self) -> Vec<&ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.name != self.target)
            .collect()
    }

    /// Canonical class tokens in declaration order.
    pub fn class_tokens(&self) -> Vec<&str> {
        self.class_labels.iter().map(|(t, _)| t.as_str()).collect()
    }

    /// Index of a class token in the declared order.
    pub fn class_index(&self, token: &str) -> Option<usize> {
        self.class_labels.iter().position(|(t, _)| t == token)
    }

    /// The target column's specification.
    pub fn target_column(&self) -> &ColumnSpec {
        self.column(&self.target)
            .expect("validated schema always contains its target")
    }
}
