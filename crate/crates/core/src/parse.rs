//! Extraction of class tokens, feature choices, and numeric values from
//! free-form model responses.
//!
//! Parsing is total: every input text maps to exactly one [`ParsedAnswer`]
//! variant, with `Unparseable` carrying the raw text instead of failing.
//! Scoring decisions (unparseable counts as incorrect, retry policies) belong
//! to the caller.

use std::sync::OnceLock;

use regex::Regex;

/// The result of parsing a model response.
#[derive(Clone, Debug, PartialEq)]
pub enum ParsedAnswer {
    /// A class token from the offered set (by index into the offered list).
    Class { index: usize, token: String },
    /// A feature choice from the offered list (by index into the choices).
    Feature { index: usize, choice: String },
    /// A numeric value.
    Number(f64),
    /// Nothing recognizable; carries the raw response.
    Unparseable(String),
}

impl ParsedAnswer {
    pub fn is_unparseable(&self) -> bool {
        matches!(self, ParsedAnswer::Unparseable(_))
    }
}

/// Byte range of the last case-insensitive "answer" occurrence's end in
/// `lower`, or 0 when absent. Distances are measured from this anchor.
fn answer_anchor(lower: &str) -> usize {
    lower.rfind("answer").map(|start| start + "answer".len()).unwrap_or(0)
}

/// All case-insensitive occurrence start positions of `needle` in `lower`
/// (both already lowercased).
fn occurrences(lower: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    lower.match_indices(needle).map(|(pos, _)| pos).collect()
}

/// Find the class token the response selects.
///
/// Case-insensitive containment; when exactly one offered token occurs it
/// wins. When several occur, the occurrence nearest the end of the final
/// "Answer" wins; distance ties prefer the later occurrence (the model's
/// final word), and same-position ties prefer the longer token (so "class12"
/// beats its prefix "class1").
pub fn parse_class(response: &str, tokens: &[String]) -> ParsedAnswer {
    let lower = response.to_lowercase();
    let anchor = answer_anchor(&lower) as isize;

    // (distance, position, token length, token index) for every occurrence.
    let mut best: Option<(usize, usize, usize, usize)> = None;
    for (index, token) in tokens.iter().enumerate() {
        let needle = token.to_lowercase();
        for pos in occurrences(&lower, &needle) {
            let distance = (pos as isize - anchor).unsigned_abs();
            let candidate = (distance, pos, needle.len(), index);
            best = Some(match best {
                None => candidate,
                Some(current) => {
                    let (d, p, l, _) = current;
                    if candidate.0 < d
                        || (candidate.0 == d && candidate.1 > p)
                        || (candidate.0 == d && candidate.1 == p && candidate.2 > l)
                    {
                        candidate
                    } else {
                        current
                    }
                }
            });
        }
    }
    match best {
        Some((_, _, _, index)) => ParsedAnswer::Class { index, token: tokens[index].clone() },
        None => ParsedAnswer::Unparseable(response.to_string()),
    }
}

/// Find the feature choice the response selects: the longest choice string
/// occurring case-insensitively as a substring. Length ties go to the earlier
/// entry in the offered list.
pub fn parse_feature(response: &str, choices: &[String]) -> ParsedAnswer {
    let lower = response.to_lowercase();
    let mut best: Option<(usize, usize)> = None; // (choice length, index)
    for (index, choice) in choices.iter().enumerate() {
        let needle = choice.to_lowercase();
        if needle.is_empty() || !lower.contains(&needle) {
            continue;
        }
        let candidate = (needle.len(), index);
        best = Some(match best {
            None => candidate,
            Some((len, idx)) => {
                if candidate.0 > len {
                    candidate
                } else {
                    (len, idx)
                }
            }
        });
    }
    match best {
        Some((_, index)) => ParsedAnswer::Feature { index, choice: choices[index].clone() },
        None => ParsedAnswer::Unparseable(response.to_string()),
    }
}

fn number_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"[+-]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)").expect("static pattern compiles")
    })
}

/// Find the numeric value the response states: the first decimal literal
/// after the last "Answer" token, else the first anywhere. Thousands commas
/// are stripped ("22,900.94" → 22900.94).
pub fn parse_number(response: &str) -> ParsedAnswer {
    // Digits and sign/comma/point are unaffected by lowercasing, so matching
    // against the lowercased text keeps byte offsets consistent with the
    // anchor (which is measured in that same string).
    let lower = response.to_lowercase();
    let anchor = answer_anchor(&lower);
    let pattern = number_pattern();
    let matched = pattern
        .find(&lower[anchor..])
        .map(|m| m.as_str())
        .or_else(|| pattern.find(&lower).map(|m| m.as_str()));
    match matched {
        Some(text) => {
            let cleaned: String = text.chars().filter(|&c| c != ',').collect();
            match cleaned.parse::<f64>() {
                Ok(value) if value.is_finite() => ParsedAnswer::Number(value),
                _ => ParsedAnswer::Unparseable(response.to_string()),
            }
        }
        None => ParsedAnswer::Unparseable(response.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens() -> Vec<String> {
        vec!["class1".to_string(), "class2".to_string()]
    }

    #[test]
    fn class_exact_match() {
        assert_eq!(
            parse_class("class1", &tokens()),
            ParsedAnswer::Class { index: 0, token: "class1".into() }
        );
    }

    #[test]
    fn class_case_insensitive_containment() {
        assert_eq!(
            parse_class("The answer is Class2.", &tokens()),
            ParsedAnswer::Class { index: 1, token: "class2".into() }
        );
    }

    #[test]
    fn class_nearest_to_last_answer() {
        assert_eq!(
            parse_class("class1 is wrong; Answer: class2", &tokens()),
            ParsedAnswer::Class { index: 1, token: "class2".into() }
        );
    }

    #[test]
    fn class_nearest_wins_over_later() {
        // "Answer: class1" sits between mention of class2 before and after;
        // the token adjacent to the final Answer wins.
        let text = "Maybe class2. Answer: class1. Though class2 was tempting.";
        // anchor at the end of "Answer"; class1 at distance 2, trailing
        // class2 further away.
        assert_eq!(
            parse_class(text, &tokens()),
            ParsedAnswer::Class { index: 0, token: "class1".into() }
        );
    }

    #[test]
    fn class_no_answer_token_anchors_at_start() {
        // Without any "answer", the earliest occurrence is nearest to the
        // anchor at position 0.
        assert_eq!(
            parse_class("class2 then class1", &tokens()),
            ParsedAnswer::Class { index: 1, token: "class2".into() }
        );
    }

    #[test]
    fn class_prefix_token_loses_to_longer_at_same_position() {
        let overlapping = vec!["class1".to_string(), "class12".to_string()];
        assert_eq!(
            parse_class("Answer: class12", &overlapping),
            ParsedAnswer::Class { index: 1, token: "class12".into() }
        );
    }

    #[test]
    fn class_unparseable() {
        assert!(parse_class("I refuse to answer.", &tokens()).is_unparseable());
    }

    #[test]
    fn class_never_outside_offered_set() {
        let parsed = parse_class("definitely class3", &tokens());
        match parsed {
            ParsedAnswer::Class { ref token, .. } => {
                // "class3" contains no offered token... except as substring
                // rules allow; whatever returns must be an offered token.
                assert!(tokens().contains(token));
            }
            ParsedAnswer::Unparseable(_) => {}
            other => panic!("unexpected variant {other:?}"),
        }
    }

    #[test]
    fn feature_exact() {
        let choices =
            vec!["annual spending on grocery products".to_string(), "customer's region".to_string()];
        assert_eq!(
            parse_feature("annual spending on grocery products", &choices),
            ParsedAnswer::Feature { index: 0, choice: choices[0].clone() }
        );
    }

    #[test]
    fn feature_longest_substring_wins() {
        let choices = vec!["spending".to_string(), "annual spending on fresh product".to_string()];
        assert_eq!(
            parse_feature("It is the annual spending on fresh product.", &choices),
            ParsedAnswer::Feature { index: 1, choice: choices[1].clone() }
        );
    }

    #[test]
    fn feature_tie_prefers_first_choice() {
        let choices = vec!["aaa".to_string(), "bbb".to_string()];
        assert_eq!(
            parse_feature("aaa or bbb", &choices),
            ParsedAnswer::Feature { index: 0, choice: "aaa".into() }
        );
    }

    #[test]
    fn feature_unparseable() {
        let choices = vec!["Insulin".to_string()];
        assert!(parse_feature("I cannot decide.", &choices).is_unparseable());
    }

    #[test]
    fn number_after_answer() {
        assert_eq!(parse_number("Answer: 9794.0"), ParsedAnswer::Number(9794.0));
    }

    #[test]
    fn number_comma_stripped() {
        assert_eq!(parse_number("roughly 22,900.94"), ParsedAnswer::Number(22900.94));
    }

    #[test]
    fn number_prefers_literal_after_last_answer() {
        assert_eq!(parse_number("5 ideas. Answer: 3.97"), ParsedAnswer::Number(3.97));
    }

    #[test]
    fn number_falls_back_to_first_anywhere() {
        assert_eq!(parse_number("18822.41 — final answer."), ParsedAnswer::Number(18822.41));
    }

    #[test]
    fn number_negative_and_bare_fraction() {
        assert_eq!(parse_number("Answer: -4.5"), ParsedAnswer::Number(-4.5));
        assert_eq!(parse_number("Answer: .75"), ParsedAnswer::Number(0.75));
    }

    #[test]
    fn number_unparseable() {
        assert!(parse_number("no idea").is_unparseable());
    }

    #[test]
    fn parsing_is_total() {
        for text in ["", "üñïçødé Answer: 🤖", "answer answer answer", "   "] {
            let _ = parse_class(text, &tokens());
            let _ = parse_feature(text, &["x".to_string()]);
            let _ = parse_number(text);
        }
    }
}
