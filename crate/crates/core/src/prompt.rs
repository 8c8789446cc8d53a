//! Prompt assembly: validated segment orders and the joining rules that turn
//! an ordered list of [`PromptSegment`]s into the final prompt string.
//!
//! Only a handful of segment patterns are sanctioned; [`Composition::classify`]
//! recognizes which pattern a sequence matches and [`assemble`] rejects
//! everything else. Assembly is reversible per composition:
//! [`split_segments`] recovers the original segment texts from an assembled
//! prompt, which pins down the layout exactly.

use crate::error::{Error, Result};
use crate::serialize::{PromptSegment, SegmentKind};

/// The sanctioned prompt shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    /// Task description, labeled demonstrations, test query.
    IclBaseline,
    /// Task description, pseudo-demonstrations, labeled demonstrations, test
    /// query.
    P2tFewShot,
    /// Task description, pseudo-demonstrations, test query (no labels at all).
    P2tZeroShot,
    /// Labeled demonstrations wrapped by the correlation instruction.
    Correlation,
    /// Task description followed by the correlation instruction (no labels).
    CorrelationZeroShot,
}

/// Count the run lengths of each kind in the canonical order
/// [Task, Pseudo, Labeled, Test, Correlation], rejecting interleavings.
fn run_lengths(segments: &[PromptSegment]) -> Option<[usize; 5]> {
    fn rank(kind: SegmentKind) -> usize {
        match kind {
            SegmentKind::Task => 0,
            SegmentKind::PseudoDemo => 1,
            SegmentKind::LabeledDemo => 2,
            SegmentKind::TestQuery => 3,
            SegmentKind::CorrelationInstruction => 4,
        }
    }
    let mut counts = [0usize; 5];
    let mut last_rank = 0usize;
    for segment in segments {
        let r = rank(segment.kind);
        if counts[r] > 0 && r != last_rank {
            return None; // The kind appeared, stopped, and appeared again.
        }
        if counts.iter().skip(r + 1).any(|&c| c > 0) {
            return None; // A later kind already appeared.
        }
        counts[r] += 1;
        last_rank = r;
    }
    Some(counts)
}

impl Composition {
    /// Classify a segment sequence, or explain why it is not sanctioned.
    pub fn classify(segments: &[PromptSegment]) -> Result<Composition> {
        let describe = |segments: &[PromptSegment]| {
            let kinds: Vec<String> = segments.iter().map(|s| format!("{:?}", s.kind)).collect();
            kinds.join(", ")
        };
        let Some([task, pseudo, labeled, test, cor]) = run_lengths(segments) else {
            return Err(Error::Composition(format!(
                "segments out of order: [{}]",
                describe(segments)
            )));
        };
        let composition = match (task, pseudo, labeled, test, cor) {
            (1, 0, _, 1, 0) => Composition::IclBaseline,
            (1, p, l, 1, 0) if p >= 1 && l >= 1 => Composition::P2tFewShot,
            (1, p, 0, 1, 0) if p >= 1 => Composition::P2tZeroShot,
            (0, 0, l, 0, 1) if l >= 1 => Composition::Correlation,
            (1, 0, 0, 0, 1) => Composition::CorrelationZeroShot,
            _ => {
                return Err(Error::Composition(format!(
                    "unsanctioned segment pattern: [{}]",
                    describe(segments)
                )))
            }
        };
        Ok(composition)
    }
}

/// Split the correlation instruction's canonical text into its opening block
/// (two header lines) and closing line. The segment stores them joined by the
/// blank line that assembly re-purposes to wrap the demonstrations.
fn split_correlation_instruction(text: &str) -> Result<(&str, &str)> {
    text.split_once("\n\n").ok_or_else(|| {
        Error::Composition("correlation instruction lacks its opening/closing break".into())
    })
}

/// Assemble segments into the final prompt string.
///
/// Layout rules, fixed per composition:
/// - Segments are joined by blank lines (`"\n\n"`), with two exceptions:
///   in [`Composition::P2tFewShot`] the task description's internal paragraph
///   break collapses to a single newline, and in both correlation
///   compositions the instruction's opening lines and closing line wrap the
///   rest of the prompt.
/// - The prompt ends exactly where the last segment ends: no trailing
///   newline.
pub fn assemble(segments: &[PromptSegment]) -> Result<String> {
    let composition = Composition::classify(segments)?;
    let text = match composition {
        Composition::IclBaseline | Composition::P2tZeroShot => {
            let parts: Vec<&str> = segments.iter().map(|s| s.text.as_str()).collect();
            parts.join("\n\n")
        }
        Composition::P2tFewShot => {
            let mut parts: Vec<String> = Vec::with_capacity(segments.len());
            for segment in segments {
                if segment.kind == SegmentKind::Task {
                    parts.push(segment.text.replacen("\n\n", "\n", 1));
                } else {
                    parts.push(segment.text.clone());
                }
            }
            parts.join("\n\n")
        }
        Composition::Correlation => {
            let instruction = &segments[segments.len() - 1].text;
            let (opening, closing) = split_correlation_instruction(instruction)?;
            let mut parts: Vec<&str> = vec![opening];
            parts.extend(segments[..segments.len() - 1].iter().map(|s| s.text.as_str()));
            parts.push(closing);
            parts.join("\n\n")
        }
        Composition::CorrelationZeroShot => {
            let instruction = &segments[1].text;
            let (opening, closing) = split_correlation_instruction(instruction)?;
            [segments[0].text.as_str(), opening, closing].join("\n\n")
        }
    };
    Ok(text)
}

/// Recover the segment texts from an assembled prompt. Inverse of
/// [`assemble`] for the given composition: for every sanctioned sequence,
/// `split_segments(&assemble(s)?, Composition::classify(s)?)` yields the
/// texts of `s` in order.
pub fn split_segments(prompt: &str, composition: Composition) -> Vec<String> {
    let chunks: Vec<&str> = prompt.split("\n\n").collect();
    match composition {
        Composition::IclBaseline | Composition::P2tZeroShot => {
            // The task description itself contains one blank line, so the
            // first two chunks belong together.
            let mut out = Vec::with_capacity(chunks.len().saturating_sub(1));
            if chunks.len() >= 2 {
                out.push(format!("{}\n\n{}", chunks[0], chunks[1]));
                out.extend(chunks[2..].iter().map(|c| c.to_string()));
            } else {
                out.extend(chunks.iter().map(|c| c.to_string()));
            }
            out
        }
        Composition::P2tFewShot => {
            // The task description was collapsed to a single internal
            // newline, so every chunk is one segment; restore the paragraph
            // break in the first.
            let mut out: Vec<String> = chunks.iter().map(|c| c.to_string()).collect();
            if let Some(first) = out.first_mut() {
                *first = first.replacen('\n', "\n\n", 1);
            }
            out
        }
        Composition::Correlation => {
            // opening, demos..., closing — the instruction contributed the
            // first and last chunks.
            if chunks.len() < 2 {
                return chunks.iter().map(|c| c.to_string()).collect();
            }
            let mut out: Vec<String> =
                chunks[1..chunks.len() - 1].iter().map(|c| c.to_string()).collect();
            out.push(format!("{}\n\n{}", chunks[0], chunks[chunks.len() - 1]));
            out
        }
        Composition::CorrelationZeroShot => {
            // task-para1, task-para2, opening, closing.
            if chunks.len() != 4 {
                return chunks.iter().map(|c| c.to_string()).collect();
            }
            vec![
                format!("{}\n\n{}", chunks[0], chunks[1]),
                format!("{}\n\n{}", chunks[2], chunks[3]),
            ]
        }
    }
}
