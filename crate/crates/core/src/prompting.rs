//! Discrete prompts and the span-role target grammar.
//!
//! Argument targets are `span = Role` items joined by ` | `:
//!
//! ```text
//! I = Client | a ticket = Goods
//! ```
//!
//! Inside span text, `=`, `|` and `\` are escaped as `\=`, `\|` and `\\`.
//! Role names cannot contain `=` or `|` (the ontology rejects them), so they
//! are never escaped. An empty argument list is written as [`EMPTY_TARGET`]
//! when it is used as a generation target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::RoleDef;

/// Target text for a frame with no realized arguments.
pub const EMPTY_TARGET: &str = "none";

const ITEM_SEPARATOR: &str = " | ";
const PAIR_SEPARATOR: &str = " = ";
const TARGET_MARKER: &str = "*";

/// A role-labelled token span, end-exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgumentSpan {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

impl ArgumentSpan {
    pub fn new(start: usize, end: usize, role: impl Into<String>) -> Self {
        ArgumentSpan {
            start,
            end,
            role: role.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscretePrompt {
    pub head: String,
    pub body: String,
}

impl DiscretePrompt {
    pub fn new(head: impl Into<String>, body: impl Into<String>) -> Self {
        DiscretePrompt {
            head: head.into(),
            body: body.into(),
        }
    }

    pub fn full(&self) -> String {
        format!("{} {}", self.head, self.body)
    }
}

/// Continuous prompt, discrete prompt and (when training) the target text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub continuous: Vec<f64>,
    pub discrete: DiscretePrompt,
    pub target: Option<String>,
}

pub fn frame_id_head() -> &'static str {
    "generate [frame_name]:"
}

pub const ARG_ID_HEAD_PREFIX: &str = "generate [argument_name] with [argument_value] for ";

pub fn arg_id_head(frame: &str) -> Result<String> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame);
    }
    Ok(format!("{ARG_ID_HEAD_PREFIX}{frame}"))
}

/// Joins tokens with single spaces, wrapping the target span in `*` markers.
pub fn mark_target<S: AsRef<str>>(tokens: &[S], start: usize, end: usize) -> Result<String> {
    if start >= end || end > tokens.len() {
        return Err(Error::SpanOutOfRange {
            start,
            end,
            len: tokens.len(),
        });
    }
    let mut parts: Vec<&str> = Vec::with_capacity(tokens.len() + 2);
    for (i, tok) in tokens.iter().enumerate() {
        if i == start {
            parts.push(TARGET_MARKER);
        }
        parts.push(tok.as_ref());
        if i + 1 == end {
            parts.push(TARGET_MARKER);
        }
    }
    Ok(parts.join(" "))
}

/// Inverse of [`mark_target`] on well-formed text: the tokens and the span
/// between the first two standalone `*` tokens.
pub fn unmark_target(text: &str) -> Option<(Vec<String>, usize, usize)> {
    let words: Vec<&str> = text.split(' ').filter(|w| !w.is_empty()).collect();
    let open = words.iter().position(|w| *w == TARGET_MARKER)?;
    let close = open + 1 + words[open + 1..].iter().position(|w| *w == TARGET_MARKER)?;
    if close == open + 1 {
        return None;
    }
    let tokens: Vec<String> = words
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != open && *i != close)
        .map(|(_, w)| w.to_string())
        .collect();
    Some((tokens, open, close - 1))
}

fn escape_into(out: &mut String, text: &str) {
    for ch in text.chars() {
        if matches!(ch, '=' | '|' | '\\') {
            out.push('\\');
        }
        out.push(ch);
    }
}

fn validate_spans(len: usize, spans: &[ArgumentSpan]) -> Result<()> {
    let mut prev_end = 0;
    for (i, span) in spans.iter().enumerate() {
        if span.start >= span.end || span.end > len {
            return Err(Error::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len,
            });
        }
        if i > 0 && span.start < prev_end {
            return Err(Error::InvalidSpans(format!(
                "span [{}, {}) overlaps or precedes the previous span",
                span.start, span.end
            )));
        }
        prev_end = span.end;
    }
    Ok(())
}

/// `span = Role` items joined by ` | `; empty text for no spans.
pub fn serialize_arguments<S: AsRef<str>>(tokens: &[S], spans: &[ArgumentSpan]) -> Result<String> {
    validate_spans(tokens.len(), spans)?;
    let mut out = String::new();
    for (i, span) in spans.iter().enumerate() {
        if i > 0 {
            out.push_str(ITEM_SEPARATOR);
        }
        for (j, tok) in tokens[span.start..span.end].iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            escape_into(&mut out, tok.as_ref());
        }
        out.push_str(PAIR_SEPARATOR);
        out.push_str(&span.role);
    }
    Ok(out)
}

/// Generation target for argument identification: the serialized spans, or
/// [`EMPTY_TARGET`] when there are none.
pub fn argument_target<S: AsRef<str>>(tokens: &[S], spans: &[ArgumentSpan]) -> Result<String> {
    if spans.is_empty() {
        validate_spans(tokens.len(), spans)?;
        return Ok(EMPTY_TARGET.to_string());
    }
    serialize_arguments(tokens, spans)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ParsedArguments {
    pub spans: Vec<ArgumentSpan>,
    pub malformed: usize,
}

/// Byte offsets of unescaped occurrences of `sep` in `text`.
fn unescaped_matches(text: &str, sep: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let sep = sep.as_bytes();
    let mut hits = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            i += 2;
            continue;
        }
        if bytes[i..].starts_with(sep) {
            hits.push(i);
            i += sep.len();
        } else {
            i += 1;
        }
    }
    hits
}

fn split_unescaped<'a>(text: &'a str, sep: &str) -> Vec<&'a str> {
    let mut parts = Vec::new();
    let mut last = 0;
    for at in unescaped_matches(text, sep) {
        parts.push(&text[last..at]);
        last = at + sep.len();
    }
    parts.push(&text[last..]);
    parts
}

/// Removes escapes; an unknown escape or trailing backslash is kept literally.
fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            match chars.peek() {
                Some(&next) if matches!(next, '=' | '|' | '\\') => {
                    out.push(next);
                    chars.next();
                }
                _ => out.push(ch),
            }
        } else {
            out.push(ch);
        }
    }
    out
}

/// Parses generator output back into spans over `tokens`.
///
/// Never fails: items without a separator, with a role outside
/// `frame_roles`, or whose text cannot be located among unconsumed tokens
/// are dropped and counted in `malformed`. Span text is matched to the
/// earliest free occurrence in the sentence.
pub fn parse_arguments<S: AsRef<str>>(
    text: &str,
    tokens: &[S],
    frame_roles: &[RoleDef],
) -> ParsedArguments {
    let trimmed = text.trim();
    let mut parsed = ParsedArguments::default();
    if trimmed.is_empty() || trimmed == EMPTY_TARGET {
        return parsed;
    }
    let mut consumed = vec![false; tokens.len()];
    for item in split_unescaped(trimmed, ITEM_SEPARATOR) {
        let Some(&at) = unescaped_matches(item, PAIR_SEPARATOR).last() else {
            parsed.malformed += 1;
            continue;
        };
        let span_text = unescape(&item[..at]);
        let role = item[at + PAIR_SEPARATOR.len()..].trim();
        if !frame_roles.iter().any(|r| r.name == role) {
            parsed.malformed += 1;
            continue;
        }
        let wanted: Vec<&str> = span_text.split_whitespace().collect();
        match find_free(tokens, &wanted, &consumed) {
            Some(start) => {
                let end = start + wanted.len();
                consumed[start..end].iter_mut().for_each(|c| *c = true);
                parsed.spans.push(ArgumentSpan::new(start, end, role));
            }
            None => parsed.malformed += 1,
        }
    }
    parsed.spans.sort();
    parsed
}

fn find_free<S: AsRef<str>>(tokens: &[S], wanted: &[&str], consumed: &[bool]) -> Option<usize> {
    if wanted.is_empty() || wanted.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - wanted.len()).find(|&start| {
        (0..wanted.len()).all(|k| !consumed[start + k] && tokens[start + k].as_ref() == wanted[k])
    })
}

/// Number of unescaped item separators in serialized text.
pub fn count_item_separators(text: &str) -> usize {
    unescaped_matches(text, ITEM_SEPARATOR).len()
}
