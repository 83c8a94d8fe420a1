use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{normalize_lemma, OntologyStore};
use crate::prompting::ArgumentSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    tokens: Vec<String>,
    target: TargetSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame: Option<String>,
    #[serde(default)]
    args: Vec<ArgumentSpan>,
    #[serde(default)]
    exemplar: bool,
}

/// One annotated target in a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSentence {
    /// Position in the dataset file (0-based).
    pub id: usize,
    pub tokens: Vec<String>,
    pub target_start: usize,
    pub target_end: usize,
    pub gold_frame: Option<String>,
    pub gold_args: Vec<ArgumentSpan>,
    pub exemplar: bool,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<String>, target_start: usize, target_end: usize) -> Result<Self> {
        let s = AnnotatedSentence {
            id: 0,
            tokens,
            target_start,
            target_end,
            gold_frame: None,
            gold_args: Vec::new(),
            exemplar: false,
        };
        s.check_spans()?;
        Ok(s)
    }

    pub fn with_gold(mut self, frame: impl Into<String>, args: Vec<ArgumentSpan>) -> Result<Self> {
        self.gold_frame = Some(frame.into());
        self.gold_args = args;
        self.check_spans()?;
        Ok(self)
    }

    /// Target tokens, lowercased and joined by single spaces.
    pub fn target_lemma(&self) -> String {
        normalize_lemma(&self.tokens[self.target_start..self.target_end].join(" "))
    }

    fn check_spans(&self) -> Result<()> {
        let len = self.tokens.len();
        if self.tokens.is_empty() {
            return Err(Error::EmptyTokens);
        }
        if self.target_start >= self.target_end || self.target_end > len {
            return Err(Error::SpanOutOfRange {
                start: self.target_start,
                end: self.target_end,
                len,
            });
        }
        let mut prev_end = 0;
        for (i, arg) in self.gold_args.iter().enumerate() {
            if arg.start >= arg.end || arg.end > len {
                return Err(Error::SpanOutOfRange {
                    start: arg.start,
                    end: arg.end,
                    len,
                });
            }
            if i > 0 && arg.start < prev_end {
                return Err(Error::InvalidSpans(format!(
                    "argument [{}, {}) overlaps or is out of order",
                    arg.start, arg.end
                )));
            }
            prev_end = arg.end;
        }
        Ok(())
    }

    /// Checks gold labels against the ontology: the frame exists and every
    /// argument role belongs to it.
    pub fn check_against(&self, store: &OntologyStore) -> Result<()> {
        let Some(frame) = &self.gold_frame else {
            if self.gold_args.is_empty() {
                return Ok(());
            }
            return Err(Error::Validation(format!(
                "instance {} has arguments but no frame",
                self.id
            )));
        };
        let roles = store.roles_for_frame(frame)?;
        for arg in &self.gold_args {
            if !roles.iter().any(|r| r.name == arg.role) {
                return Err(Error::Validation(format!(
                    "instance {}: role {:?} is not an element of frame {frame}",
                    self.id, arg.role
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        let record = Record {
            tokens: self.tokens.clone(),
            target: TargetSpan {
                start: self.target_start,
                end: self.target_end,
            },
            frame: self.gold_frame.clone(),
            args: self.gold_args.clone(),
            exemplar: self.exemplar,
        };
        serde_json::to_string(&record).expect("record serializes")
    }
}

pub fn parse_dataset(text: &str, origin: &Path) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut args = record.args;
        args.sort();
        let sentence = AnnotatedSentence {
            id: out.len(),
            tokens: record.tokens,
            target_start: record.target.start,
            target_end: record.target.end,
            gold_frame: record.frame,
            gold_args: args,
            exemplar: record.exemplar,
        };
        sentence.check_spans().map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            column: 1,
            message: e.to_string(),
        })?;
        out.push(sentence);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_line() {
        let text = r#"{"tokens":["I","want","to","book","a","ticket"],"target":{"start":3,"end":4},"frame":"Reserving","args":[{"start":4,"end":6,"role":"Goods"},{"start":0,"end":1,"role":"Client"}],"exemplar":true}

{"tokens":["Books"],"target":{"start":0,"end":1}}"#;
        let data = parse_dataset(text, Path::new("d.jsonl")).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].target_lemma(), "book");
        assert_eq!(data[0].gold_args[0].role, "Client");
        assert!(data[0].exemplar);
        assert_eq!(data[1].id, 1);
        assert_eq!(data[1].gold_frame, None);
        assert_eq!(data[1].target_lemma(), "books");

        let again = parse_dataset(&data[0].to_json_line(), Path::new("-")).unwrap();
        assert_eq!(again[0], data[0]);
    }

    #[test]
    fn rejects_bad_spans_with_line() {
        let text = "{\"tokens\":[\"a\"],\"target\":{\"start\":0,\"end\":1}}\n{\"tokens\":[\"a\"],\"target\":{\"start\":0,\"end\":2}}";
        match parse_dataset(text, Path::new("d.jsonl")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let overlapping = r#"{"tokens":["a","b","c"],"target":{"start":0,"end":1},"args":[{"start":1,"end":3,"role":"X"},{"start":2,"end":3,"role":"Y"}]}"#;
        assert!(parse_dataset(overlapping, Path::new("d")).is_err());
        let unknown = r#"{"tokens":["a"],"target":{"start":0,"end":1},"lemma":"a"}"#;
        assert!(parse_dataset(unknown, Path::new("d")).is_err());
    }
}
