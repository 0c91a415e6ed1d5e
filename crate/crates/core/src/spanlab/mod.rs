//! Tokens, character spans and Inside-Outside label sequences.
//!
//! Offsets are UTF-8 byte offsets into the note text, so `&text[start..end]`
//! is always the token or span surface.

mod ground;
mod project;
mod tokenize;
mod tokfile;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ground::{ground_entities, match_at, Grounding};
pub use project::{project_to_io, union_labels};
pub use tokenize::tokenize;
pub use tokfile::{format_token_file, parse_token_file, read_token_file, write_token_file};

#[derive(Debug, Error)]
pub enum SpanError {
    #[error("span {start}..{end} out of bounds for text of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("token mismatch in document {doc_id}: {detail}")]
    TokenMismatch { doc_id: String, detail: String },
    #[error("task mismatch in document {doc_id}: {left} vs {right}")]
    TaskMismatch {
        doc_id: String,
        left: LabelClass,
        right: LabelClass,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot write document {doc_id}: {msg}")]
    Unwritable { doc_id: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Entity class of a single-task NER pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LabelClass {
    Med,
    Dis,
    Sym,
}

impl LabelClass {
    pub const ALL: [LabelClass; 3] = [LabelClass::Med, LabelClass::Dis, LabelClass::Sym];

    pub fn code(self) -> &'static str {
        match self {
            LabelClass::Med => "MED",
            LabelClass::Dis => "DIS",
            LabelClass::Sym => "SYM",
        }
    }

    /// Lower value wins when two classes claim the same token.
    pub fn priority(self) -> u8 {
        match self {
            LabelClass::Med => 0,
            LabelClass::Dis => 1,
            LabelClass::Sym => 2,
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LabelClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MED" => Ok(LabelClass::Med),
            "DIS" => Ok(LabelClass::Dis),
            "SYM" => Ok(LabelClass::Sym),
            _ => Err(format!("unknown task {s:?} (expected MED, DIS or SYM)")),
        }
    }
}

/// Per-token IO label: `O` or `I-<class>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Label {
    #[default]
    O,
    I(LabelClass),
}

impl Label {
    pub fn is_entity(self) -> bool {
        matches!(self, Label::I(_))
    }

    pub fn class(self) -> Option<LabelClass> {
        match self {
            Label::O => None,
            Label::I(c) => Some(c),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::O => "O",
            Label::I(LabelClass::Med) => "I-MED",
            Label::I(LabelClass::Dis) => "I-DIS",
            Label::I(LabelClass::Sym) => "I-SYM",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    /// Only the four surface forms `O`, `I-MED`, `I-DIS`, `I-SYM` are accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Label::O),
            "I-MED" => Ok(Label::I(LabelClass::Med)),
            "I-DIS" => Ok(Label::I(LabelClass::Dis)),
            "I-SYM" => Ok(Label::I(LabelClass::Sym)),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A token with its byte offsets in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Half-open byte span `[start, end)` tagged with a class and the labeler that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: LabelClass,
    pub source: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: LabelClass, source: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            label,
            source: source.into(),
        }
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

/// One labeled document: token surfaces and one IO label per token.
///
/// Offsets are not carried here; the token file format stores surfaces only and
/// any tokenizer-aligned consumer can recover offsets by re-tokenizing the note.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLabelSequence {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
}

impl TokenLabelSequence {
    /// Panics if `tokens` and `labels` differ in length.
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>, labels: Vec<Label>) -> Self {
        assert_eq!(tokens.len(), labels.len(), "one label per token");
        TokenLabelSequence {
            doc_id: doc_id.into(),
            tokens,
            labels,
        }
    }

    pub fn all_outside(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        let labels = vec![Label::O; tokens.len()];
        Self::new(doc_id, tokens, labels)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The entity classes present, in priority order.
    pub fn classes(&self) -> Vec<LabelClass> {
        let mut out: Vec<LabelClass> = self.labels.iter().filter_map(|l| l.class()).collect();
        out.sort_by_key(|c| c.priority());
        out.dedup();
        out
    }

    pub fn entity_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_entity()).count()
    }

    /// Errors unless both sequences describe the same document over the same tokens.
    pub fn check_aligned(&self, other: &TokenLabelSequence) -> Result<(), SpanError> {
        if self.doc_id != other.doc_id {
            return Err(SpanError::TokenMismatch {
                doc_id: self.doc_id.clone(),
                detail: format!("paired with document {}", other.doc_id),
            });
        }
        if self.tokens.len() != other.tokens.len() {
            return Err(SpanError::TokenMismatch {
                doc_id: self.doc_id.clone(),
                detail: format!("{} tokens vs {}", self.tokens.len(), other.tokens.len()),
            });
        }
        if let Some(i) = (0..self.tokens.len()).find(|&i| self.tokens[i] != other.tokens[i]) {
            return Err(SpanError::TokenMismatch {
                doc_id: self.doc_id.clone(),
                detail: format!(
                    "token {i} is {:?} vs {:?}",
                    self.tokens[i], other.tokens[i]
                ),
            });
        }
        Ok(())
    }
}
