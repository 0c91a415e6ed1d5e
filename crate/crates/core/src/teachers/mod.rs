//! Teacher labelers: prompted LLMs behind a record/replay cassette store and
//! an offline ontology gazetteer.

mod cassette;
mod gazetteer;
mod labeling;
mod llm;
mod prompt;
mod response;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{cache_key, estimate_tokens, CassetteStore, TeacherRecord};
pub use gazetteer::{
    gazetteer_label, parse_lexicon, read_lexicon, tuis_for, Lexicon, LexiconEntry, SpanAnnotator,
};
pub use labeling::{label_corpus, CorpusLabels, Teacher, TeacherStats, DEFAULT_PARALLELISM};
pub use llm::{
    invoke_llm_teacher, ChatEndpoint, ChatReply, ChatRequest, EndpointError, HttpChatEndpoint,
    LlmTeacher, RetryPolicy, TeacherMode, TEMPERATURE, TOP_P,
};
pub use prompt::{render_prompt, OutputMode, PromptTemplate};
pub use response::parse_teacher_response;

use crate::spanlab::SpanError;

/// Name of a teacher labeler, e.g. `gpt-4o` or `ontology`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TeacherId(String);

impl TeacherId {
    pub fn new(name: impl Into<String>) -> Self {
        TeacherId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TeacherId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TeacherId {
    fn from(s: &str) -> Self {
        TeacherId::new(s)
    }
}

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("prompt template must contain exactly one {{note}} placeholder, found {0}")]
    Placeholder(usize),
    #[error("cassette miss for key {key} (teacher {teacher}, document {doc_id})")]
    CassetteMiss {
        key: String,
        teacher: TeacherId,
        doc_id: String,
    },
    #[error("teacher {teacher} is in record mode but has no endpoint configured")]
    NoEndpoint { teacher: TeacherId },
    #[error("endpoint failed after {attempts} attempts: {last}")]
    Endpoint { attempts: u32, last: EndpointError },
    #[error("cassette {path} line {line}: {msg}")]
    Cassette {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("lexicon line {line}: {msg}")]
    Lexicon { line: usize, msg: String },
    #[error("labeling aborted at teacher {teacher}, document {doc_id} after {completed} completed documents: {source}")]
    Aborted {
        teacher: TeacherId,
        doc_id: String,
        completed: usize,
        #[source]
        source: Box<TeacherError>,
    },
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
