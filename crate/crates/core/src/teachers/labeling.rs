use std::collections::BTreeMap;

use rayon::prelude::*;

use super::cassette::{CassetteStore, TeacherRecord};
use super::gazetteer::SpanAnnotator;
use super::llm::{invoke_llm_teacher, ChatEndpoint, LlmTeacher};
use super::{TeacherError, TeacherId};
use crate::corpus::Document;
use crate::ensemble::Labelings;
use crate::spanlab::{ground_entities, project_to_io, tokenize, LabelClass, TokenLabelSequence};

pub const DEFAULT_PARALLELISM: usize = 4;

pub enum Teacher {
    Llm(LlmTeacher),
    Annotator {
        id: TeacherId,
        annotator: Box<dyn SpanAnnotator>,
    },
}

impl Teacher {
    pub fn id(&self) -> &TeacherId {
        match self {
            Teacher::Llm(t) => &t.id,
            Teacher::Annotator { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TeacherStats {
    pub documents: usize,
    pub entity_strings: usize,
    pub ungrounded: usize,
    pub entity_tokens: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusLabels {
    pub labels: BTreeMap<TeacherId, Labelings>,
    /// LLM teacher records in document order.
    pub records: BTreeMap<TeacherId, Vec<TeacherRecord>>,
    pub stats: BTreeMap<TeacherId, TeacherStats>,
}

struct DocOutcome {
    seq: TokenLabelSequence,
    record: Option<TeacherRecord>,
    entity_strings: usize,
    ungrounded: usize,
}

fn label_one(
    teacher: &Teacher,
    doc: &Document,
    task: LabelClass,
    store: &CassetteStore,
    endpoint: Option<&dyn ChatEndpoint>,
) -> Result<DocOutcome, TeacherError> {
    let tokens = tokenize(&doc.text);
    match teacher {
        Teacher::Llm(t) => {
            let record = invoke_llm_teacher(t, doc, store, endpoint)?;
            let g = ground_entities(&doc.text, &record.entities, task, t.id.as_str());
            if !g.ungrounded.is_empty() {
                log::debug!("{} / {}: ungrounded {:?}", t.id, doc.id, g.ungrounded);
            }
            Ok(DocOutcome {
                seq: project_to_io(&doc.id, &doc.text, &tokens, &g.spans)?,
                entity_strings: record.entities.len(),
                ungrounded: g.ungrounded.len(),
                record: Some(record),
            })
        }
        Teacher::Annotator { annotator, .. } => {
            let spans = annotator.annotate(doc, task)?;
            Ok(DocOutcome {
                seq: project_to_io(&doc.id, &doc.text, &tokens, &spans)?,
                record: None,
                entity_strings: spans.len(),
                ungrounded: 0,
            })
        }
    }
}

/// Runs every teacher over every document and projects the result to IO labels.
///
/// Documents fan out over `parallelism` worker threads; output is ordered
/// deterministically regardless. The first failing document aborts the run.
pub fn label_corpus(
    teachers: &[Teacher],
    documents: &[Document],
    task: LabelClass,
    store: &CassetteStore,
    endpoint: Option<&dyn ChatEndpoint>,
    parallelism: usize,
) -> Result<CorpusLabels, TeacherError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");

    let mut out = CorpusLabels::default();
    for teacher in teachers {
        let id = teacher.id().clone();
        let results: Vec<Result<DocOutcome, TeacherError>> = pool.install(|| {
            documents
                .par_iter()
                .map(|d| label_one(teacher, d, task, store, endpoint))
                .collect()
        });

        let mut labels = Labelings::new();
        let mut records = Vec::new();
        let mut stats = TeacherStats::default();
        let completed = results.iter().filter(|r| r.is_ok()).count();
        for (doc, res) in documents.iter().zip(results) {
            let o = res.map_err(|e| TeacherError::Aborted {
                teacher: id.clone(),
                doc_id: doc.id.clone(),
                completed,
                source: Box::new(e),
            })?;
            stats.documents += 1;
            stats.entity_strings += o.entity_strings;
            stats.ungrounded += o.ungrounded;
            stats.entity_tokens += o.seq.entity_count();
            records.extend(o.record);
            labels.insert(doc.id.clone(), o.seq);
        }
        if stats.ungrounded > 0 {
            log::info!(
                "{id}: {} of {} entity strings not found in their note",
                stats.ungrounded,
                stats.entity_strings
            );
        }
        if matches!(teacher, Teacher::Llm(_)) {
            out.records.insert(id.clone(), records);
        }
        out.stats.insert(id.clone(), stats);
        out.labels.insert(id, labels);
    }
    Ok(out)
}
