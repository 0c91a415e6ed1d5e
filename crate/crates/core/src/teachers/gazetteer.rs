//! Offline ontology teacher: a lexicon of surface forms tagged with semantic
//! type identifiers (TUIs), matched longest-first on token boundaries.
//!
//! Lexicon files are JSON lines: `{"surface": "...", "tui": "T184", "label": "SYM"}`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TeacherError;
use crate::corpus::Document;
use crate::spanlab::{match_at, tokenize, EntitySpan, LabelClass};

const MED_TUIS: &[&str] = &["T195", "T123", "T200", "T125", "T121"];
const DIS_TUIS: &[&str] = &["T020", "T190", "T019", "T047", "T050", "T037", "T191", "T046"];
const SYM_TUIS: &[&str] = &["T184"];

/// Semantic types that count toward a task.
///
/// MED: antibiotic, biologically active substance, clinical drug, hormone,
/// pharmacologic substance. DIS: acquired, anatomical and congenital
/// abnormality, disease or syndrome, experimental model of disease, injury or
/// poisoning, neoplastic process, pathologic function. SYM: sign or symptom.
pub fn tuis_for(task: LabelClass) -> &'static [&'static str] {
    match task {
        LabelClass::Med => MED_TUIS,
        LabelClass::Dis => DIS_TUIS,
        LabelClass::Sym => SYM_TUIS,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    pub surface: String,
    pub tui: String,
    pub label: LabelClass,
}

/// Anything that produces spans for a document, e.g. this gazetteer or a
/// remote annotation service client.
pub trait SpanAnnotator: Send + Sync {
    fn annotate(&self, document: &Document, task: LabelClass) -> Result<Vec<EntitySpan>, TeacherError>;
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    source: String,
    entries: Vec<LexiconEntry>,
    /// Lowercased first token -> entry indices, longest surface first.
    by_first_token: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    /// Surfaces are lowercased; an entry whose TUI does not belong to its label is rejected.
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, TeacherError> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(entries.len());
        for (i, mut e) in entries.into_iter().enumerate() {
            e.surface = e.surface.trim().to_lowercase();
            if e.surface.is_empty() {
                return Err(TeacherError::Lexicon {
                    line: i + 1,
                    msg: "empty surface".into(),
                });
            }
            if !tuis_for(e.label).contains(&e.tui.as_str()) {
                return Err(TeacherError::Lexicon {
                    line: i + 1,
                    msg: format!("{} is not a {} semantic type", e.tui, e.label),
                });
            }
            if seen.insert((e.surface.clone(), e.tui.clone())) {
                kept.push(e);
            }
        }

        let mut by_first_token: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in kept.iter().enumerate() {
            let first = tokenize(&e.surface)
                .into_iter()
                .next()
                .map(|t| t.text.to_lowercase())
                .unwrap_or_default();
            by_first_token.entry(first).or_default().push(i);
        }
        for ids in by_first_token.values_mut() {
            ids.sort_by(|&a, &b| {
                let (x, y) = (&kept[a].surface, &kept[b].surface);
                y.chars().count().cmp(&x.chars().count()).then_with(|| x.cmp(y))
            });
        }
        Ok(Lexicon {
            source: "ontology".into(),
            entries: kept,
            by_first_token,
        })
    }

    /// Source tag put on produced spans.
    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn parse_lexicon(input: &str) -> Result<Lexicon, TeacherError> {
    let mut entries = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let e: LexiconEntry = serde_json::from_str(line).map_err(|e| TeacherError::Lexicon {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        entries.push(e);
    }
    Lexicon::new(entries)
}

pub fn read_lexicon(path: &Path) -> Result<Lexicon, TeacherError> {
    parse_lexicon(&fs::read_to_string(path)?)
}

/// Longest-match-first scan; output spans are sorted and non-overlapping.
pub fn gazetteer_label(lexicon: &Lexicon, document: &Document, task: LabelClass) -> Vec<EntitySpan> {
    let allowed = tuis_for(task);
    let text = &document.text;
    let tokens = tokenize(text);
    let ends: HashSet<usize> = tokens.iter().map(|t| t.end).collect();

    let mut spans = Vec::new();
    let mut cursor = 0;
    for tok in &tokens {
        if tok.start < cursor {
            continue;
        }
        let Some(candidates) = lexicon.by_first_token.get(&tok.text.to_lowercase()) else {
            continue;
        };
        let hit = candidates
            .iter()
            .map(|&i| &lexicon.entries[i])
            .filter(|e| allowed.contains(&e.tui.as_str()))
            .find_map(|e| match_at(text, tok.start, &e.surface).filter(|end| ends.contains(end)));
        if let Some(end) = hit {
            spans.push(EntitySpan::new(tok.start, end, task, lexicon.source.clone()));
            cursor = end;
        }
    }
    spans
}

impl SpanAnnotator for Lexicon {
    fn annotate(&self, document: &Document, task: LabelClass) -> Result<Vec<EntitySpan>, TeacherError> {
        Ok(gazetteer_label(self, document, task))
    }
}
