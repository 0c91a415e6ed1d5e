use std::collections::HashSet;

use super::{tokenize, EntitySpan, LabelClass};

/// Spans found for a list of entity strings, plus the strings that never occurred.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grounding {
    pub spans: Vec<EntitySpan>,
    pub ungrounded: Vec<String>,
}

/// Case-insensitive match of `pattern` against `text` starting at byte `pos`.
///
/// A whitespace run in the pattern matches any non-empty whitespace run in the
/// text. Returns the byte offset just past the match.
pub fn match_at(text: &str, pos: usize, pattern: &str) -> Option<usize> {
    let mut hay = text[pos..].char_indices().peekable();
    let mut pat = pattern.chars().peekable();
    let mut end = pos;

    while let Some(p) = pat.next() {
        if p.is_whitespace() {
            while pat.peek().is_some_and(|c| c.is_whitespace()) {
                pat.next();
            }
            let mut saw = false;
            while let Some(&(i, c)) = hay.peek() {
                if !c.is_whitespace() {
                    break;
                }
                saw = true;
                end = pos + i + c.len_utf8();
                hay.next();
            }
            if !saw {
                return None;
            }
            continue;
        }
        let (i, c) = hay.next()?;
        if c != p && !c.to_lowercase().eq(p.to_lowercase()) {
            return None;
        }
        end = pos + i + c.len_utf8();
    }
    Some(end)
}

/// Locates every case-insensitive occurrence of each entity string whose
/// boundaries fall on token boundaries. Overlapping spans are merged.
pub fn ground_entities<S: AsRef<str>>(
    text: &str,
    entities: &[S],
    label: LabelClass,
    source: &str,
) -> Grounding {
    let tokens = tokenize(text);
    let ends: HashSet<usize> = tokens.iter().map(|t| t.end).collect();

    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut ungrounded = Vec::new();
    for entity in entities {
        let pattern = entity.as_ref().trim();
        if pattern.is_empty() {
            continue;
        }
        let before = raw.len();
        for t in &tokens {
            if let Some(end) = match_at(text, t.start, pattern) {
                if ends.contains(&end) {
                    raw.push((t.start, end));
                }
            }
        }
        if raw.len() == before {
            ungrounded.push(entity.as_ref().to_string());
        }
    }

    Grounding {
        spans: merge_overlapping(raw)
            .into_iter()
            .map(|(s, e)| EntitySpan::new(s, e, label, source))
            .collect(),
        ungrounded,
    }
}

fn merge_overlapping(mut raw: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    raw.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(raw.len());
    for (s, e) in raw {
        match merged.last_mut() {
            Some(last) if s < last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}
