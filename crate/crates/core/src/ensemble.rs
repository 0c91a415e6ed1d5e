//! Exhaustive search over teacher subsets, scored on the dev set by
//! token-level F1 of their label union.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{compute_metrics, confusion, ConfusionCounts, EvalError};
use crate::spanlab::{union_labels, LabelClass, SpanError, TokenLabelSequence};
use crate::teachers::TeacherId;

/// Labelings of one teacher, keyed by document id.
pub type Labelings = BTreeMap<String, TokenLabelSequence>;

pub const MAX_TEACHERS: usize = 16;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no teachers given")]
    NoTeachers,
    #[error("{0} teachers exceeds the limit of {MAX_TEACHERS}")]
    TooManyTeachers(usize),
    #[error("teacher {0} listed twice")]
    DuplicateTeacher(TeacherId),
    #[error("teacher {teacher} has no labels for document {doc_id}")]
    MissingSequence { teacher: TeacherId, doc_id: String },
    #[error("empty dev set")]
    EmptyDev,
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Non-empty set of teachers, members sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Combo {
    members: Vec<TeacherId>,
}

impl Combo {
    pub fn new(members: impl IntoIterator<Item = TeacherId>) -> Result<Self, EnsembleError> {
        let mut members: Vec<TeacherId> = members.into_iter().collect();
        if members.is_empty() {
            return Err(EnsembleError::NoTeachers);
        }
        members.sort();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(EnsembleError::DuplicateTeacher(w[0].clone()));
        }
        Ok(Combo { members })
    }

    pub fn members(&self) -> &[TeacherId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            f.write_str(m.as_str())?;
        }
        Ok(())
    }
}

/// All `2^k - 1` non-empty subsets, ordered by size then lexicographically.
pub fn enumerate_combos(teachers: &[TeacherId]) -> Result<Vec<Combo>, EnsembleError> {
    if teachers.len() > MAX_TEACHERS {
        return Err(EnsembleError::TooManyTeachers(teachers.len()));
    }
    let all = Combo::new(teachers.iter().cloned())?;
    let k = all.len();
    let mut combos: Vec<Combo> = (1u32..(1 << k))
        .map(|mask| Combo {
            members: (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| all.members[i].clone())
                .collect(),
        })
        .collect();
    combos.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.members.cmp(&b.members)));
    Ok(combos)
}

/// Union of the members' labelings for one document.
pub fn combine_union(
    per_teacher: &BTreeMap<TeacherId, Labelings>,
    combo: &Combo,
    doc_id: &str,
) -> Result<TokenLabelSequence, EnsembleError> {
    let lookup = |t: &TeacherId| {
        per_teacher
            .get(t)
            .and_then(|l| l.get(doc_id))
            .ok_or_else(|| EnsembleError::MissingSequence {
                teacher: t.clone(),
                doc_id: doc_id.to_string(),
            })
    };
    let (first, rest) = combo.members.split_first().expect("combo is non-empty");
    let mut acc = lookup(first)?.clone();
    for t in rest {
        acc = union_labels(&acc, lookup(t)?)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub combo: Combo,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: ConfusionCounts,
}

/// Pooled dev-set confusion for one combo.
pub fn score_combo(
    per_teacher: &BTreeMap<TeacherId, Labelings>,
    gold: &Labelings,
    combo: &Combo,
) -> Result<ConfusionCounts, EnsembleError> {
    let mut total = ConfusionCounts::default();
    for (doc_id, g) in gold {
        let pred = combine_union(per_teacher, combo, doc_id)?;
        total = total + confusion(g, &pred)?;
    }
    Ok(total)
}

/// Scores every combo over the gold documents and ranks them.
///
/// Ranking: F1 descending, then fewer members, then canonical combo order.
pub fn select_best_combo(
    per_teacher: &BTreeMap<TeacherId, Labelings>,
    gold: &Labelings,
    task: LabelClass,
) -> Result<Vec<ComboResult>, EnsembleError> {
    if gold.is_empty() {
        return Err(EnsembleError::EmptyDev);
    }
    let teachers: Vec<TeacherId> = per_teacher.keys().cloned().collect();
    let combos = enumerate_combos(&teachers)?;
    let patterns = token_patterns(per_teacher, gold, &teachers)?;

    let scored: Vec<(usize, ComboResult)> = combos
        .into_par_iter()
        .enumerate()
        .map(|(idx, combo)| {
            let mask = combo
                .members
                .iter()
                .fold(0u32, |m, t| m | 1 << teachers.binary_search(t).expect("member of the teacher set"));
            let counts = counts_for_mask(&patterns, mask);
            let m = compute_metrics(counts, Some(task), &combo.to_string())?;
            Ok((
                idx,
                ComboResult {
                    combo,
                    f1: m.f1,
                    precision: m.precision,
                    recall: m.recall,
                    counts,
                },
            ))
        })
        .collect::<Result<_, EnsembleError>>()?;

    Ok(rank(scored))
}

/// Per-token (gold is entity, bitmask of teachers tagging the token) counts.
///
/// The full-set union is built once per document first, so any misaligned or
/// mixed-task sequence fails here exactly as it would for some combo.
fn token_patterns(
    per_teacher: &BTreeMap<TeacherId, Labelings>,
    gold: &Labelings,
    teachers: &[TeacherId],
) -> Result<HashMap<(bool, u32), u64>, EnsembleError> {
    let all = Combo::new(teachers.iter().cloned())?;
    let mut patterns = HashMap::new();
    for (doc_id, g) in gold {
        confusion(g, &combine_union(per_teacher, &all, doc_id)?)?;
        let seqs: Vec<&TokenLabelSequence> = teachers.iter().map(|t| &per_teacher[t][doc_id]).collect();
        for (i, label) in g.labels.iter().enumerate() {
            let bits = seqs
                .iter()
                .enumerate()
                .filter(|(_, s)| s.labels[i].is_entity())
                .fold(0u32, |m, (t, _)| m | 1 << t);
            *patterns.entry((label.is_entity(), bits)).or_insert(0) += 1;
        }
    }
    Ok(patterns)
}

fn counts_for_mask(patterns: &HashMap<(bool, u32), u64>, mask: u32) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&(gold, bits), &n) in patterns {
        match (gold, bits & mask != 0) {
            (true, true) => c.tp += n,
            (false, true) => c.fp += n,
            (true, false) => c.fn_ += n,
            (false, false) => c.tn += n,
        }
    }
    c
}

fn rank(mut scored: Vec<(usize, ComboResult)>) -> Vec<ComboResult> {
    scored.sort_by(|(ia, a), (ib, b)| {
        b.f1.total_cmp(&a.f1)
            .then(a.combo.len().cmp(&b.combo.len()))
            .then(ia.cmp(ib))
    });
    scored.into_iter().map(|(_, r)| r).collect()
}

/// Ranks externally supplied (combo, precision, recall) rows by recomputed F1.
pub fn rank_by_f1(rows: &[(Combo, f64, f64)]) -> Vec<ComboResult> {
    let mut indexed: Vec<(usize, ComboResult)> = rows
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, (combo, p, r))| {
            (
                i,
                ComboResult {
                    combo,
                    f1: crate::evaluation::f1_score(p, r),
                    precision: p,
                    recall: r,
                    counts: ConfusionCounts::default(),
                },
            )
        })
        .collect();
    // Canonical order as the final tie-break, independent of input order.
    indexed.sort_by(|(_, a), (_, b)| {
        a.combo
            .len()
            .cmp(&b.combo.len())
            .then_with(|| a.combo.members.cmp(&b.combo.members))
    });
    let indexed = indexed
        .into_iter()
        .enumerate()
        .map(|(i, (_, r))| (i, r))
        .collect();
    rank(indexed)
}

/// Tab-separated ranking table, one row per combo.
pub fn format_ranking(results: &[ComboResult]) -> String {
    let mut out = String::from("rank\tmembers\tf1\tprecision\trecall\n");
    for (i, r) in results.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            i + 1,
            r.combo,
            r.f1,
            r.precision,
            r.recall
        ));
    }
    out
}
