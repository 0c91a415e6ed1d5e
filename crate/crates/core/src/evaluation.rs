//! Token-level scoring, inter-rater agreement and FP/FN adjudication.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::seeded_shuffle;
use crate::spanlab::{Label, LabelClass, SpanError, TokenLabelSequence};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("nothing scored")]
    NothingScored,
    #[error("label sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("kappa needs at least one item")]
    NoItems,
    #[error("kappa undefined: chance agreement is 1 but sequences differ")]
    KappaUndefined,
    #[error("cannot sample {wanted} of {available} instances ({double} doubly annotated)")]
    QuotaInfeasible {
        wanted: usize,
        double: usize,
        available: usize,
    },
    #[error("gold document {0} has no prediction")]
    MissingPrediction(String),
    #[error("worksheet line {line}: {msg}")]
    Worksheet { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary token confusion counts: entity vs `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn observe(&mut self, gold: Label, pred: Label) {
        match (gold.is_entity(), pred.is_entity()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

pub fn confusion(
    gold: &TokenLabelSequence,
    pred: &TokenLabelSequence,
) -> Result<ConfusionCounts, EvalError> {
    gold.check_aligned(pred)?;
    let mut c = ConfusionCounts::default();
    for (&g, &p) in gold.labels.iter().zip(&pred.labels) {
        c.observe(g, p);
    }
    Ok(c)
}

/// Pools confusion counts over every gold document (micro average).
pub fn pooled_confusion(
    gold: &BTreeMap<String, TokenLabelSequence>,
    pred: &BTreeMap<String, TokenLabelSequence>,
) -> Result<ConfusionCounts, EvalError> {
    gold.iter()
        .map(|(id, g)| {
            let p = pred
                .get(id)
                .ok_or_else(|| EvalError::MissingPrediction(id.clone()))?;
            confusion(g, p)
        })
        .sum()
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub npv: bool,
    pub specificity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Option<LabelClass>,
    pub system: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub npv: f64,
    pub specificity: f64,
    pub counts: ConfusionCounts,
    pub undefined: UndefinedFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn compute_metrics(
    counts: ConfusionCounts,
    task: Option<LabelClass>,
    system: &str,
) -> Result<MetricsReport, EvalError> {
    if counts.total() == 0 {
        return Err(EvalError::NothingScored);
    }
    let (precision, p_undef) = ratio(counts.tp, counts.tp + counts.fp);
    let (recall, r_undef) = ratio(counts.tp, counts.tp + counts.fn_);
    let (npv, n_undef) = ratio(counts.tn, counts.tn + counts.fn_);
    let (specificity, s_undef) = ratio(counts.tn, counts.tn + counts.fp);
    Ok(MetricsReport {
        task,
        system: system.to_string(),
        precision,
        recall,
        f1: f1_score(precision, recall),
        npv,
        specificity,
        counts,
        undefined: UndefinedFlags {
            precision: p_undef,
            recall: r_undef,
            f1: precision + recall == 0.0,
            npv: n_undef,
            specificity: s_undef,
        },
    })
}

/// Multiclass Cohen's kappa between two raters.
///
/// When chance agreement is exactly 1 (both raters used one identical label
/// throughout) kappa is reported as 1.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::NoItems);
    }
    let n = a.len() as f64;
    let mut marg: HashMap<&T, (u64, u64)> = HashMap::new();
    let mut agree = 0u64;
    for (x, y) in a.iter().zip(b) {
        marg.entry(x).or_default().0 += 1;
        marg.entry(y).or_default().1 += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg
        .values()
        .map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();
    if p_e >= 1.0 {
        return if agree as usize == a.len() {
            Ok(1.0)
        } else {
            Err(EvalError::KappaUndefined)
        };
    }
    Ok(((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    FalsePositive,
    FalseNegative,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::FalsePositive => "false_positive",
            ErrorKind::FalseNegative => "false_negative",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "false_positive" => Ok(ErrorKind::FalsePositive),
            "false_negative" => Ok(ErrorKind::FalseNegative),
            _ => Err(format!("unknown error kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorInstance {
    pub doc_id: String,
    pub token_index: usize,
    pub kind: ErrorKind,
    /// Tokens within the window, space-joined.
    pub context: String,
    pub model_label: Label,
    pub gold_label: Label,
}

/// One instance per FP/FN token, with `window` tokens of context on each side.
pub fn extract_errors(
    gold: &TokenLabelSequence,
    pred: &TokenLabelSequence,
    window: usize,
) -> Result<Vec<ErrorInstance>, EvalError> {
    gold.check_aligned(pred)?;
    let mut out = Vec::new();
    for (i, (&g, &p)) in gold.labels.iter().zip(&pred.labels).enumerate() {
        let kind = match (g.is_entity(), p.is_entity()) {
            (false, true) => ErrorKind::FalsePositive,
            (true, false) => ErrorKind::FalseNegative,
            _ => continue,
        };
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(gold.tokens.len());
        out.push(ErrorInstance {
            doc_id: gold.doc_id.clone(),
            token_index: i,
            kind,
            context: gold.tokens[lo..hi].join(" "),
            model_label: p,
            gold_label: g,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Model label right, gold label wrong.
    Correct,
    PartiallyCorrect,
    Incorrect,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Correct, Verdict::PartiallyCorrect, Verdict::Incorrect];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::PartiallyCorrect => "partially_correct",
            Verdict::Incorrect => "incorrect",
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct" => Ok(Verdict::Correct),
            "partially_correct" => Ok(Verdict::PartiallyCorrect),
            "incorrect" => Ok(Verdict::Incorrect),
            _ => Err(format!("unknown verdict {s:?}")),
        }
    }
}

/// A sampled instance and whether a second annotator reviews it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub instance: ErrorInstance,
    pub double: bool,
}

impl Assignment {
    pub fn slots(&self) -> &'static [&'static str] {
        if self.double {
            &["A", "B"]
        } else {
            &["A"]
        }
    }
}

/// Seeded sample of `n` instances, the first `n_double` flagged for a second annotator.
///
/// Instances are ordered by (doc_id, token_index, kind) before shuffling so the
/// draw does not depend on input order.
pub fn sample_for_adjudication(
    instances: &[ErrorInstance],
    n: usize,
    n_double: usize,
    seed: u64,
) -> Result<Vec<Assignment>, EvalError> {
    if n > instances.len() || n_double > n {
        return Err(EvalError::QuotaInfeasible {
            wanted: n,
            double: n_double,
            available: instances.len(),
        });
    }
    let mut pool: Vec<&ErrorInstance> = instances.iter().collect();
    pool.sort_by(|a, b| {
        (&a.doc_id, a.token_index, a.kind).cmp(&(&b.doc_id, b.token_index, b.kind))
    });
    seeded_shuffle(&mut pool, seed);
    Ok(pool
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, inst)| Assignment {
            instance: inst.clone(),
            double: i < n_double,
        })
        .collect())
}

pub const WORKSHEET_COLUMNS: [&str; 8] = [
    "doc_id",
    "token_index",
    "kind",
    "context",
    "model_label",
    "gold_label",
    "annotator",
    "verdict",
];

/// TSV worksheet with one row per annotator slot and an empty verdict column.
pub fn format_worksheet(assignments: &[Assignment]) -> String {
    let mut out = WORKSHEET_COLUMNS.join("\t");
    out.push('\n');
    for a in assignments {
        let i = &a.instance;
        for slot in a.slots() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t\n",
                i.doc_id, i.token_index, i.kind, i.context, i.model_label, i.gold_label, slot
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjudicationRecord {
    pub instance: ErrorInstance,
    pub annotator: String,
    pub verdict: Verdict,
}

/// Parses a filled-in worksheet. Lines starting with `#` are skipped; rows
/// with an empty verdict are skipped as not yet reviewed.
pub fn parse_worksheet(input: &str) -> Result<Vec<AdjudicationRecord>, EvalError> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: String| EvalError::Worksheet { line: line_no, msg };
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !header_seen {
            if fields != WORKSHEET_COLUMNS {
                return Err(err(format!(
                    "expected header {:?}",
                    WORKSHEET_COLUMNS.join("\t")
                )));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != WORKSHEET_COLUMNS.len() {
            return Err(err(format!(
                "expected {} columns, found {}",
                WORKSHEET_COLUMNS.len(),
                fields.len()
            )));
        }
        let verdict = fields[7].trim();
        if verdict.is_empty() {
            continue;
        }
        out.push(AdjudicationRecord {
            instance: ErrorInstance {
                doc_id: fields[0].to_string(),
                token_index: fields[1].parse().map_err(|e| err(format!("token_index: {e}")))?,
                kind: fields[2].parse().map_err(err)?,
                context: fields[3].to_string(),
                model_label: fields[4].parse().map_err(err)?,
                gold_label: fields[5].parse().map_err(err)?,
            },
            annotator: fields[6].to_string(),
            verdict: verdict.parse().map_err(err)?,
        });
    }
    Ok(out)
}

pub fn read_worksheet(path: &Path) -> Result<Vec<AdjudicationRecord>, EvalError> {
    parse_worksheet(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictBreakdown {
    pub n: usize,
    pub counts: BTreeMap<Verdict, usize>,
    pub percent: BTreeMap<Verdict, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationSummary {
    pub by_kind: BTreeMap<ErrorKind, VerdictBreakdown>,
    /// Instances reviewed by two annotators.
    pub double_annotated: usize,
    /// Verdict agreement over doubly annotated instances, when any exist.
    pub kappa: Option<f64>,
}

/// Per-kind verdict percentages. For an instance reviewed more than once, the
/// first record counts toward percentages and the first two feed the kappa.
pub fn aggregate_adjudications(records: &[AdjudicationRecord]) -> AdjudicationSummary {
    type Key<'a> = (&'a str, usize, ErrorKind);
    let mut order: Vec<Key> = Vec::new();
    let mut verdicts: HashMap<Key, Vec<Verdict>> = HashMap::new();
    for r in records {
        let key = (r.instance.doc_id.as_str(), r.instance.token_index, r.instance.kind);
        let v = verdicts.entry(key).or_default();
        if v.is_empty() {
            order.push(key);
        }
        v.push(r.verdict);
    }

    let mut by_kind: BTreeMap<ErrorKind, VerdictBreakdown> = BTreeMap::new();
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for key in &order {
        let v = &verdicts[key];
        let entry = by_kind.entry(key.2).or_insert_with(|| VerdictBreakdown {
            n: 0,
            counts: Verdict::ALL.iter().map(|&x| (x, 0)).collect(),
            percent: BTreeMap::new(),
        });
        entry.n += 1;
        *entry.counts.entry(v[0]).or_default() += 1;
        if v.len() >= 2 {
            first.push(v[0]);
            second.push(v[1]);
        }
    }
    for b in by_kind.values_mut() {
        b.percent = b
            .counts
            .iter()
            .map(|(&k, &c)| (k, 100.0 * c as f64 / b.n as f64))
            .collect();
    }
    AdjudicationSummary {
        by_kind,
        double_annotated: first.len(),
        kappa: cohen_kappa(&first, &second).ok(),
    }
}
