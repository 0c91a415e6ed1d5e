//! Note corpora: one JSON document per line with fields
//! `id`, `text`, `category`, `dataset` and optional `split`.
//!
//! Blank lines and lines starting with `#` are skipped, so files may carry a
//! provenance comment at the top.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spanlab::tokenize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("category {category:?}: need {wanted} documents, only {available} available (short by {})", wanted - available)]
    QuotaShortfall {
        category: String,
        wanted: usize,
        available: usize,
    },
    #[error("requested {wanted} dev documents but only {available} train documents exist")]
    DevTooLarge { wanted: usize, available: usize },
    #[error("empty corpus")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unsplit,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "unsplit" => Ok(Split::Unsplit),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// One clinical note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub category: String,
    pub dataset: String,
    #[serde(default)]
    pub split: Split,
}

pub fn parse_corpus(input: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let doc: Document = serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if doc.id.is_empty() || doc.text.is_empty() {
            return Err(CorpusError::Malformed {
                line: idx + 1,
                msg: "id and text must be non-empty".into(),
            });
        }
        if !ids.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    parse_corpus(&fs::read_to_string(path)?)
}

pub fn format_corpus(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        // Serializing a plain struct of strings cannot fail.
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    out
}

/// Fisher-Yates over `items` driven by a ChaCha8 stream seeded with `seed`.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Stable per-category seed so adding a category to the quota does not
/// reshuffle the others.
fn category_seed(seed: u64, category: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in category.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Draws exactly `quota[c]` documents of each category `c`.
///
/// Each category pool is sorted by id and shuffled with a seeded Fisher-Yates;
/// the first `quota[c]` are kept. Output is sorted by id.
pub fn stratified_sample(
    docs: &[Document],
    quota: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<Vec<Document>, CorpusError> {
    let mut out = Vec::new();
    for (category, &wanted) in quota {
        if wanted == 0 {
            continue;
        }
        let mut pool: Vec<&Document> = docs.iter().filter(|d| &d.category == category).collect();
        if pool.len() < wanted {
            return Err(CorpusError::QuotaShortfall {
                category: category.clone(),
                wanted,
                available: pool.len(),
            });
        }
        pool.sort_by(|a, b| a.id.cmp(&b.id));
        seeded_shuffle(&mut pool, category_seed(seed, category));
        out.extend(pool.into_iter().take(wanted).cloned());
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Moves `n` seeded-random train documents to the dev split.
///
/// Returns every input document in input order; only the selected ones change split.
pub fn sample_dev(docs: &[Document], n: usize, seed: u64) -> Result<Vec<Document>, CorpusError> {
    let mut train: Vec<&str> = docs
        .iter()
        .filter(|d| d.split == Split::Train)
        .map(|d| d.id.as_str())
        .collect();
    if n > train.len() {
        return Err(CorpusError::DevTooLarge {
            wanted: n,
            available: train.len(),
        });
    }
    train.sort_unstable();
    seeded_shuffle(&mut train, seed);
    let chosen: HashSet<&str> = train.into_iter().take(n).collect();
    Ok(docs
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if chosen.contains(d.id.as_str()) {
                d.split = Split::Dev;
            }
            d
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub min: usize,
    /// Lower middle element for even counts.
    pub median: usize,
    /// Mean of the two middle elements for even counts.
    pub median_mean: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub dataset: String,
    pub total: usize,
    pub splits: BTreeMap<Split, usize>,
    pub tokens_per_document: TokenStats,
}

pub fn corpus_stats(docs: &[Document]) -> Result<CorpusManifest, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts: Vec<usize> = docs.iter().map(|d| tokenize(&d.text).len()).collect();
    counts.sort_unstable();
    let n = counts.len();
    let lower = counts[(n - 1) / 2];
    let upper = counts[n / 2];

    let mut splits = BTreeMap::new();
    for d in docs {
        *splits.entry(d.split).or_insert(0) += 1;
    }
    let mut datasets: Vec<&str> = docs.iter().map(|d| d.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();

    Ok(CorpusManifest {
        dataset: datasets.join("+"),
        total: n,
        splits,
        tokens_per_document: TokenStats {
            min: counts[0],
            median: lower,
            median_mean: (lower + upper) as f64 / 2.0,
            max: counts[n - 1],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, category: &str, split: Split) -> Document {
        Document {
            id: id.into(),
            text: format!("note {id}"),
            category: category.into(),
            dataset: "toy".into(),
            split,
        }
    }

    fn pool(per_category: &[(&str, usize)]) -> Vec<Document> {
        per_category
            .iter()
            .flat_map(|&(c, n)| (0..n).map(move |i| doc(&format!("{c}-{i:04}"), c, Split::Unsplit)))
            .collect()
    }

    fn quota(entries: &[(&str, usize)]) -> BTreeMap<String, usize> {
        entries.iter().map(|&(c, n)| (c.to_string(), n)).collect()
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse_corpus("").unwrap().is_empty());
    }

    #[test]
    fn lines_load_in_order() {
        let text = r#"{"id":"b","text":"pain","category":"progress","dataset":"toy","split":"train"}
{"id":"a","text":"fever","category":"nursing","dataset":"toy"}
"#;
        let docs = parse_corpus(text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "b");
        assert_eq!(docs[1].split, Split::Unsplit);
    }

    #[test]
    fn missing_text_names_the_line() {
        let text = "# provenance\n{\"id\":\"a\",\"text\":\"x\",\"category\":\"c\",\"dataset\":\"d\"}\n{\"id\":\"b\",\"category\":\"c\",\"dataset\":\"d\"}\n";
        match parse_corpus(text) {
            Err(CorpusError::Malformed { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("text"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_split_and_duplicates_rejected() {
        let bad = r#"{"id":"a","text":"x","category":"c","dataset":"d","split":"holdout"}"#;
        assert!(matches!(parse_corpus(bad), Err(CorpusError::Malformed { line: 1, .. })));
        let dup = "{\"id\":\"a\",\"text\":\"x\",\"category\":\"c\",\"dataset\":\"d\"}\n".repeat(2);
        match parse_corpus(&dup) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn four_way_stratification_draws_a_thousand() {
        let docs = pool(&[("progress", 400), ("nursing", 300), ("discharge", 260), ("radiology", 900)]);
        let q = quota(&[("progress", 250), ("nursing", 250), ("discharge", 250), ("radiology", 250)]);
        let out = stratified_sample(&docs, &q, 7).unwrap();
        assert_eq!(out.len(), 1000);
        for (c, n) in &q {
            assert_eq!(out.iter().filter(|d| &d.category == c).count(), *n);
        }
        assert!(out.windows(2).all(|w| w[0].id < w[1].id));
    }

    #[test]
    fn uneven_quota_draws_seven_forty_six() {
        let docs = pool(&[("progress", 300), ("nursing", 129), ("discharge", 200), ("procedure", 251)]);
        let q = quota(&[("progress", 250), ("nursing", 129), ("discharge", 117), ("procedure", 250)]);
        assert_eq!(stratified_sample(&docs, &q, 1).unwrap().len(), 746);
    }

    #[test]
    fn zero_quota_is_empty() {
        assert!(stratified_sample(&[], &quota(&[("x", 0)]), 0).unwrap().is_empty());
    }

    #[test]
    fn shortfall_names_category() {
        let docs = pool(&[("nursing", 3)]);
        let err = stratified_sample(&docs, &quota(&[("nursing", 5)]), 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nursing") && msg.contains("short by 2"), "{msg}");
    }

    #[test]
    fn sampling_is_seeded() {
        let docs = pool(&[("a", 50), ("b", 50)]);
        let q = quota(&[("a", 10), ("b", 5)]);
        let x = stratified_sample(&docs, &q, 3).unwrap();
        assert_eq!(x, stratified_sample(&docs, &q, 3).unwrap());
        assert_ne!(x, stratified_sample(&docs, &q, 4).unwrap());
        // Input order does not matter.
        let mut rev = docs.clone();
        rev.reverse();
        assert_eq!(x, stratified_sample(&rev, &q, 3).unwrap());
    }

    #[test]
    fn dev_split_from_train() {
        let docs: Vec<Document> = (0..303)
            .map(|i| doc(&format!("n{i:03}"), "discharge", Split::Train))
            .collect();
        let out = sample_dev(&docs, 25, 11).unwrap();
        assert_eq!(out.iter().filter(|d| d.split == Split::Dev).count(), 25);
        assert_eq!(out.iter().filter(|d| d.split == Split::Train).count(), 278);
        assert_eq!(out, sample_dev(&docs, 25, 11).unwrap());
        assert!(sample_dev(&docs, 0, 11).unwrap().iter().all(|d| d.split == Split::Train));
        assert!(matches!(
            sample_dev(&docs, 304, 11),
            Err(CorpusError::DevTooLarge { wanted: 304, available: 303 })
        ));
    }

    #[test]
    fn dev_split_ignores_other_splits() {
        let docs = vec![doc("t", "c", Split::Test), doc("u", "c", Split::Train)];
        let out = sample_dev(&docs, 1, 0).unwrap();
        assert_eq!(out[0].split, Split::Test);
        assert_eq!(out[1].split, Split::Dev);
        assert!(sample_dev(&docs, 2, 0).is_err());
    }

    #[test]
    fn stats_single_document() {
        let mut d = doc("a", "c", Split::Train);
        d.text = "a b".into();
        let m = corpus_stats(&[d]).unwrap();
        let t = &m.tokens_per_document;
        assert_eq!((t.min, t.median, t.max), (2, 2, 2));
        assert_eq!(m.splits[&Split::Train], 1);
    }

    #[test]
    fn stats_odd_and_even_medians() {
        let mk = |id: &str, n: usize| {
            let mut d = doc(id, "c", Split::Dev);
            d.text = vec!["w"; n].join(" ");
            d
        };
        let m = corpus_stats(&[mk("a", 6), mk("b", 2), mk("c", 4)]).unwrap();
        let t = &m.tokens_per_document;
        assert_eq!((t.min, t.median, t.max), (2, 4, 6));
        assert_eq!(t.median_mean, 4.0);

        let m = corpus_stats(&[mk("a", 203), mk("b", 204), mk("c", 100), mk("d", 300)]).unwrap();
        assert_eq!(m.tokens_per_document.median, 203);
        assert_eq!(m.tokens_per_document.median_mean, 203.5);
        assert_eq!(m.total, m.splits.values().sum::<usize>());
    }

    #[test]
    fn stats_on_empty_corpus_fail() {
        assert_eq!(corpus_stats(&[]).unwrap_err().to_string(), "empty corpus");
    }
}
