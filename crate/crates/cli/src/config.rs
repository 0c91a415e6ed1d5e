//! Run configuration: one TOML file, paths relative to the file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nerdistill::ensemble::MAX_TEACHERS;
use nerdistill::LabelClass;
use serde::Deserialize;
use sha2::{Digest, Sha256};

pub const DEFAULT_KEY_VAR: &str = "NERDISTILL_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Replay,
    Record,
    Lexicon,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub name: String,
    pub mode: TeacherKind,
    /// Model identifier sent to the endpoint; defaults to `name`.
    pub model: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub documents: PathBuf,
    /// Documents per category; empty keeps everything.
    #[serde(default)]
    pub quota: BTreeMap<String, usize>,
    pub dev_size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub output: PathBuf,
    pub cassettes: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub pricing: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_key_var")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_var() -> String {
    DEFAULT_KEY_VAR.into()
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: String,
    seed: u64,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    corpus: CorpusConfig,
    paths: PathsConfig,
    teachers: Vec<TeacherConfig>,
    endpoint: Option<EndpointConfig>,
    #[serde(default)]
    cost: CostConfig,
}

fn default_parallelism() -> usize {
    nerdistill::teachers::DEFAULT_PARALLELISM
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: LabelClass,
    pub seed: u64,
    pub parallelism: usize,
    pub corpus: CorpusConfig,
    pub paths: PathsConfig,
    pub teachers: Vec<TeacherConfig>,
    pub endpoint: Option<EndpointConfig>,
    pub cost: CostConfig,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
}

/// Every problem found in a config, not just the first.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.problems.join("; "))
    }
}

impl std::error::Error for ConfigError {}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let fail = |p: String| ConfigError {
            path: path.to_path_buf(),
            problems: vec![p],
        };
        let bytes = fs::read(path).map_err(|e| fail(format!("cannot read: {e}")))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| fail("not UTF-8".into()))?;
        let raw: RawConfig =
            toml::from_str(&text).map_err(|e| fail(e.message().replace('\n', " ")))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_raw(raw, base, config_hash(&bytes)).map_err(|problems| ConfigError {
            path: path.to_path_buf(),
            problems,
        })
    }

    fn from_raw(mut raw: RawConfig, base: &Path, hash: String) -> Result<Self, Vec<String>> {
        let mut problems = Vec::new();

        let task = raw.task.parse::<LabelClass>().map_err(|_| {
            problems.push(format!("task {:?} is not one of MED, DIS, SYM", raw.task));
        });
        if raw.parallelism == 0 {
            problems.push("parallelism must be at least 1".into());
        }

        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut raw.corpus.documents);
        resolve(&mut raw.paths.output);
        resolve(&mut raw.paths.cassettes);
        for p in [&mut raw.paths.lexicon, &mut raw.paths.gold, &mut raw.paths.pricing]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }

        let mut must_exist = |label: &str, p: &Path| {
            if !p.exists() {
                problems.push(format!("{label} {} does not exist", p.display()));
            }
        };
        must_exist("corpus.documents", &raw.corpus.documents);
        for (label, p) in [
            ("paths.lexicon", &raw.paths.lexicon),
            ("paths.gold", &raw.paths.gold),
            ("paths.pricing", &raw.paths.pricing),
        ] {
            if let Some(p) = p {
                must_exist(label, p);
            }
        }

        if raw.teachers.is_empty() {
            problems.push("no teachers configured".into());
        }
        if raw.teachers.len() > MAX_TEACHERS {
            problems.push(format!(
                "{} teachers configured, at most {MAX_TEACHERS} supported",
                raw.teachers.len()
            ));
        }
        let mut names = BTreeSet::new();
        for t in &raw.teachers {
            if t.name.is_empty() || t.name.chars().any(|c| c.is_whitespace() || c == '/') {
                problems.push(format!("teacher name {:?} must be non-empty without whitespace or '/'", t.name));
            }
            if !names.insert(t.name.as_str()) {
                problems.push(format!("teacher {:?} listed twice", t.name));
            }
            match t.mode {
                TeacherKind::Lexicon if raw.paths.lexicon.is_none() => {
                    problems.push(format!("teacher {:?} needs paths.lexicon", t.name))
                }
                TeacherKind::Record if raw.endpoint.is_none() => {
                    problems.push(format!("teacher {:?} records but no [endpoint] is set", t.name))
                }
                _ => {}
            }
        }

        if let Some(e) = &raw.endpoint {
            if !(e.url.starts_with("http://") || e.url.starts_with("https://")) {
                problems.push(format!("endpoint.url {:?} is not an http(s) URL", e.url));
            }
            if e.timeout_secs == 0 {
                problems.push("endpoint.timeout_secs must be positive".into());
            }
        }

        match (problems.is_empty(), task) {
            (true, Ok(task)) => Ok(RunConfig {
                task,
                seed: raw.seed,
                parallelism: raw.parallelism,
                corpus: raw.corpus,
                paths: raw.paths,
                teachers: raw.teachers,
                endpoint: raw.endpoint,
                cost: raw.cost,
                hash,
            }),
            _ => Err(problems),
        }
    }

    pub fn hash_line(&self) -> String {
        format!("config_hash = {}", self.hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.toml");
        fs::write(&p, body).unwrap();
        p
    }

    const MINIMAL: &str = r#"
task = "MED"
seed = 1
[corpus]
documents = "docs.jsonl"
dev_size = 1
[paths]
output = "out"
cassettes = "tapes"
[[teachers]]
name = "a"
mode = "replay"
"#;

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("docs.jsonl"), "").unwrap();
        let cfg = RunConfig::load(&write(dir.path(), MINIMAL)).unwrap();
        assert_eq!(cfg.task, LabelClass::Med);
        assert_eq!(cfg.paths.output, dir.path().join("out"));
        assert_eq!(cfg.parallelism, 4);
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn hash_tracks_bytes() {
        assert_eq!(config_hash(b"a"), config_hash(b"a"));
        assert_ne!(config_hash(b"a"), config_hash(b"a "));
    }

    #[test]
    fn every_problem_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"
task = "XYZ"
seed = 1
parallelism = 0
[corpus]
documents = "missing.jsonl"
dev_size = 1
[paths]
output = "out"
cassettes = "tapes"
[[teachers]]
name = "a"
mode = "lexicon"
[[teachers]]
name = "a"
mode = "record"
"#;
        let err = RunConfig::load(&write(dir.path(), body)).unwrap_err();
        let joined = err.problems.join("\n");
        assert_eq!(err.problems.len(), 6, "{joined}");
        for needle in ["XYZ", "parallelism", "missing.jsonl", "paths.lexicon", "twice", "[endpoint]"] {
            assert!(joined.contains(needle), "{needle} not in {joined}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = RunConfig::load(&write(dir.path(), &format!("{MINIMAL}\nbogus = 1\n"))).unwrap_err();
        assert_eq!(err.problems.len(), 1);
    }
}
