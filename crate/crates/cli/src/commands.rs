//! One function per subcommand. Stages talk to each other only through files
//! under the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use nerdistill::corpus::{corpus_stats, format_corpus, load_corpus, sample_dev, stratified_sample, CorpusManifest};
use nerdistill::costing::{build_cost_report, read_usage, CostReport, PricingTable};
use nerdistill::ensemble::{combine_union, format_ranking, select_best_combo};
use nerdistill::evaluation::{
    aggregate_adjudications, compute_metrics, extract_errors, format_worksheet, pooled_confusion,
    read_worksheet, sample_for_adjudication, AdjudicationSummary, ErrorKind,
};
use nerdistill::spanlab::{read_token_file, write_token_file};
use nerdistill::teachers::{
    label_corpus, read_lexicon, ChatEndpoint, CassetteStore, HttpChatEndpoint, LlmTeacher, PromptTemplate,
    Teacher, TeacherMode, TeacherRecord, TeacherStats,
};
use nerdistill::{Combo, Document, Labelings, MetricsReport, Split, TeacherId, TokenLabelSequence};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TeacherKind};

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Winner {
    pub config_hash: String,
    pub task: nerdistill::LabelClass,
    pub members: Vec<TeacherId>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub dev_documents: usize,
}

impl Run {
    fn header(&self) -> String {
        format!("# {}\n", self.cfg.hash_line())
    }

    fn write(&self, rel: impl AsRef<Path>, body: &str) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, body: T) -> Result<PathBuf> {
        let stamped = Stamped {
            config_hash: &self.cfg.hash,
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        self.write(rel, &text)
    }

    fn write_labels(&self, rel: impl AsRef<Path>, seqs: &[TokenLabelSequence]) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_token_file(&path, seqs, &[self.cfg.hash_line()])?;
        Ok(path)
    }

    fn documents(&self) -> Result<Vec<Document>> {
        let path = self.out.join("documents.jsonl");
        if !path.exists() {
            bail!("{} not found; run `sample` first", path.display());
        }
        Ok(load_corpus(&path)?)
    }

    fn split_ids(&self, split: Split) -> Result<Vec<String>> {
        Ok(self
            .documents()?
            .into_iter()
            .filter(|d| d.split == split)
            .map(|d| d.id)
            .collect())
    }

    fn teacher_labels(&self, split: Split, teacher: &TeacherId) -> Result<Labelings> {
        let path = self.out.join("labels").join(split.as_str()).join(format!("{teacher}.tsv"));
        if !path.exists() {
            bail!("{} not found; run `label --split {split}` first", path.display());
        }
        Ok(by_id(read_token_file(&path)?))
    }
}

fn by_id(seqs: Vec<TokenLabelSequence>) -> Labelings {
    seqs.into_iter().map(|s| (s.doc_id.clone(), s)).collect()
}

pub fn sample(run: &Run) -> Result<CorpusManifest> {
    let cfg = &run.cfg;
    let docs = load_corpus(&cfg.corpus.documents)?;
    let mut pool = if cfg.corpus.quota.is_empty() {
        docs
    } else {
        stratified_sample(&docs, &cfg.corpus.quota, cfg.seed)?
    };
    for d in &mut pool {
        if d.split == Split::Unsplit {
            d.split = Split::Train;
        }
    }
    let pool = sample_dev(&pool, cfg.corpus.dev_size, cfg.seed)?;
    let manifest = corpus_stats(&pool)?;
    run.write("documents.jsonl", &format!("{}{}", run.header(), format_corpus(&pool)))?;
    run.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn build_teachers(cfg: &RunConfig) -> Result<Vec<Teacher>> {
    let mut lexicon = None;
    let mut out = Vec::new();
    for t in &cfg.teachers {
        let model = t.model.as_deref().unwrap_or(&t.name);
        let template = PromptTemplate::builtin(cfg.task);
        out.push(match t.mode {
            TeacherKind::Replay => Teacher::Llm(LlmTeacher::new(t.name.as_str(), model, TeacherMode::Replay, template)),
            TeacherKind::Record => Teacher::Llm(LlmTeacher::new(t.name.as_str(), model, TeacherMode::Record, template)),
            TeacherKind::Lexicon => {
                if lexicon.is_none() {
                    let path = cfg.paths.lexicon.as_ref().expect("validated");
                    lexicon = Some(read_lexicon(path)?);
                }
                let lex = lexicon.clone().expect("loaded above").with_source(t.name.clone());
                Teacher::Annotator {
                    id: TeacherId::new(t.name.as_str()),
                    annotator: Box::new(lex),
                }
            }
        });
    }
    Ok(out)
}

fn endpoint(cfg: &RunConfig) -> Option<HttpChatEndpoint> {
    if !cfg.teachers.iter().any(|t| t.mode == TeacherKind::Record) {
        return None;
    }
    let e = cfg.endpoint.as_ref()?;
    let key = std::env::var(&e.api_key_env).ok();
    if key.is_none() {
        log::warn!("{} is not set; calling the endpoint without credentials", e.api_key_env);
    }
    Some(HttpChatEndpoint::new(
        e.url.clone(),
        key,
        Duration::from_secs(e.timeout_secs),
    ))
}

pub fn label(run: &Run, splits: &[Split]) -> Result<BTreeMap<Split, BTreeMap<TeacherId, TeacherStats>>> {
    let cfg = &run.cfg;
    let docs = run.documents()?;
    let teachers = build_teachers(cfg)?;
    let store = CassetteStore::open(&cfg.paths.cassettes)?;
    let http = endpoint(cfg);
    let endpoint = http.as_ref().map(|e| e as &dyn ChatEndpoint);

    let mut summary = BTreeMap::new();
    for &split in splits {
        let subset: Vec<Document> = docs.iter().filter(|d| d.split == split).cloned().collect();
        log::info!("labeling {} {split} documents with {} teachers", subset.len(), teachers.len());
        let labels = label_corpus(&teachers, &subset, cfg.task, &store, endpoint, cfg.parallelism)?;
        let dir = PathBuf::from("labels").join(split.as_str());
        for (id, seqs) in &labels.labels {
            let seqs: Vec<TokenLabelSequence> = seqs.values().cloned().collect();
            run.write_labels(dir.join(format!("{id}.tsv")), &seqs)?;
        }
        for (id, records) in &labels.records {
            run.write(
                PathBuf::from("records").join(split.as_str()).join(format!("{id}.jsonl")),
                &records_body(&run.header(), records),
            )?;
        }
        run.write_json(dir.join("stats.json"), &labels.stats)?;
        summary.insert(split, labels.stats);
    }
    Ok(summary)
}

fn records_body(header: &str, records: &[TeacherRecord]) -> String {
    let mut body = header.to_string();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    body
}

/// Gold restricted to `ids`; every id must have a gold sequence.
fn gold_for(cfg: &RunConfig, ids: &[String]) -> Result<Labelings> {
    let path = cfg
        .paths
        .gold
        .as_ref()
        .context("paths.gold is required for this stage")?;
    let mut all = by_id(read_token_file(path)?);
    let mut out = Labelings::new();
    for id in ids {
        let seq = all
            .remove(id)
            .with_context(|| format!("gold file has no sequence for document {id}"))?;
        out.insert(id.clone(), seq);
    }
    Ok(out)
}

pub fn select(run: &Run) -> Result<Winner> {
    let cfg = &run.cfg;
    let dev = run.split_ids(Split::Dev)?;
    let gold = gold_for(cfg, &dev)?;
    let mut per_teacher = BTreeMap::new();
    for t in &cfg.teachers {
        let id = TeacherId::new(t.name.as_str());
        let labels = run.teacher_labels(Split::Dev, &id)?;
        per_teacher.insert(id, labels);
    }
    let ranking = select_best_combo(&per_teacher, &gold, cfg.task)?;
    run.write("ranking.tsv", &format!("{}{}", run.header(), format_ranking(&ranking)))?;
    let best = &ranking[0];
    let winner = Winner {
        config_hash: cfg.hash.clone(),
        task: cfg.task,
        members: best.combo.members().to_vec(),
        f1: best.f1,
        precision: best.precision,
        recall: best.recall,
        dev_documents: gold.len(),
    };
    let mut text = serde_json::to_string_pretty(&winner)?;
    text.push('\n');
    run.write("winner.json", &text)?;
    Ok(winner)
}

pub fn emit(run: &Run) -> Result<usize> {
    let path = run.out.join("winner.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}; run `select` first", path.display()))?;
    let winner: Winner = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if winner.config_hash != run.cfg.hash {
        log::warn!("winner.json was produced by config {}", winner.config_hash);
    }
    let combo = Combo::new(winner.members.iter().cloned())?;
    let mut per_teacher = BTreeMap::new();
    for id in combo.members() {
        per_teacher.insert(id.clone(), run.teacher_labels(Split::Train, id)?);
    }
    let seqs = run
        .split_ids(Split::Train)?
        .iter()
        .map(|id| combine_union(&per_teacher, &combo, id))
        .collect::<Result<Vec<_>, _>>()?;
    run.write_labels("train.tsv", &seqs)?;
    Ok(seqs.len())
}

fn read_pair(gold: &Path, pred: &Path) -> Result<(Labelings, Labelings)> {
    let g = read_token_file(gold).with_context(|| format!("reading {}", gold.display()))?;
    let p = read_token_file(pred).with_context(|| format!("reading {}", pred.display()))?;
    Ok((by_id(g), by_id(p)))
}

pub fn eval(run: &Run, gold: &Path, pred: &Path) -> Result<String> {
    let (g, p) = read_pair(gold, pred)?;
    let counts = pooled_confusion(&g, &p)?;
    let system = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report: MetricsReport = compute_metrics(counts, Some(run.cfg.task), &system)?;
    stamped_json(&run.cfg.hash, &report)
}

fn stamped_json<T: Serialize>(hash: &str, body: T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Stamped { config_hash: hash, body })?;
    s.push('\n');
    Ok(s)
}

pub struct ExportOptions {
    pub kinds: BTreeSet<ErrorKind>,
    pub n: usize,
    pub double: usize,
    pub window: usize,
}

/// Writes an adjudication worksheet; returns (errors found, rows sampled).
pub fn errors_export(run: &Run, gold: &Path, pred: &Path, opts: &ExportOptions, dest: &Path) -> Result<(usize, usize)> {
    let (g, p) = read_pair(gold, pred)?;
    let mut found = Vec::new();
    for (id, gs) in &g {
        let ps = p
            .get(id)
            .with_context(|| format!("prediction file has no sequence for document {id}"))?;
        found.extend(extract_errors(gs, ps, opts.window)?);
    }
    found.retain(|e| opts.kinds.contains(&e.kind));
    let picked = sample_for_adjudication(&found, opts.n, opts.double, run.cfg.seed)?;
    let body = format!("{}{}", run.header(), format_worksheet(&picked));
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(dest, body).with_context(|| format!("writing {}", dest.display()))?;
    Ok((found.len(), picked.len()))
}

pub fn errors_aggregate(run: &Run, worksheet: &Path) -> Result<String> {
    let records = read_worksheet(worksheet)?;
    let summary: AdjudicationSummary = aggregate_adjudications(&records);
    stamped_json(&run.cfg.hash, &summary)
}

pub fn cost(run: &Run, usage: &Path) -> Result<CostReport> {
    let cfg = &run.cfg;
    let pricing_path = cfg
        .paths
        .pricing
        .as_ref()
        .context("paths.pricing is required for `cost`")?;
    let baseline = cfg
        .cost
        .baseline
        .as_deref()
        .context("cost.baseline is required for `cost`")?;
    let pricing = PricingTable::read(pricing_path)?;
    let records = read_usage(usage).with_context(|| format!("reading {}", usage.display()))?;
    let report = build_cost_report(&records, &pricing, baseline)?;
    run.write_json("cost.json", &report)?;
    run.write("cost.tsv", &format!("{}{}", run.header(), cost_table(&report)))?;
    Ok(report)
}

/// Per-system rows with each column followed by its difference from the baseline.
pub fn cost_table(report: &CostReport) -> String {
    let mut out = String::from(
        "system\tnotes\ttotal_cost_usd\tvs_baseline_pct\ttotal_time_s\tvs_baseline_pct\tcost_per_note_usd\tvs_baseline_pct\ttime_per_note_s\tvs_baseline_pct\n",
    );
    for s in &report.systems {
        let d = &s.vs_baseline;
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:+.1}\t{:.3}\t{:+.1}\t{:.8}\t{:+.1}\t{:.4}\t{:+.1}\n",
            s.system,
            s.notes,
            s.total_cost_usd,
            d.total_cost,
            s.total_time_s,
            d.total_time,
            s.cost_per_note_usd,
            d.cost_per_note,
            s.time_per_note_s,
            d.time_per_note
        ));
    }
    out
}
