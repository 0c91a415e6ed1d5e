//! Regenerates the toy fixture set under `fixtures/toy/`.
//!
//!     cargo run -p nerdistill-cli --example make_toy_fixtures [-- <out-dir>]
//!
//! Fifteen synthetic notes with symptom mentions in brackets; each note ends
//! with a denied symptom that gold leaves outside. Four fake LLM teachers get
//! cassette records built from the bracketed gold: `alpha` answers exactly
//! the gold, `beta` only the first of several mentions, `gamma` the gold plus
//! the denied symptom, `delta` mostly strings that are not in the note. The
//! lexicon teacher tags bare symptom words, including denied ones.
//! `alpha` alone is the intended winner.

use std::fs;
use std::path::PathBuf;

use nerdistill::corpus::format_corpus;
use nerdistill::spanlab::{format_token_file, project_to_io, tokenize};
use nerdistill::teachers::{
    cache_key, estimate_tokens, parse_teacher_response, render_prompt, PromptTemplate,
};
use nerdistill::{Document, EntitySpan, LabelClass, Split, TeacherId, TeacherRecord};

const NOTES: &[(&str, &str, &str)] = &[
    ("toy-d1", "discharge", "Discharge summary. Admitted with [fever] and [productive cough]. Treated with ceftriaxone. Discharged home. Denies chest pain."),
    ("toy-d2", "discharge", "Discharge: presented with [palpitations] and [lightheadedness]. Rhythm monitored, metoprolol started. Denies nausea."),
    ("toy-d3", "discharge", "Hospital course notable for [vomiting] and [diarrhea], resolved with IV fluids. Denies fever."),
    ("toy-d4", "discharge", "Discharged to rehab. Residual [weakness] of the left hand. Follow up in clinic. Denies headache."),
    ("toy-d5", "discharge", "Admitted for [wheezing]; nebulizers given. Discharged on an inhaler. Denies chest pain."),
    ("toy-n1", "nursing", "Nursing: pt resting comfortably, reports [itching] on both arms. Skin intact. Denies fever."),
    ("toy-n2", "nursing", "Nursing assessment: [chills] at 0300, temp 38.4. Blankets provided. Denies cough."),
    ("toy-n3", "nursing", "Patient anxious, [restless] overnight and slept poorly. Family at bedside. Denies chest pain."),
    ("toy-n4", "nursing", "Pt c/o [abdominal pain] and [bloating] after lunch. Abdomen soft. Denies nausea."),
    ("toy-n5", "nursing", "Ambulated in hall with assist. Mild [leg swelling] noted, legs elevated. Denies dizziness."),
    ("toy-p1", "progress", "Progress note. Patient reports [nausea] and [intermittent headache] since Tuesday. Plan: continue ondansetron. Denies fever."),
    ("toy-p2", "progress", "Seen on rounds. Complains of [shortness of breath] on exertion. Scattered crackles. Started furosemide. Denies chest pain."),
    ("toy-p3", "progress", "Afebrile overnight. Persistent [dry cough] and [fatigue]. Chest film unchanged. Denies chills."),
    ("toy-p4", "progress", "Reports [dizziness] when standing. Orthostatic vitals ordered. Denies nausea."),
    ("toy-p5", "progress", "Post-op day 2. [Incisional pain] controlled with acetaminophen. Tolerating diet. Denies vomiting."),
];

const LEXICON: &[(&str, &str, &str)] = &[
    ("nausea", "T184", "SYM"),
    ("headache", "T184", "SYM"),
    ("cough", "T184", "SYM"),
    ("fatigue", "T184", "SYM"),
    ("dizziness", "T184", "SYM"),
    ("chills", "T184", "SYM"),
    ("fever", "T184", "SYM"),
    ("vomiting", "T184", "SYM"),
    ("diarrhea", "T184", "SYM"),
    ("weakness", "T184", "SYM"),
    ("wheezing", "T184", "SYM"),
    ("abdominal pain", "T184", "SYM"),
    ("anxious", "T184", "SYM"),
    ("chest pain", "T184", "SYM"),
    ("ondansetron", "T121", "MED"),
    ("furosemide", "T121", "MED"),
    ("ceftriaxone", "T195", "MED"),
    ("metoprolol", "T121", "MED"),
];

const PRICING: &str = r#"{
  "gpu_hourly_usd": 4.74,
  "models": {
    "alpha-1": { "input_per_million_usd": 2.5, "output_per_million_usd": 10.0 },
    "beta-1": { "input_per_million_usd": 3.0, "output_per_million_usd": 12.0 },
    "gamma-1": { "input_per_million_usd": 1.25, "output_per_million_usd": 5.0 },
    "delta-1": { "input_per_million_usd": 0.5, "output_per_million_usd": 1.5 }
  }
}
"#;

const CONFIG: &str = r#"# Toy pipeline over the synthetic symptom notes.
task = "SYM"
seed = 20240917
parallelism = 4

[corpus]
documents = "documents.jsonl"
dev_size = 4

[corpus.quota]
discharge = 4
nursing = 4
progress = 4

[paths]
output = "out"
cassettes = "cassettes"
lexicon = "lexicon.jsonl"
gold = "gold.tsv"
pricing = "pricing.json"

[cost]
baseline = "student"

[[teachers]]
name = "alpha"
mode = "replay"
model = "alpha-1"

[[teachers]]
name = "beta"
mode = "replay"
model = "beta-1"

[[teachers]]
name = "gamma"
mode = "replay"
model = "gamma-1"

[[teachers]]
name = "delta"
mode = "replay"
model = "delta-1"

[[teachers]]
name = "ontology"
mode = "lexicon"
"#;

/// Strips the brackets and returns the plain text plus the bracketed strings and spans.
fn unbracket(marked: &str) -> (String, Vec<String>, Vec<EntitySpan>) {
    let mut text = String::new();
    let mut mentions = Vec::new();
    let mut spans = Vec::new();
    let mut open = None;
    for c in marked.chars() {
        match c {
            '[' => open = Some(text.len()),
            ']' => {
                let start = open.take().expect("balanced brackets");
                mentions.push(text[start..].to_string());
                spans.push(EntitySpan::new(start, text.len(), LabelClass::Sym, "gold"));
            }
            _ => text.push(c),
        }
    }
    (text, mentions, spans)
}

fn reply_for(teacher: &str, gold: &[String], denied: &str) -> String {
    let quoted = |xs: &[String]| {
        xs.iter()
            .map(|s| format!("\"{}\"", s.to_lowercase()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    match teacher {
        "alpha" => format!("{{\"entities\": [{}]}}", quoted(gold)),
        "beta" if gold.len() > 1 => gold[0].to_lowercase(),
        "beta" => String::new(),
        "gamma" => {
            let mut all = gold.to_vec();
            all.push(denied.to_string());
            format!("```json\n{{\"entities\": [{}]}}\n```", quoted(&all))
        }
        "delta" => {
            let mut picks = vec!["sore throat".to_string(), "night sweats".to_string(), denied.to_string()];
            if gold.len() > 1 {
                picks.push(gold[1].clone());
            }
            format!("{{{{\"entities\": \"{}\"}}}}", picks.join(" // "))
        }
        _ => unreachable!(),
    }
}

fn main() {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy"));
    let cassettes = out.join("cassettes");
    if cassettes.exists() {
        fs::remove_dir_all(&cassettes).expect("clear cassettes");
    }
    fs::create_dir_all(&cassettes).expect("create fixture dirs");

    let template = PromptTemplate::builtin(LabelClass::Sym);
    let teachers = ["alpha", "beta", "gamma", "delta"];
    let mut docs = Vec::new();
    let mut gold = Vec::new();
    let mut tapes: Vec<String> = vec![String::new(); teachers.len()];
    let mut usage = String::new();

    for (i, &(id, category, marked)) in NOTES.iter().enumerate() {
        let (text, mentions, spans) = unbracket(marked);
        let denied = marked.rsplit_once("Denies ").expect("denial sentence").1.trim_end_matches('.');
        let doc = Document {
            id: id.into(),
            text: text.clone(),
            category: category.into(),
            dataset: "toy".into(),
            split: Split::Unsplit,
        };
        let tokens = tokenize(&text);
        gold.push(project_to_io(id, &text, &tokens, &spans).expect("gold spans in bounds"));

        let prompt = render_prompt(&template, &doc).expect("template renders");
        for (t, name) in teachers.iter().enumerate() {
            let tid = TeacherId::new(*name);
            let raw = reply_for(name, &mentions, denied);
            let rec = TeacherRecord {
                key: cache_key(&tid, LabelClass::Sym, &prompt),
                model: format!("{name}-1"),
                task: LabelClass::Sym,
                doc_id: id.into(),
                entities: parse_teacher_response(&raw),
                tokens_in: estimate_tokens(&prompt),
                tokens_out: estimate_tokens(&raw),
                latency_ms: 900 + 37 * (i as u64) + 250 * (t as u64),
                raw_response: raw,
            };
            tapes[t].push_str(&serde_json::to_string(&rec).unwrap());
            tapes[t].push('\n');
            usage.push_str(&format!(
                "{{\"system\":\"{}\",\"doc_id\":\"{id}\",\"tokens_in\":{},\"tokens_out\":{},\"latency_seconds\":{:.3}}}\n",
                rec.model,
                rec.tokens_in,
                rec.tokens_out,
                rec.latency_ms as f64 / 1000.0
            ));
        }
        let secs = 0.12 + 0.005 * (i % 5) as f64;
        usage.push_str(&format!(
            "{{\"system\":\"student\",\"doc_id\":\"{id}\",\"inference_seconds\":{secs:.3},\"latency_seconds\":{secs:.3}}}\n"
        ));
        docs.push(doc);
    }

    for (t, name) in teachers.iter().enumerate() {
        fs::write(cassettes.join(format!("{name}.jsonl")), &tapes[t]).unwrap();
    }
    let lexicon: String = LEXICON
        .iter()
        .map(|(s, tui, label)| format!("{{\"surface\":\"{s}\",\"tui\":\"{tui}\",\"label\":\"{label}\"}}\n"))
        .collect();

    fs::write(out.join("documents.jsonl"), format_corpus(&docs)).unwrap();
    fs::write(out.join("gold.tsv"), format_token_file(&gold).unwrap()).unwrap();
    fs::write(out.join("lexicon.jsonl"), lexicon).unwrap();
    fs::write(out.join("pricing.json"), PRICING).unwrap();
    fs::write(out.join("usage.jsonl"), usage).unwrap();
    fs::write(out.join("config.toml"), CONFIG).unwrap();
    println!("wrote {} notes to {}", docs.len(), out.display());
}
