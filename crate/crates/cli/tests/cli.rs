use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

fn nerdistill(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nerdistill"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_through_emit(out: &Path) {
    let cfg = toy().join("config.toml");
    for stage in ["sample", "label", "select", "emit"] {
        ok(nerdistill(&cfg, out, &[stage]));
    }
}

fn config_hash(config: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(fs::read(config).unwrap()))
}

#[test]
fn toy_pipeline_selects_alpha() {
    let out = tempfile::tempdir().unwrap();
    let cfg = toy().join("config.toml");
    let sampled = ok(nerdistill(&cfg, out.path(), &["sample"]));
    assert_eq!(sampled.trim(), "sampled 12 documents (train=8 dev=4)");
    ok(nerdistill(&cfg, out.path(), &["label"]));
    let selected = ok(nerdistill(&cfg, out.path(), &["select"]));
    assert!(selected.starts_with("winner\talpha\t"), "{selected}");
    let emitted = ok(nerdistill(&cfg, out.path(), &["emit"]));
    assert_eq!(emitted.trim(), "wrote 8 training sequences");

    let ranking = fs::read_to_string(out.path().join("ranking.tsv")).unwrap();
    let rows: Vec<&str> = ranking.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 31);
    assert!(rows[0].starts_with("1\talpha\t1.000000"));

    // The winner's train labels are exactly alpha's.
    let train = fs::read_to_string(out.path().join("train.tsv")).unwrap();
    let alpha = fs::read_to_string(out.path().join("labels/train/alpha.tsv")).unwrap();
    assert_eq!(train, alpha);
}

#[test]
fn every_output_declares_the_config_hash() {
    let out = tempfile::tempdir().unwrap();
    run_through_emit(out.path());
    let hash = config_hash(&toy().join("config.toml"));
    let mut stack = vec![out.path().to_path_buf()];
    let mut seen = 0;
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let text = fs::read_to_string(&p).unwrap();
            assert!(text.contains(&hash), "{} lacks the config hash", p.display());
            seen += 1;
        }
    }
    assert!(seen >= 20);
}

#[test]
fn eval_scores_a_teacher_against_gold() {
    let out = tempfile::tempdir().unwrap();
    run_through_emit(out.path());
    let cfg = toy().join("config.toml");
    let gold = toy().join("gold.tsv");
    let report = ok(nerdistill(
        &cfg,
        out.path(),
        &["eval", "--gold", gold.to_str().unwrap(), "--pred", gold.to_str().unwrap()],
    ));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["f1"], 1.0);
    assert_eq!(v["task"], "SYM");
    assert_eq!(v["config_hash"], config_hash(&cfg));
}

#[test]
fn eval_with_mismatched_tokens_fails() {
    let dir = tempfile::tempdir().unwrap();
    let gold = toy().join("gold.tsv");
    let bad = dir.path().join("bad.tsv");
    let text = fs::read_to_string(&gold).unwrap().replacen("summary\t", "summery\t", 1);
    fs::write(&bad, text).unwrap();
    let o = nerdistill(
        &toy().join("config.toml"),
        dir.path(),
        &["eval", "--gold", gold.to_str().unwrap(), "--pred", bad.to_str().unwrap()],
    );
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[token_mismatch]: token mismatch in document toy-d1"), "{err}");
}

#[test]
fn config_errors_are_listed_together() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"task = "LAB"
seed = 1
[corpus]
documents = "nowhere.jsonl"
dev_size = 2
[paths]
output = "out"
cassettes = "tapes"
[[teachers]]
name = "x"
mode = "lexicon"
"#,
    )
    .unwrap();
    let o = nerdistill(&cfg, dir.path(), &["sample"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]:"));
    for needle in ["\"LAB\"", "nowhere.jsonl", "paths.lexicon"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn replay_miss_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = fs::read_to_string(toy().join("config.toml"))
        .unwrap()
        .replace("name = \"delta\"", "name = \"epsilon\"");
    for f in ["documents.jsonl", "cassettes", "lexicon.jsonl", "gold.tsv", "pricing.json"] {
        let abs = toy().join(f);
        text = text.replace(&format!("\"{f}\""), &format!("{:?}", abs.to_str().unwrap()));
    }
    let cfg = dir.path().join("epsilon.toml");
    fs::write(&cfg, &text).unwrap();
    ok(nerdistill(&cfg, dir.path(), &["sample"]));
    let label = nerdistill(&cfg, dir.path(), &["label", "--split", "dev"]);
    assert!(!label.status.success());
    let err = stderr(&label);
    assert!(err.starts_with("error[teacher]:"), "{err}");
    assert!(err.contains("cassette miss"), "{err}");
    assert!(err.contains("epsilon"), "{err}");
}

#[test]
fn label_single_split() {
    let out = tempfile::tempdir().unwrap();
    let cfg = toy().join("config.toml");
    ok(nerdistill(&cfg, out.path(), &["sample"]));
    ok(nerdistill(&cfg, out.path(), &["label", "--split", "dev"]));
    assert!(out.path().join("labels/dev/alpha.tsv").exists());
    assert!(!out.path().join("labels/train").exists());
    let o = nerdistill(&cfg, out.path(), &["emit"]);
    assert!(!o.status.success());
}

#[test]
fn adjudication_worksheet_round_trip() {
    let out = tempfile::tempdir().unwrap();
    run_through_emit(out.path());
    let cfg = toy().join("config.toml");
    let gold = out.path().join("dev-gold.tsv");
    // Gold restricted to the dev documents, in the same order as the teacher files.
    let dev_pred = out.path().join("labels/dev/gamma.tsv");
    let ids: Vec<String> = fs::read_to_string(&dev_pred)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("# doc_id = ").map(str::to_string))
        .collect();
    let all = fs::read_to_string(toy().join("gold.tsv")).unwrap();
    let kept: String = all
        .split_inclusive("\n\n")
        .filter(|block| ids.iter().any(|id| block.starts_with(&format!("# doc_id = {id}\n"))))
        .collect();
    fs::write(&gold, kept).unwrap();

    let sheet = out.path().join("review/sheet.tsv");
    let msg = ok(nerdistill(
        &cfg,
        out.path(),
        &[
            "errors", "export",
            "--gold", gold.to_str().unwrap(),
            "--pred", dev_pred.to_str().unwrap(),
            "--worksheet", sheet.to_str().unwrap(),
            "--kind", "fp", "--n", "2", "--double", "1",
        ],
    ));
    assert!(msg.ends_with("errors, 2 sampled\n"), "{msg}");

    let filled = fs::read_to_string(&sheet).unwrap().replace("\t\n", "\tincorrect\n");
    fs::write(&sheet, filled).unwrap();
    let summary = ok(nerdistill(&cfg, out.path(), &["errors", "aggregate", "--worksheet", sheet.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["by_kind"]["false_positive"]["n"], 2);
    assert_eq!(v["double_annotated"], 1);
}

#[test]
fn cost_report_from_usage() {
    let out = tempfile::tempdir().unwrap();
    let cfg = toy().join("config.toml");
    let usage = toy().join("usage.jsonl");
    let table = ok(nerdistill(&cfg, out.path(), &["cost", "--usage", usage.to_str().unwrap()]));
    let first = table.lines().nth(1).unwrap();
    assert!(first.starts_with("student\t15\t"), "{first}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("cost.json")).unwrap()).unwrap();
    assert_eq!(report["baseline"], "student");
    assert_eq!(report["systems"].as_array().unwrap().len(), 5);
}
