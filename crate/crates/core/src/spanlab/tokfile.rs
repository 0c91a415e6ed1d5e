//! Token-label file: per document a `# doc_id = <id>` header, one
//! `token<TAB>label` line per token, then a blank line. Other `#` lines between
//! documents are comments.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Label, SpanError, TokenLabelSequence};

const HEADER: &str = "# doc_id = ";

pub fn format_token_file(seqs: &[TokenLabelSequence]) -> Result<String, SpanError> {
    let mut out = String::new();
    for seq in seqs {
        validate(seq)?;
        out.push_str(HEADER);
        out.push_str(&seq.doc_id);
        out.push('\n');
        for (tok, label) in seq.tokens.iter().zip(&seq.labels) {
            let _ = writeln!(out, "{tok}\t{label}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn validate(seq: &TokenLabelSequence) -> Result<(), SpanError> {
    let bad = |msg: String| SpanError::Unwritable {
        doc_id: seq.doc_id.clone(),
        msg,
    };
    if seq.doc_id.is_empty() || seq.doc_id.trim() != seq.doc_id || seq.doc_id.contains('\n') {
        return Err(bad("doc_id must be non-empty, single-line and unpadded".into()));
    }
    if seq.tokens.len() != seq.labels.len() {
        return Err(bad(format!(
            "{} tokens but {} labels",
            seq.tokens.len(),
            seq.labels.len()
        )));
    }
    if let Some(t) = seq
        .tokens
        .iter()
        .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
    {
        return Err(bad(format!("token {t:?} is empty or contains whitespace")));
    }
    Ok(())
}

pub fn parse_token_file(input: &str) -> Result<Vec<TokenLabelSequence>, SpanError> {
    let mut out: Vec<TokenLabelSequence> = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<TokenLabelSequence> = None;

    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let err = |msg: String| SpanError::Parse { line: line_no, msg };

        match current.as_mut() {
            Some(seq) => {
                if line.is_empty() {
                    out.extend(current.take());
                    continue;
                }
                let (tok, label) = line
                    .split_once('\t')
                    .ok_or_else(|| err("expected token<TAB>label".into()))?;
                if tok.is_empty() || label.contains('\t') {
                    return Err(err("expected exactly two non-empty fields".into()));
                }
                let label: Label = label.parse().map_err(err)?;
                seq.tokens.push(tok.to_string());
                seq.labels.push(label);
            }
            None => {
                if line.is_empty() {
                    continue;
                }
                if let Some(id) = line.strip_prefix(HEADER) {
                    if id.is_empty() {
                        return Err(err("empty doc_id".into()));
                    }
                    if !seen.insert(id.to_string()) {
                        return Err(err(format!("duplicate doc_id {id:?}")));
                    }
                    current = Some(TokenLabelSequence::new(id, Vec::new(), Vec::new()));
                } else if !line.starts_with('#') {
                    return Err(err(format!("missing \"{HEADER}<id>\" header")));
                }
            }
        }
    }
    out.extend(current);
    Ok(out)
}

/// Writes sequences, prefixed by any comment lines (each gets a leading `# `).
pub fn write_token_file(
    path: &Path,
    seqs: &[TokenLabelSequence],
    comments: &[String],
) -> Result<(), SpanError> {
    let mut text = String::new();
    for c in comments {
        let _ = writeln!(text, "# {c}");
    }
    if !comments.is_empty() {
        text.push('\n');
    }
    text.push_str(&format_token_file(seqs)?);
    fs::write(path, text)?;
    Ok(())
}

pub fn read_token_file(path: &Path) -> Result<Vec<TokenLabelSequence>, SpanError> {
    parse_token_file(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::LabelClass;
    use super::*;
    use proptest::prelude::*;

    fn two_tokens() -> TokenLabelSequence {
        TokenLabelSequence::new(
            "note-1",
            vec!["denies".into(), "nausea".into()],
            vec![Label::O, Label::I(LabelClass::Sym)],
        )
    }

    #[test]
    fn one_document_is_four_lines() {
        let text = format_token_file(&[two_tokens()]).unwrap();
        assert_eq!(text, "# doc_id = note-1\ndenies\tO\nnausea\tI-SYM\n\n");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn unknown_label_names_the_line() {
        let err = parse_token_file("# doc_id = a\nx\tO\ny\tI-XYZ\n\n").unwrap_err();
        match err {
            SpanError::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("I-XYZ"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_an_error() {
        let err = parse_token_file("x\tO\n").unwrap_err();
        assert!(matches!(err, SpanError::Parse { line: 1, .. }));
    }

    #[test]
    fn wrong_field_count_is_an_error() {
        assert!(matches!(
            parse_token_file("# doc_id = a\nx\n"),
            Err(SpanError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_token_file("# doc_id = a\nx\tO\tO\n"),
            Err(SpanError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn comments_and_empty_documents() {
        let text = "# config_hash = abc\n\n# doc_id = a\n\n# doc_id = b\n#\tO\n";
        let seqs = parse_token_file(text).unwrap();
        assert_eq!(seqs.len(), 2);
        assert!(seqs[0].is_empty());
        assert_eq!(seqs[1].tokens, vec!["#".to_string()]);
    }

    #[test]
    fn duplicate_doc_is_an_error() {
        assert!(parse_token_file("# doc_id = a\n\n# doc_id = a\n\n").is_err());
    }

    #[test]
    fn unwritable_tokens_are_rejected() {
        let mut s = two_tokens();
        s.tokens[0] = "has space".into();
        assert!(format_token_file(&[s]).is_err());
        let mut s = two_tokens();
        s.doc_id = "two\nlines".into();
        assert!(format_token_file(&[s]).is_err());
    }

    #[test]
    fn file_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        write_token_file(&path, &[two_tokens()], &["config_hash = 00ff".into()]).unwrap();
        assert_eq!(read_token_file(&path).unwrap(), vec![two_tokens()]);
    }

    pub(crate) fn arb_label() -> impl Strategy<Value = Label> {
        prop_oneof![
            Just(Label::O),
            Just(Label::I(LabelClass::Med)),
            Just(Label::I(LabelClass::Dis)),
            Just(Label::I(LabelClass::Sym)),
        ]
    }

    proptest! {
        #[test]
        fn read_after_write_is_identity(
            docs in proptest::collection::vec(
                ("[a-z0-9_-]{1,8}", proptest::collection::vec(("[^\\s]{1,6}", arb_label()), 0..10)),
                0..5,
            )
        ) {
            let mut seen = HashSet::new();
            let seqs: Vec<TokenLabelSequence> = docs
                .into_iter()
                .filter(|(id, _)| seen.insert(id.clone()))
                .map(|(id, toks)| {
                    let (t, l) = toks.into_iter().unzip();
                    TokenLabelSequence::new(id, t, l)
                })
                .collect();
            let text = format_token_file(&seqs).unwrap();
            prop_assert_eq!(parse_token_file(&text).unwrap(), seqs);
        }
    }
}
