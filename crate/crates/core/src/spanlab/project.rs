use super::{EntitySpan, Label, LabelClass, SpanError, Token, TokenLabelSequence};

/// Labels each token with the class of any span it overlaps, `O` otherwise.
///
/// When spans of different classes cover the same token, MED beats DIS beats SYM.
pub fn project_to_io(
    doc_id: &str,
    text: &str,
    tokens: &[Token],
    spans: &[EntitySpan],
) -> Result<TokenLabelSequence, SpanError> {
    for s in spans {
        if s.start >= s.end || s.end > text.len() {
            return Err(SpanError::SpanOutOfBounds {
                start: s.start,
                end: s.end,
                len: text.len(),
            });
        }
    }

    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));

    let mut labels = Vec::with_capacity(tokens.len());
    let mut first = 0;
    for tok in tokens {
        // Tokens arrive in offset order, so spans that end before this token are done.
        while first < sorted.len() && sorted[first].end <= tok.start {
            first += 1;
        }
        let best = sorted[first..]
            .iter()
            .take_while(|s| s.start < tok.end)
            .filter(|s| s.overlaps(tok.start, tok.end))
            .map(|s| s.label)
            .min_by_key(|c| c.priority());
        labels.push(best.map_or(Label::O, Label::I));
    }

    Ok(TokenLabelSequence::new(
        doc_id,
        tokens.iter().map(|t| t.text.clone()).collect(),
        labels,
    ))
}

/// Token-wise union of two single-task labelings of the same document.
pub fn union_labels(
    a: &TokenLabelSequence,
    b: &TokenLabelSequence,
) -> Result<TokenLabelSequence, SpanError> {
    a.check_aligned(b)?;
    let task = |s: &TokenLabelSequence| -> Result<Option<LabelClass>, SpanError> {
        match s.classes().as_slice() {
            [] => Ok(None),
            [c] => Ok(Some(*c)),
            [x, y, ..] => Err(SpanError::TaskMismatch {
                doc_id: s.doc_id.clone(),
                left: *x,
                right: *y,
            }),
        }
    };
    if let (Some(x), Some(y)) = (task(a)?, task(b)?) {
        if x != y {
            return Err(SpanError::TaskMismatch {
                doc_id: a.doc_id.clone(),
                left: x,
                right: y,
            });
        }
    }

    let labels = a
        .labels
        .iter()
        .zip(&b.labels)
        .map(|(&x, &y)| if x.is_entity() { x } else { y })
        .collect();
    Ok(TokenLabelSequence::new(
        a.doc_id.clone(),
        a.tokens.clone(),
        labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::{ground_entities, tokenize};
    use super::*;
    use proptest::prelude::*;

    const SYM: Label = Label::I(LabelClass::Sym);

    #[test]
    fn symptom_spans_project_to_tokens() {
        let text = "denies nausea and vomiting";
        let g = ground_entities(text, &["nausea", "vomiting"], LabelClass::Sym, "t");
        let seq = project_to_io("d", text, &tokenize(text), &g.spans).unwrap();
        assert_eq!(seq.labels, vec![Label::O, SYM, Label::O, SYM]);
    }

    #[test]
    fn no_spans_is_all_outside() {
        let text = "no acute distress";
        let seq = project_to_io("d", text, &tokenize(text), &[]).unwrap();
        assert_eq!(seq.labels, vec![Label::O; 3]);
    }

    #[test]
    fn multi_token_span_labels_each_token() {
        let text = "heparin sodium";
        let span = EntitySpan::new(0, 14, LabelClass::Med, "t");
        let seq = project_to_io("d", text, &tokenize(text), &[span]).unwrap();
        assert_eq!(seq.labels, vec![Label::I(LabelClass::Med); 2]);
    }

    #[test]
    fn partial_overlap_labels_the_whole_token() {
        let text = "rashes noted";
        let span = EntitySpan::new(0, 4, LabelClass::Sym, "t");
        let seq = project_to_io("d", text, &tokenize(text), &[span]).unwrap();
        assert_eq!(seq.labels, vec![SYM, Label::O]);
    }

    #[test]
    fn class_priority_resolves_conflicts() {
        let text = "steroid myopathy";
        let spans = [
            EntitySpan::new(0, 16, LabelClass::Sym, "a"),
            EntitySpan::new(0, 16, LabelClass::Dis, "b"),
            EntitySpan::new(0, 7, LabelClass::Med, "c"),
        ];
        let seq = project_to_io("d", text, &tokenize(text), &spans).unwrap();
        assert_eq!(
            seq.labels,
            vec![Label::I(LabelClass::Med), Label::I(LabelClass::Dis)]
        );
    }

    #[test]
    fn out_of_bounds_span_is_an_error() {
        let text = "pain";
        let span = EntitySpan::new(2, 9, LabelClass::Sym, "t");
        assert!(matches!(
            project_to_io("d", text, &tokenize(text), &[span]),
            Err(SpanError::SpanOutOfBounds { .. })
        ));
        let empty = EntitySpan::new(2, 2, LabelClass::Sym, "t");
        assert!(project_to_io("d", text, &tokenize(text), &[empty]).is_err());
    }

    fn seq(labels: &[Label]) -> TokenLabelSequence {
        let toks = (0..labels.len()).map(|i| format!("t{i}")).collect();
        TokenLabelSequence::new("d", toks, labels.to_vec())
    }

    #[test]
    fn union_by_hand() {
        let a = seq(&[Label::O, SYM, Label::O, Label::O]);
        let b = seq(&[Label::O, Label::O, SYM, Label::O]);
        assert_eq!(
            union_labels(&a, &b).unwrap().labels,
            vec![Label::O, SYM, SYM, Label::O]
        );
    }

    #[test]
    fn union_rejects_misaligned_tokens() {
        let a = seq(&[Label::O, SYM]);
        let mut b = seq(&[Label::O, SYM]);
        b.tokens[1] = "other".into();
        assert!(matches!(
            union_labels(&a, &b),
            Err(SpanError::TokenMismatch { .. })
        ));
        let c = seq(&[Label::O]);
        assert!(union_labels(&a, &c).is_err());
    }

    #[test]
    fn union_rejects_mixed_tasks() {
        let a = seq(&[SYM, Label::O]);
        let b = seq(&[Label::O, Label::I(LabelClass::Med)]);
        assert!(matches!(
            union_labels(&a, &b),
            Err(SpanError::TaskMismatch { .. })
        ));
    }

    fn labels(len: usize) -> impl Strategy<Value = Vec<Label>> {
        proptest::collection::vec(prop_oneof![Just(Label::O), Just(SYM)], len)
    }

    proptest! {
        #[test]
        fn union_is_a_semilattice(
            (a, b, c) in (0usize..24).prop_flat_map(|n| (labels(n), labels(n), labels(n)))
        ) {
            let (a, b, c) = (seq(&a), seq(&b), seq(&c));
            let ab = union_labels(&a, &b).unwrap();
            prop_assert_eq!(&ab, &union_labels(&b, &a).unwrap());
            prop_assert_eq!(
                union_labels(&ab, &c).unwrap(),
                union_labels(&a, &union_labels(&b, &c).unwrap()).unwrap()
            );
            prop_assert_eq!(&union_labels(&a, &a).unwrap(), &a);
            let zero = seq(&vec![Label::O; a.len()]);
            prop_assert_eq!(&union_labels(&a, &zero).unwrap(), &a);
            for i in 0..a.len() {
                prop_assert_eq!(
                    ab.labels[i].is_entity(),
                    a.labels[i].is_entity() || b.labels[i].is_entity()
                );
            }
        }

        #[test]
        fn projection_has_one_label_per_token(
            text in "[a-z .,]{0,60}",
            spans in proptest::collection::vec((0usize..60, 1usize..10), 0..6),
        ) {
            let toks = tokenize(&text);
            let spans: Vec<EntitySpan> = spans
                .into_iter()
                .filter(|(s, l)| s + l <= text.len())
                .map(|(s, l)| EntitySpan::new(s, s + l, LabelClass::Sym, "p"))
                .collect();
            let out = project_to_io("d", &text, &toks, &spans).unwrap();
            prop_assert_eq!(out.labels.len(), toks.len());
        }
    }
}
