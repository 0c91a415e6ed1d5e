use super::Token;

/// Splits text into maximal runs of alphanumeric characters and single
/// characters of anything else that is not whitespace.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;

    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = run_start.take() {
            tokens.push(token(text, s, i));
        }
        if !c.is_whitespace() {
            tokens.push(token(text, i, i + c.len_utf8()));
        }
    }
    if let Some(s) = run_start {
        tokens.push(token(text, s, text.len()));
    }
    tokens
}

fn token(text: &str, start: usize, end: usize) -> Token {
    Token {
        text: text[start..end].to_string(),
        start,
        end,
    }
}
