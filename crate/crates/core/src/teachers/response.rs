/// Extracts entity strings from a teacher reply.
///
/// A JSON object with a string `entities` field is split on `//`; anything
/// else falls back to splitting the raw text. Pieces are trimmed, empties
/// dropped and exact duplicates removed, keeping first-seen order.
pub fn parse_teacher_response(raw: &str) -> Vec<String> {
    let source = structured_entities(raw);
    let source = source.as_deref().unwrap_or(raw);

    let mut out: Vec<String> = Vec::new();
    for piece in source.split("//") {
        let piece = piece.trim();
        if !piece.is_empty() && !out.iter().any(|e| e == piece) {
            out.push(piece.to_string());
        }
    }
    out
}

fn structured_entities(raw: &str) -> Option<String> {
    let trimmed = strip_code_fence(raw.trim());
    let value: serde_json::Value = serde_json::from_str(trimmed)
        .ok()
        .or_else(|| {
            // Replies copied from the prompt example sometimes keep doubled braces.
            let inner = trimmed.strip_prefix("{{")?.strip_suffix("}}")?;
            serde_json::from_str(&format!("{{{inner}}}")).ok()
        })?;
    match value.get("entities")? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Array(items) => Some(
            items
                .iter()
                .filter_map(|v| v.as_str())
                .collect::<Vec<_>>()
                .join("//"),
        ),
        _ => None,
    }
}

fn strip_code_fence(s: &str) -> &str {
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}
