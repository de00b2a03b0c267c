//! Lenient extraction of a JSON object from LLM completion text: strips code
//! fences and surrounding prose, then takes the outermost balanced object.

use serde_json::Value;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON object found in completion")]
    NoJsonFound,
    #[error("extracted candidate is not valid JSON: {0}")]
    InvalidJson(String),
}

/// Parse a JSON object out of raw completion text. Tries a direct parse
/// first, then falls back to scanning for the first balanced `{...}` block.
pub fn extract_json_object(raw: &str) -> Result<Value, ExtractError> {
    let stripped = strip_code_fences(raw.trim());
    if let Ok(value) = serde_json::from_str::<Value>(stripped) {
        if value.is_object() {
            return Ok(value);
        }
    }
    let candidate = first_balanced_object(stripped).ok_or(ExtractError::NoJsonFound)?;
    serde_json::from_str::<Value>(candidate).map_err(|e| ExtractError::InvalidJson(e.to_string()))
}

fn strip_code_fences(s: &str) -> &str {
    let s = s.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    // Drop the info string ("json", "JSON", ...) up to the first newline.
    let body = match rest.find('\n') {
        Some(pos) => &rest[pos + 1..],
        None => rest,
    };
    body.trim().strip_suffix("```").unwrap_or(body).trim()
}

/// Locate the first balanced top-level `{...}` span, honoring string
/// literals and escapes.
fn first_balanced_object(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut start = None;
    let mut in_string = false;
    let mut escaped = false;
    for (idx, ch) in s.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = Some(idx);
                }
                depth += 1;
            }
            '}'
                if depth > 0 => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&s[start.unwrap()..=idx]);
                    }
                }
            _ => {}
        }
    }
    None
}
