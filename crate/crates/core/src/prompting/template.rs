//! `{slot}` substitution with inline `{ 'a' if include_bbox else 'b'}` conditionals.

use super::PromptError;

/// Resolves every inline conditional on `include_bbox`.
pub(crate) fn resolve_conditionals(body: &str, include_bbox: bool) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{ '") {
        out.push_str(&rest[..start]);
        let expr = &rest[start + 3..];
        let (then_branch, after) = expr
            .split_once("' if ")
            .ok_or_else(|| PromptError::BadTemplate("conditional without `if`".into()))?;
        let (cond, after) = after
            .split_once(" else '")
            .ok_or_else(|| PromptError::BadTemplate("conditional without `else`".into()))?;
        let (else_branch, after) = after
            .split_once("'}")
            .ok_or_else(|| PromptError::BadTemplate("unterminated conditional".into()))?;
        let value = match cond.trim() {
            "include_bbox" => include_bbox,
            "not include_bbox" => !include_bbox,
            other => {
                return Err(PromptError::BadTemplate(format!(
                    "unknown condition {other:?}"
                )))
            }
        };
        out.push_str(if value { then_branch } else { else_branch });
        rest = after;
    }
    out.push_str(rest);
    Ok(out)
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// Single-pass slot substitution; inserted values are never rescanned.
pub(crate) fn substitute(body: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len() * 2);
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let name_len = tail.find(|c: char| !is_slot_char(c)).unwrap_or(tail.len());
        let name = &tail[..name_len];
        if !name.is_empty() && tail[name_len..].starts_with('}') {
            let value = slots
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::UnresolvedSlot(name.to_string()))?;
            out.push_str(value);
            rest = &tail[name_len + 1..];
        } else {
            out.push('{');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}
