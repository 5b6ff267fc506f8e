use serde_json::Value;

use super::PromptError;

/// Pulls the `"query"` string out of a model reply.
///
/// The first JSON object carrying a string `query` wins; prose and code
/// fences around it are ignored.
pub fn parse_query_response(raw: &str) -> Result<String, PromptError> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        let Some(Ok(Value::Object(obj))) = stream.next() else {
            continue;
        };
        let Some(Value::String(q)) = obj.get("query") else {
            continue;
        };
        let q = q.trim();
        if q.is_empty() {
            return Err(PromptError::MalformedResponse {
                reason: "empty query".into(),
                raw: raw.to_string(),
            });
        }
        return Ok(q.to_string());
    }
    Err(PromptError::MalformedResponse {
        reason: "no JSON object with a \"query\" string".into(),
        raw: raw.to_string(),
    })
}
