//! Blocking JSON transports for the two supported HTTP dialects.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{AttemptError, CallOrigin, CompletionRequest, GatewayError, Transport};

/// How an HTTP status should be handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusClass {
    Success,
    Transient,
    Rejected,
}

pub fn classify_status(status: u16) -> StatusClass {
    match status {
        200..=299 => StatusClass::Success,
        408 | 429 | 500..=599 => StatusClass::Transient,
        _ => StatusClass::Rejected,
    }
}

fn agent(timeout: Duration) -> Agent {
    let config = Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build();
    Agent::new_with_config(config)
}

fn join_url(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

fn post_json(agent: &Agent, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, AttemptError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(token) = bearer {
        req = req.header("Authorization", &format!("Bearer {token}"));
    }
    let payload = serde_json::to_vec(body).expect("request bodies always serialize");
    let mut resp = req.send(&payload[..]).map_err(transport_error)?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| AttemptError::Transient(format!("reading body: {e}")))?;
    match classify_status(status) {
        StatusClass::Success => serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(GatewayError::WireFormat(format!("invalid JSON: {e}")))),
        StatusClass::Transient => Err(AttemptError::Transient(format!("HTTP {status}: {}", snippet(&text)))),
        StatusClass::Rejected => Err(AttemptError::Fatal(GatewayError::Rejected { status, body: text })),
    }
}

fn snippet(text: &str) -> &str {
    match text.char_indices().nth(200) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

fn transport_error(err: ureq::Error) -> AttemptError {
    use ureq::Error as E;
    match err {
        E::Io(_) | E::Timeout(_) | E::HostNotFound | E::ConnectionFailed | E::Protocol(_) | E::BodyStalled => {
            AttemptError::Transient(err.to_string())
        }
        other => AttemptError::Fatal(GatewayError::InvalidRequest(other.to_string())),
    }
}

fn content_at(value: &Value, pointer: &str) -> Result<String, AttemptError> {
    match value.pointer(pointer) {
        Some(Value::String(s)) => Ok(s.clone()),
        // Some servers send `null` content when the model emits nothing.
        Some(Value::Null) => Ok(String::new()),
        _ => Err(AttemptError::Fatal(GatewayError::WireFormat(format!(
            "missing string at `{pointer}`"
        )))),
    }
}

fn user_messages(prompt: &str) -> Value {
    json!([{ "role": "user", "content": prompt }])
}

/// `POST /v1/chat/completions`.
pub struct OpenAiTransport {
    url: String,
    token: Option<String>,
    agent: Agent,
}

impl OpenAiTransport {
    /// `base_url` may or may not already end in `/v1`.
    pub fn new(base_url: &str, token: Option<String>, timeout: Duration) -> Self {
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/v1") {
            join_url(base, "/chat/completions")
        } else {
            join_url(base, "/v1/chat/completions")
        };
        Self {
            url,
            token,
            agent: agent(timeout),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for OpenAiTransport {
    fn send(&self, request: &CompletionRequest, _: &CallOrigin, _: u32) -> Result<String, AttemptError> {
        let body = json!({
            "model": request.model_id,
            "messages": user_messages(&request.prompt),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = post_json(&self.agent, &self.url, self.token.as_deref(), &body)?;
        content_at(&value, "/choices/0/message/content")
    }
}

/// `POST /api/chat` with streaming off.
pub struct OllamaTransport {
    url: String,
    token: Option<String>,
    agent: Agent,
}

impl OllamaTransport {
    pub fn new(base_url: &str, token: Option<String>, timeout: Duration) -> Self {
        Self {
            url: join_url(base_url, "/api/chat"),
            token,
            agent: agent(timeout),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for OllamaTransport {
    fn send(&self, request: &CompletionRequest, _: &CallOrigin, _: u32) -> Result<String, AttemptError> {
        let body = json!({
            "model": request.model_id,
            "messages": user_messages(&request.prompt),
            "options": { "temperature": request.temperature },
            "stream": false,
        });
        let value = post_json(&self.agent, &self.url, self.token.as_deref(), &body)?;
        content_at(&value, "/message/content")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert_eq!(classify_status(200), StatusClass::Success);
        assert_eq!(classify_status(429), StatusClass::Transient);
        assert_eq!(classify_status(408), StatusClass::Transient);
        assert_eq!(classify_status(503), StatusClass::Transient);
        assert_eq!(classify_status(400), StatusClass::Rejected);
        assert_eq!(classify_status(401), StatusClass::Rejected);
        assert_eq!(classify_status(404), StatusClass::Rejected);
    }

    #[test]
    fn endpoint_paths() {
        let t = Duration::from_secs(1);
        assert_eq!(
            OpenAiTransport::new("https://api.example.com", None, t).url(),
            "https://api.example.com/v1/chat/completions"
        );
        assert_eq!(
            OpenAiTransport::new("https://api.example.com/v1/", None, t).url(),
            "https://api.example.com/v1/chat/completions"
        );
        assert_eq!(
            OllamaTransport::new("http://localhost:11434/", None, t).url(),
            "http://localhost:11434/api/chat"
        );
    }

    #[test]
    fn content_extraction() {
        let v = json!({"choices": [{"message": {"content": " 4 "}}]});
        assert_eq!(content_at(&v, "/choices/0/message/content").unwrap(), " 4 ");
        let v = json!({"choices": []});
        assert!(matches!(
            content_at(&v, "/choices/0/message/content"),
            Err(AttemptError::Fatal(GatewayError::WireFormat(_)))
        ));
    }
}
