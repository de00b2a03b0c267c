//! Wire transports behind the gateway. The HTTP transport speaks the common
//! chat-completions JSON shape; tests swap in scripted stubs.

use std::time::Duration;

/// How a single transport attempt failed. Transient and rate-limited
/// failures are retried; fatal ones are not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Transient(String),
    RateLimited(String),
    Fatal(String),
}

pub trait Transport: Send + Sync {
    /// Send one chat-completions request body, returning the completion text.
    fn send(&self, body: &serde_json::Value) -> Result<String, TransportFailure>;
}

pub struct HttpTransport {
    endpoint: String,
    auth_token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: &str, auth_token: Option<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("http client construction");
        HttpTransport {
            endpoint: endpoint.to_string(),
            auth_token,
            client,
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, body: &serde_json::Value) -> Result<String, TransportFailure> {
        let mut request = self.client.post(&self.endpoint).json(body);
        if let Some(token) = &self.auth_token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| TransportFailure::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| TransportFailure::Transient(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(TransportFailure::RateLimited(format!("429: {text}")));
        }
        if status.is_server_error() {
            return Err(TransportFailure::Transient(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(TransportFailure::Fatal(format!("{status}: {text}")));
        }
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| TransportFailure::Fatal(format!("malformed response body: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| {
                TransportFailure::Fatal("response has no choices[0].message.content".to_string())
            })
    }
}
