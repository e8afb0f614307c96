//! JSON request/response adapter for an external text-generation service.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompts::PromptTemplates;
use super::{Backend, BackendRequest, BackendResponse, RequestKind};
use crate::error::{Error, Result};

/// Attempts after the first failed exchange.
pub const MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub kind: RequestKind,
    pub request_id: String,
    pub payload: serde_json::Value,
    /// Rendered prompt, present when templates are configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub request_id: String,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("network failure: {0}")]
    Network(String),
    /// The peer answered, but not with a usable message. Not retried.
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        matches!(self, TransportError::Timeout(_) | TransportError::Network(_))
    }
}

pub trait Transport: Send + Sync {
    fn exchange(&self, request: &WireRequest) -> std::result::Result<WireResponse, TransportError>;
}

/// POSTs each request as JSON to a fixed endpoint.
pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { endpoint: endpoint.into(), agent }
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, request: &WireRequest) -> std::result::Result<WireResponse, TransportError> {
        let body = serde_json::to_vec(request).map_err(|e| TransportError::Protocol(e.to_string()))?;
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(|e| match e {
                ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
                other => TransportError::Network(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let mut text = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| TransportError::Protocol(e.to_string())),
            408 | 429 | 500..=599 => Err(TransportError::Network(format!("HTTP {status}"))),
            _ => Err(TransportError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }
}

type ExchangeFn = dyn Fn(&WireRequest) -> std::result::Result<WireResponse, TransportError> + Send + Sync;

/// Transport backed by a closure; handy for mocks.
pub struct FnTransport(Box<ExchangeFn>);

impl FnTransport {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&WireRequest) -> std::result::Result<WireResponse, TransportError> + Send + Sync + 'static,
    {
        FnTransport(Box::new(f))
    }
}

impl Transport for FnTransport {
    fn exchange(&self, request: &WireRequest) -> std::result::Result<WireResponse, TransportError> {
        (self.0)(request)
    }
}

/// Answers from a table of recorded payloads keyed by request id.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    answers: BTreeMap<String, serde_json::Value>,
}

impl ReplayTransport {
    pub fn new(answers: BTreeMap<String, serde_json::Value>) -> Self {
        ReplayTransport { answers }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn exchange(&self, request: &WireRequest) -> std::result::Result<WireResponse, TransportError> {
        match self.answers.get(&request.request_id) {
            Some(payload) => Ok(WireResponse { request_id: request.request_id.clone(), payload: payload.clone() }),
            None => Err(TransportError::Protocol(format!("no recorded answer for {}", request.request_id))),
        }
    }
}

/// Wraps a backend and records every answer's wire payload.
pub struct Recording<B> {
    inner: B,
    answers: Mutex<BTreeMap<String, serde_json::Value>>,
}

impl<B: Backend> Recording<B> {
    pub fn new(inner: B) -> Self {
        Recording { inner, answers: Mutex::new(BTreeMap::new()) }
    }

    pub fn answers(&self) -> BTreeMap<String, serde_json::Value> {
        self.answers.lock().expect("recording lock").clone()
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn handle(&self, request_id: &str, request: &BackendRequest) -> Result<BackendResponse> {
        let resp = self.inner.handle(request_id, request)?;
        let previous = self
            .answers
            .lock()
            .expect("recording lock")
            .insert(request_id.to_string(), resp.payload_json());
        if previous.is_some() {
            return Err(Error::Backend(format!("request id {request_id} issued twice")));
        }
        Ok(resp)
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }
}

/// Backend that forwards every request over a [`Transport`].
pub struct ExternalBackend {
    transport: Box<dyn Transport>,
    retries: u32,
    templates: Option<PromptTemplates>,
}

impl ExternalBackend {
    pub fn new(transport: impl Transport + 'static) -> Self {
        ExternalBackend { transport: Box::new(transport), retries: MAX_RETRIES, templates: None }
    }

    pub fn http(endpoint: &str, timeout: Duration) -> Self {
        ExternalBackend::new(HttpTransport::new(endpoint, timeout))
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = Some(templates);
        self
    }

    fn decode(&self, request: &BackendRequest, request_id: &str, resp: WireResponse) -> Result<BackendResponse> {
        if resp.request_id != request_id {
            return Err(Error::Backend(format!(
                "response id {} does not match request {request_id}",
                resp.request_id
            )));
        }
        let parsed = BackendResponse::from_wire(request.kind(), resp.payload)?;
        parsed.validate(request)?;
        Ok(parsed)
    }
}

impl Backend for ExternalBackend {
    fn handle(&self, request_id: &str, request: &BackendRequest) -> Result<BackendResponse> {
        let payload = request.payload_json();
        let prompt = self.templates.as_ref().map(|t| t.render(request.kind(), &payload));
        let wire = WireRequest { kind: request.kind(), request_id: request_id.to_string(), payload, prompt };
        let mut last = None;
        for attempt in 0..=self.retries {
            match self.transport.exchange(&wire) {
                Ok(resp) => return self.decode(request, request_id, resp),
                Err(e) if e.retryable() => {
                    log::warn!("{request_id}: attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(Error::Backend(format!("{request_id}: {e}"))),
            }
        }
        Err(Error::Backend(format!(
            "{request_id}: gave up after {} attempts: {}",
            self.retries + 1,
            last.expect("at least one attempt")
        )))
    }

    fn name(&self) -> &'static str {
        "external"
    }
}
