//! Pluggable agent cognition.
//!
//! Every decision an agent makes goes through a [`Backend`]: persona
//! generation, the next tool in a research session, report writing, panel
//! reviews, meta-review tournaments and embeddings. [`SimulationBackend`]
//! answers from the deterministic rules in this crate. [`ExternalBackend`]
//! speaks a JSON request/response protocol to a text-generation service.

mod external;
mod prompts;
mod sim;

use serde::{Deserialize, Serialize};

pub use external::{
    ExternalBackend, FnTransport, HttpTransport, Recording, ReplayTransport, Transport, TransportError, WireRequest,
    WireResponse, MAX_RETRIES,
};
pub use prompts::PromptTemplates;
pub use sim::SimulationBackend;
pub(crate) use sim::embed_local;

use crate::agents::Persona;
use crate::error::{Error, Result};
use crate::landscape::Approach;
use crate::session::{ToolCall, ToolKind};
use crate::stores::{CitedRef, EMBEDDING_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestKind {
    GeneratePersona,
    PlanStep,
    WriteReport,
    Review,
    MetaReview,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaRequest {
    pub agent_id: String,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaResponse {
    pub persona: Persona,
    pub expertise_center: Approach,
    pub behavior: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub agent_id: String,
    pub attention: f64,
}

/// Everything the planner may look at before choosing the next tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub round: u32,
    pub step: u32,
    pub max_steps: u32,
    pub persona: Persona,
    pub tools_available: Vec<ToolKind>,
    pub current_proposal: Approach,
    pub best_value: Option<f64>,
    pub measurements: u32,
    pub archive_queries: u32,
    pub memory_entries: usize,
    pub memory_queries: u32,
    pub registry_queried: bool,
    pub registry_candidates: Vec<Candidate>,
    pub collaboration_attempted: bool,
    pub collaborator: Option<String>,
    pub communications: u32,
    /// Fixed for the whole session.
    pub session_draw: u64,
    /// Fresh for every step.
    pub draw: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub round: u32,
    pub approach: Approach,
    pub claimed_value: f64,
    pub measurements: u32,
    pub citations: Vec<CitedRef>,
    pub code_log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub report_text: String,
}

/// Author-free projection of a research output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindSubmission {
    pub submission_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub report_text: String,
    pub code_log: String,
    pub approach: Approach,
    pub claimed_value: f64,
    pub citation_count: usize,
    pub trace_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerView {
    pub persona: Persona,
    pub belief_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewContext {
    pub perceived_significance: f64,
    pub novelty: f64,
    pub related_titles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub submission: BlindSubmission,
    pub reviewer: ReviewerView,
    pub context: ReviewContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewScores {
    pub support: u8,
    pub soundness: u8,
    pub significance: u8,
    pub originality: u8,
    pub overall: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaMember {
    pub submission_id: String,
    /// Position in ascending output-id order; used as the tie-break.
    pub position: usize,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub review_overalls: Vec<u8>,
    pub review_texts: Vec<String>,
    pub perceived_significance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePaper {
    pub paper_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaReviewRequest {
    pub tournament_id: String,
    pub members: Vec<MetaMember>,
    pub references: Vec<ReferencePaper>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEntry {
    pub submission_id: String,
    pub score: f64,
    pub rank: u32,
    pub justification: String,
    pub meta_review_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaReviewResponse {
    pub entries: Vec<MetaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub text: String,
    pub approach: Option<Approach>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum BackendRequest {
    GeneratePersona(PersonaRequest),
    PlanStep(PlanRequest),
    WriteReport(ReportRequest),
    Review(ReviewRequest),
    MetaReview(MetaReviewRequest),
    Embed(EmbedRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum BackendResponse {
    GeneratePersona(PersonaResponse),
    PlanStep(ToolCall),
    WriteReport(ReportResponse),
    Review(ReviewScores),
    MetaReview(MetaReviewResponse),
    Embed(Embedding),
}

impl BackendRequest {
    pub fn kind(&self) -> RequestKind {
        match self {
            BackendRequest::GeneratePersona(_) => RequestKind::GeneratePersona,
            BackendRequest::PlanStep(_) => RequestKind::PlanStep,
            BackendRequest::WriteReport(_) => RequestKind::WriteReport,
            BackendRequest::Review(_) => RequestKind::Review,
            BackendRequest::MetaReview(_) => RequestKind::MetaReview,
            BackendRequest::Embed(_) => RequestKind::Embed,
        }
    }

    pub fn payload_json(&self) -> serde_json::Value {
        match self {
            BackendRequest::GeneratePersona(p) => serde_json::to_value(p),
            BackendRequest::PlanStep(p) => serde_json::to_value(p),
            BackendRequest::WriteReport(p) => serde_json::to_value(p),
            BackendRequest::Review(p) => serde_json::to_value(p),
            BackendRequest::MetaReview(p) => serde_json::to_value(p),
            BackendRequest::Embed(p) => serde_json::to_value(p),
        }
        .expect("request payloads serialize")
    }

    pub fn from_wire(kind: RequestKind, payload: serde_json::Value) -> Result<Self> {
        Ok(match kind {
            RequestKind::GeneratePersona => BackendRequest::GeneratePersona(serde_json::from_value(payload)?),
            RequestKind::PlanStep => BackendRequest::PlanStep(serde_json::from_value(payload)?),
            RequestKind::WriteReport => BackendRequest::WriteReport(serde_json::from_value(payload)?),
            RequestKind::Review => BackendRequest::Review(serde_json::from_value(payload)?),
            RequestKind::MetaReview => BackendRequest::MetaReview(serde_json::from_value(payload)?),
            RequestKind::Embed => BackendRequest::Embed(serde_json::from_value(payload)?),
        })
    }
}

impl BackendResponse {
    pub fn kind(&self) -> RequestKind {
        match self {
            BackendResponse::GeneratePersona(_) => RequestKind::GeneratePersona,
            BackendResponse::PlanStep(_) => RequestKind::PlanStep,
            BackendResponse::WriteReport(_) => RequestKind::WriteReport,
            BackendResponse::Review(_) => RequestKind::Review,
            BackendResponse::MetaReview(_) => RequestKind::MetaReview,
            BackendResponse::Embed(_) => RequestKind::Embed,
        }
    }

    pub fn payload_json(&self) -> serde_json::Value {
        match self {
            BackendResponse::GeneratePersona(p) => serde_json::to_value(p),
            BackendResponse::PlanStep(p) => serde_json::to_value(p),
            BackendResponse::WriteReport(p) => serde_json::to_value(p),
            BackendResponse::Review(p) => serde_json::to_value(p),
            BackendResponse::MetaReview(p) => serde_json::to_value(p),
            BackendResponse::Embed(p) => serde_json::to_value(p),
        }
        .expect("response payloads serialize")
    }

    /// Parse a response payload using the schema of `kind`.
    pub fn from_wire(kind: RequestKind, payload: serde_json::Value) -> Result<Self> {
        let schema = |e: serde_json::Error| Error::Backend(format!("{kind:?} response violates schema: {e}"));
        Ok(match kind {
            RequestKind::GeneratePersona => BackendResponse::GeneratePersona(serde_json::from_value(payload).map_err(schema)?),
            RequestKind::PlanStep => BackendResponse::PlanStep(serde_json::from_value(payload).map_err(schema)?),
            RequestKind::WriteReport => BackendResponse::WriteReport(serde_json::from_value(payload).map_err(schema)?),
            RequestKind::Review => BackendResponse::Review(serde_json::from_value(payload).map_err(schema)?),
            RequestKind::MetaReview => BackendResponse::MetaReview(serde_json::from_value(payload).map_err(schema)?),
            RequestKind::Embed => BackendResponse::Embed(serde_json::from_value(payload).map_err(schema)?),
        })
    }

    /// Check the response against the ranges implied by `request`.
    pub fn validate(&self, request: &BackendRequest) -> Result<()> {
        let bad = |msg: String| Err(Error::Backend(msg));
        if self.kind() != request.kind() {
            return bad(format!("expected {:?} response, got {:?}", request.kind(), self.kind()));
        }
        match (self, request) {
            (BackendResponse::GeneratePersona(r), BackendRequest::GeneratePersona(q)) => {
                if r.persona.validate().is_err() {
                    return bad("persona stances outside [-1, 1]".into());
                }
                if r.expertise_center.dim() != q.dim {
                    return bad("expertise center has wrong dimension".into());
                }
            }
            (BackendResponse::PlanStep(call), BackendRequest::PlanStep(q)) => {
                if let Some(k) = call.k() {
                    if !(1..=50).contains(&k) {
                        return bad(format!("tool k={k} outside [1, 50]"));
                    }
                }
                if let ToolCall::RunAnalysis { approach: Some(a) } = call {
                    if a.dim() != q.current_proposal.dim() {
                        return bad("analysis approach has wrong dimension".into());
                    }
                }
            }
            (BackendResponse::WriteReport(r), _) => {
                if r.title.trim().is_empty() {
                    return bad("report title is empty".into());
                }
            }
            (BackendResponse::Review(r), _) => {
                for (name, v) in [
                    ("support", r.support),
                    ("soundness", r.soundness),
                    ("significance", r.significance),
                    ("originality", r.originality),
                ] {
                    if !(1..=4).contains(&v) {
                        return bad(format!("{name}={v} outside 1-4"));
                    }
                }
                if !(1..=5).contains(&r.overall) {
                    return bad(format!("overall={} outside 1-5", r.overall));
                }
            }
            (BackendResponse::MetaReview(r), BackendRequest::MetaReview(q)) => {
                let n = q.members.len();
                if r.entries.len() != n {
                    return bad(format!("meta-review covers {} of {n} submissions", r.entries.len()));
                }
                let mut ids: Vec<&str> = r.entries.iter().map(|e| e.submission_id.as_str()).collect();
                let mut want: Vec<&str> = q.members.iter().map(|m| m.submission_id.as_str()).collect();
                ids.sort_unstable();
                want.sort_unstable();
                if ids != want {
                    return bad("meta-review submission ids do not match the tournament".into());
                }
                let mut ranks: Vec<u32> = r.entries.iter().map(|e| e.rank).collect();
                ranks.sort_unstable();
                if ranks != (1..=n as u32).collect::<Vec<_>>() {
                    return bad("meta-review ranks are not a permutation".into());
                }
                if let Some(e) = r.entries.iter().find(|e| !(0.0..=1.0).contains(&e.score)) {
                    return bad(format!("meta score {} outside [0, 1]", e.score));
                }
            }
            (BackendResponse::Embed(e), _) => {
                if e.vector.len() != EMBEDDING_DIM || e.vector.iter().any(|x| !x.is_finite()) {
                    return bad(format!("embedding must be {EMBEDDING_DIM} finite values"));
                }
            }
            _ => unreachable!("kinds checked above"),
        }
        Ok(())
    }
}

/// Agent cognition. Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn handle(&self, request_id: &str, request: &BackendRequest) -> Result<BackendResponse>;

    /// Short label for logs.
    fn name(&self) -> &'static str;
}

macro_rules! typed_call {
    ($fn_name:ident, $variant:ident, $req:ty, $resp:ty) => {
        pub fn $fn_name(backend: &dyn Backend, request_id: &str, req: $req) -> Result<$resp> {
            let request = BackendRequest::$variant(req);
            let resp = backend.handle(request_id, &request)?;
            resp.validate(&request)?;
            match resp {
                BackendResponse::$variant(r) => Ok(r),
                other => Err(Error::Backend(format!(
                    "expected {} response, got {:?}",
                    stringify!($variant),
                    other.kind()
                ))),
            }
        }
    };
}

typed_call!(generate_persona, GeneratePersona, PersonaRequest, PersonaResponse);
typed_call!(plan_step, PlanStep, PlanRequest, ToolCall);
typed_call!(write_report, WriteReport, ReportRequest, ReportResponse);
typed_call!(review, Review, ReviewRequest, ReviewScores);
typed_call!(meta_review, MetaReview, MetaReviewRequest, MetaReviewResponse);
typed_call!(embed, Embed, EmbedRequest, Embedding);

/// A backend call that failed and was replaced by a local fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendFailure {
    pub request_id: String,
    pub kind: RequestKind,
    pub message: String,
}

impl BackendFailure {
    pub fn new(request_id: &str, kind: RequestKind, err: &Error) -> Self {
        BackendFailure { request_id: request_id.to_string(), kind, message: err.to_string() }
    }
}
