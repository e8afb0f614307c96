use super::{
    Backend, BackendRequest, BackendResponse, EmbedRequest, Embedding, PersonaRequest, PersonaResponse,
};
use crate::agents::sample_profile;
use crate::error::Result;
use crate::review::{simulate_meta_review, simulate_review};
use crate::session::{simulate_plan, simulate_report};
use crate::stores::EMBEDDING_DIM;

/// Deterministic backend answering from the built-in rules. Stateless, so
/// any number of sessions may call it at once.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationBackend;

impl SimulationBackend {
    pub fn new() -> Self {
        SimulationBackend
    }
}

fn persona(req: &PersonaRequest) -> PersonaResponse {
    let (persona, center) = sample_profile(req.dim, req.seed);
    let behavior = persona.describe();
    PersonaResponse { persona, expertise_center: center, behavior }
}

/// Simulation embedding: approach coordinates zero-padded to the index width.
/// Text-only requests embed to the zero vector.
pub(crate) fn embed_local(req: &EmbedRequest) -> Embedding {
    let vector = match &req.approach {
        Some(a) => a.embedding(EMBEDDING_DIM),
        None => vec![0.0; EMBEDDING_DIM],
    };
    Embedding { vector }
}

impl Backend for SimulationBackend {
    fn handle(&self, _request_id: &str, request: &BackendRequest) -> Result<BackendResponse> {
        Ok(match request {
            BackendRequest::GeneratePersona(r) => BackendResponse::GeneratePersona(persona(r)),
            BackendRequest::PlanStep(r) => BackendResponse::PlanStep(simulate_plan(r)),
            BackendRequest::WriteReport(r) => BackendResponse::WriteReport(simulate_report(r)),
            BackendRequest::Review(r) => BackendResponse::Review(simulate_review(r)),
            BackendRequest::MetaReview(r) => BackendResponse::MetaReview(simulate_meta_review(r)),
            BackendRequest::Embed(r) => BackendResponse::Embed(embed_local(r)),
        })
    }

    fn name(&self) -> &'static str {
        "simulation"
    }
}
