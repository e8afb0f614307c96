//! Budgeted research sessions: plan, act, observe, and finally report.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    belief_estimate, propose_next_approach, query_private_memory, topic_tags_for, update_belief, AgentState, Belief,
    MemoryEntry, Observation, Persona,
};
use crate::backend::{
    self, embed_local, Backend, BackendFailure, BlindSubmission, Candidate, EmbedRequest, PlanRequest, ReportRequest,
    ReportResponse, RequestKind,
};
use crate::error::{validation, Error, Result};
use crate::landscape::{discount_factor, Approach, Landscape, PerceptionParams};
use crate::network::AttentionGraph;
use crate::seed::SimRng;
use crate::stores::{CitedRef, StoreView};

/// Measurement noise of a single analysis.
pub const SIGMA_MEAS: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: u32 = 40;
/// Archive papers cited by every report.
pub const CITATIONS_PER_OUTPUT: usize = 3;
const QUERY_K: usize = 5;
const MEMORY_K: usize = 3;
const MAX_ARCHIVE_QUERIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolKind {
    QueryArchive,
    QueryRegistry,
    QueryMemory,
    LiteratureSearch,
    EstablishCollaboration,
    Communicate,
    RunAnalysis,
    WriteReport,
}

impl ToolKind {
    pub const ALL: [ToolKind; 8] = [
        ToolKind::QueryArchive,
        ToolKind::QueryRegistry,
        ToolKind::QueryMemory,
        ToolKind::LiteratureSearch,
        ToolKind::EstablishCollaboration,
        ToolKind::Communicate,
        ToolKind::RunAnalysis,
        ToolKind::WriteReport,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool")]
pub enum ToolCall {
    QueryArchive { k: usize },
    QueryRegistry { k: usize },
    QueryMemory { k: usize },
    LiteratureSearch { query: String },
    EstablishCollaboration { collaborator: String },
    Communicate { message: String },
    /// Measure at `approach`, or at the current proposal when absent.
    RunAnalysis { approach: Option<Approach> },
    WriteReport,
}

impl ToolCall {
    pub fn kind(&self) -> ToolKind {
        match self {
            ToolCall::QueryArchive { .. } => ToolKind::QueryArchive,
            ToolCall::QueryRegistry { .. } => ToolKind::QueryRegistry,
            ToolCall::QueryMemory { .. } => ToolKind::QueryMemory,
            ToolCall::LiteratureSearch { .. } => ToolKind::LiteratureSearch,
            ToolCall::EstablishCollaboration { .. } => ToolKind::EstablishCollaboration,
            ToolCall::Communicate { .. } => ToolKind::Communicate,
            ToolCall::RunAnalysis { .. } => ToolKind::RunAnalysis,
            ToolCall::WriteReport => ToolKind::WriteReport,
        }
    }

    /// Result count for query tools.
    pub fn k(&self) -> Option<usize> {
        match self {
            ToolCall::QueryArchive { k } | ToolCall::QueryRegistry { k } | ToolCall::QueryMemory { k } => Some(*k),
            _ => None,
        }
    }

    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("tool calls serialize");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBudget {
    max_steps: u32,
}

impl Default for SessionBudget {
    fn default() -> Self {
        SessionBudget { max_steps: DEFAULT_MAX_STEPS }
    }
}

impl SessionBudget {
    pub fn new(max_steps: u32) -> Result<Self> {
        if max_steps == 0 {
            return Err(validation("session budget must allow at least one step"));
        }
        Ok(SessionBudget { max_steps })
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
    }
}

/// One session's (report, code) pair and the claim behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchOutput {
    pub output_id: String,
    pub round: u32,
    pub primary_agent_id: String,
    pub collab_agent_ids: Vec<String>,
    pub approach: Approach,
    pub claimed_value: f64,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub report_text: String,
    pub code_log: String,
    pub citations: Vec<String>,
    pub tool_trace: Vec<ToolKind>,
}

pub fn output_id(round: u32, agent_id: &str) -> String {
    format!("r{round:03}-{agent_id}")
}

impl ResearchOutput {
    pub fn authors(&self) -> BTreeSet<String> {
        std::iter::once(self.primary_agent_id.clone())
            .chain(self.collab_agent_ids.iter().cloned())
            .collect()
    }

    /// Opaque id that reveals nothing about the authors.
    pub fn submission_id(&self) -> String {
        let digest = Sha256::digest(format!("submission:{}", self.output_id).as_bytes());
        format!("sub-{}", hex::encode(&digest[..6]))
    }

    /// Projection handed to reviewers: no author identities.
    pub fn blind(&self) -> BlindSubmission {
        BlindSubmission {
            submission_id: self.submission_id(),
            title: self.title.clone(),
            abstract_text: self.abstract_text.clone(),
            report_text: self.report_text.clone(),
            code_log: self.code_log.clone(),
            approach: self.approach.clone(),
            claimed_value: self.claimed_value,
            citation_count: self.citations.len(),
            trace_len: self.tool_trace.len(),
        }
    }
}

/// Which shared resources a session may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub archive: bool,
    pub registry: bool,
    pub collaboration: bool,
}

impl Access {
    pub fn networked() -> Self {
        Access { archive: true, registry: true, collaboration: true }
    }

    /// No archive, registry or collaboration.
    pub fn independent() -> Self {
        Access { archive: false, registry: false, collaboration: false }
    }

    pub fn tools(&self) -> Vec<ToolKind> {
        ToolKind::ALL
            .into_iter()
            .filter(|t| match t {
                ToolKind::QueryArchive => self.archive,
                ToolKind::QueryRegistry => self.registry,
                ToolKind::EstablishCollaboration | ToolKind::Communicate => self.collaboration,
                _ => true,
            })
            .collect()
    }
}

/// Advisory message from a collaborator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: String,
    pub seq: u64,
    pub approach: Approach,
    pub estimate: f64,
}

/// Round-start beliefs of every agent. Collaborators answer from these, so
/// their own sessions are never disturbed.
#[derive(Debug, Clone, Default)]
pub struct MessageBus {
    beliefs: BTreeMap<String, Belief>,
}

impl MessageBus {
    pub fn new(agents: &[AgentState]) -> Self {
        MessageBus {
            beliefs: agents.iter().map(|a| (a.agent_id.clone(), a.belief.clone())).collect(),
        }
    }

    pub fn belief(&self, agent_id: &str) -> Option<&Belief> {
        self.beliefs.get(agent_id)
    }
}

/// Ordered principal-collaborator channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    principal: String,
    collaborator: String,
    next_seq: u64,
    inbox: Vec<Message>,
}

pub fn establish_collaboration(
    principal: &str,
    collaborator: &str,
    view: &StoreView,
    bus: &MessageBus,
) -> Result<Channel> {
    if principal == collaborator {
        return Err(validation("an agent cannot collaborate with itself"));
    }
    if view.profile(collaborator).is_none() || bus.belief(collaborator).is_none() {
        return Err(Error::NotFound(format!("agent {collaborator}")));
    }
    Ok(Channel {
        principal: principal.to_string(),
        collaborator: collaborator.to_string(),
        next_seq: 0,
        inbox: Vec::new(),
    })
}

impl Channel {
    pub fn principal(&self) -> &str {
        &self.principal
    }

    pub fn collaborator(&self) -> &str {
        &self.collaborator
    }

    /// Ask the collaborator about `approach`; the answer lands in the inbox.
    pub fn send(&mut self, bus: &MessageBus, approach: &Approach) {
        let belief = bus.belief(&self.collaborator).expect("checked when the channel opened");
        self.inbox.push(Message {
            sender: self.collaborator.clone(),
            seq: self.next_seq,
            approach: approach.clone(),
            estimate: belief_estimate(belief, approach),
        });
        self.next_seq += 1;
    }

    /// Pending messages ordered by (sender, sequence).
    pub fn drain(&mut self) -> Vec<Message> {
        let mut out = std::mem::take(&mut self.inbox);
        out.sort_by(|a, b| a.sender.cmp(&b.sender).then(a.seq.cmp(&b.seq)));
        out
    }
}

/// `f(x) + N(0, sigma^2)`.
pub fn run_analysis(approach: &Approach, landscape: &Landscape, sigma: f64, rng: &mut SimRng) -> Result<f64> {
    let f = landscape.true_significance(approach)?;
    if sigma == 0.0 {
        return Ok(f);
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| validation(e.to_string()))?;
    Ok(f + noise.sample(rng))
}

fn fmt_coords(a: &Approach) -> String {
    let parts: Vec<String> = a.coords().iter().map(|c| format!("{c:.4}")).collect();
    format!("({})", parts.join(", "))
}

/// Report text from the built-in templates.
pub fn simulate_report(req: &ReportRequest) -> ReportResponse {
    let region = topic_tags_for(&req.approach).join(" ");
    let title = format!("Significance {:.3} in region {region}", req.claimed_value);
    let abstract_text = format!(
        "We studied the approach at {} and measured a significance of {:.4} after {} analyses.",
        fmt_coords(&req.approach),
        req.claimed_value,
        req.measurements
    );
    let literature = if req.citations.is_empty() {
        "No archived work was retrieved.".to_string()
    } else {
        req.citations
            .iter()
            .map(|c| format!("- {} ({})", c.title, c.paper_id))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let references = req
        .citations
        .iter()
        .map(|c| {
            format!(
                "[Internal Archive] {{'paper_id': '{}', 'agent_id': '{}', 'title': '{}'}}",
                c.paper_id, c.agent_id, c.title
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let report_text = format!(
        "# Title\n{title}\n\n\
         # Research Question\nHow significant is the approach at {coords}?\n\n\
         # Hypothesis and Key Findings\nThe approach reaches a measured significance of {value:.4}.\n\n\
         # Rationale/Mechanism\nThe region {region} scored highest among the approaches tried in this session.\n\n\
         # Empirical Evidence\n{n} analyses; see the code log.\n\n\
         # Literature Evidence\n{literature}\n\n\
         # Assumptions\nMeasurements carry independent Gaussian noise.\n\n\
         # Limitations\nThe claim rests on the single best noisy measurement.\n\n\
         # References\n{references}\n",
        coords = fmt_coords(&req.approach),
        value = req.claimed_value,
        n = req.measurements,
    );
    ReportResponse { title, abstract_text, report_text }
}

/// Number of steps a persona aims to use; lean personas stop early.
pub fn target_steps(persona: &Persona, max_steps: u32) -> u32 {
    let frac = 0.3 + 0.7 * (1.0 - persona.stance_resources) / 2.0;
    ((frac * max_steps as f64).round() as u32).clamp(1, max_steps)
}

fn unit(draw: u64) -> f64 {
    SimRng::seed_from_u64(draw).random::<f64>()
}

/// Simulation planner.
pub fn simulate_plan(req: &PlanRequest) -> ToolCall {
    let p = &req.persona;
    let remaining = req.max_steps.saturating_sub(req.step);
    if remaining <= 1 || req.step + 1 >= target_steps(p, req.max_steps) {
        return ToolCall::WriteReport;
    }
    if req.measurements == 0 {
        return ToolCall::RunAnalysis { approach: None };
    }
    let available = |t: ToolKind| req.tools_available.contains(&t);
    let mut rng = SimRng::seed_from_u64(req.draw);

    let wants_collab = available(ToolKind::EstablishCollaboration)
        && available(ToolKind::QueryRegistry)
        && unit(req.session_draw) < p.collaboration_probability();
    if wants_collab && req.collaborator.is_none() && !req.collaboration_attempted {
        if !req.registry_queried {
            return ToolCall::QueryRegistry { k: QUERY_K };
        }
        if !req.registry_candidates.is_empty() {
            let weights: Vec<f64> = req.registry_candidates.iter().map(|c| c.attention).collect();
            let pick = WeightedIndex::new(&weights).map(|w| w.sample(&mut rng)).unwrap_or(0);
            return ToolCall::EstablishCollaboration { collaborator: req.registry_candidates[pick].agent_id.clone() };
        }
    }
    if req.collaborator.is_some() && req.communications == 0 {
        return ToolCall::Communicate { message: "advice".into() };
    }

    let lit = (1.0 + p.stance_literature) / 2.0;
    let mut options: Vec<(ToolCall, f64)> = Vec::new();
    if available(ToolKind::QueryArchive) && req.archive_queries < MAX_ARCHIVE_QUERIES {
        options.push((ToolCall::QueryArchive { k: QUERY_K }, 0.05 + 0.35 * lit));
    }
    if req.memory_entries > 0 && req.memory_queries == 0 {
        options.push((ToolCall::QueryMemory { k: MEMORY_K }, 0.05));
    }
    if available(ToolKind::LiteratureSearch) {
        options.push((ToolCall::LiteratureSearch { query: "related work".into() }, 0.03 * lit));
    }
    if req.collaborator.is_some() {
        options.push((ToolCall::Communicate { message: "advice".into() }, 0.05));
    }
    options.push((ToolCall::RunAnalysis { approach: None }, 1.0));
    let weights: Vec<f64> = options.iter().map(|o| o.1).collect();
    let idx = WeightedIndex::new(&weights).expect("positive weights").sample(&mut rng);
    options.swap_remove(idx).0
}

/// Everything a session reads besides its own agent.
pub struct SessionContext<'a> {
    pub round: u32,
    pub view: &'a StoreView,
    pub landscape: &'a Landscape,
    pub perception: &'a PerceptionParams,
    pub budget: SessionBudget,
    pub sigma_meas: f64,
    pub access: Access,
    pub bus: &'a MessageBus,
    pub attention: &'a AttentionGraph,
    pub backend: &'a dyn Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: u32,
    pub agent_id: String,
    pub step: u32,
    pub tool: ToolKind,
    pub payload_digest: String,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub agent: AgentState,
    pub output: ResearchOutput,
    pub trace: Vec<TraceEntry>,
    pub failures: Vec<BackendFailure>,
}

struct Session<'a, 'c> {
    ctx: &'c SessionContext<'a>,
    agent: AgentState,
    history: Vec<Approach>,
    proposal: Approach,
    best: Option<(Approach, f64)>,
    best_score: Option<f64>,
    measurements: u32,
    archive_queries: u32,
    memory_queries: u32,
    registry_queried: bool,
    candidates: Vec<Candidate>,
    collaboration_attempted: bool,
    channel: Option<Channel>,
    communications: u32,
    code_log: Vec<String>,
    tool_trace: Vec<ToolKind>,
    trace: Vec<TraceEntry>,
    failures: Vec<BackendFailure>,
}

impl<'a, 'c> Session<'a, 'c> {
    fn request_id(&self, step: u32, what: &str) -> String {
        format!("r{:03}/{}/s{:02}/{what}", self.ctx.round, self.agent.agent_id, step)
    }

    fn perceived(&self) -> impl Fn(&Approach) -> f64 + '_ {
        move |x: &Approach| discount_factor(x, &self.history, self.ctx.perception).unwrap_or(1.0)
    }

    fn repropose(&mut self, rng: &mut SimRng) {
        let next = {
            let perceived = self.perceived();
            propose_next_approach(&self.agent, &perceived, rng)
        };
        self.proposal = next;
    }

    fn embed(&mut self, step: u32, approach: &Approach) -> Vec<f64> {
        let req = EmbedRequest { text: fmt_coords(approach), approach: Some(approach.clone()) };
        let id = self.request_id(step, "embed");
        match backend::embed(self.ctx.backend, &id, req.clone()) {
            Ok(e) => e.vector,
            Err(e) => {
                self.failures.push(BackendFailure::new(&id, RequestKind::Embed, &e));
                embed_local(&req).vector
            }
        }
    }

    fn measure(&mut self, approach: Approach, rng: &mut SimRng, label: &str) -> Result<f64> {
        let y = run_analysis(&approach, self.ctx.landscape, self.ctx.sigma_meas, rng)?;
        self.measurements += 1;
        self.code_log.push(format!("{label}{} -> {y:.6}", fmt_coords(&approach)));
        update_belief(&mut self.agent, Observation { approach: approach.clone(), value: y, round: self.ctx.round });
        // Candidates are ranked as the agent perceives them: discounted by prior work.
        let score = y * discount_factor(&approach, &self.history, self.ctx.perception)?;
        if self.best_score.is_none_or(|b| score > b) {
            self.best_score = Some(score);
            self.best = Some((approach, y));
        }
        Ok(y)
    }

    fn plan_request(&self, step: u32, session_draw: u64, draw: u64) -> PlanRequest {
        PlanRequest {
            round: self.ctx.round,
            step,
            max_steps: self.ctx.budget.max_steps(),
            persona: self.agent.persona,
            tools_available: self.ctx.access.tools(),
            current_proposal: self.proposal.clone(),
            best_value: self.best.as_ref().map(|b| b.1),
            measurements: self.measurements,
            archive_queries: self.archive_queries,
            memory_entries: self.agent.private_memory.len(),
            memory_queries: self.memory_queries,
            registry_queried: self.registry_queried,
            registry_candidates: self.candidates.clone(),
            collaboration_attempted: self.collaboration_attempted,
            collaborator: self.channel.as_ref().map(|c| c.collaborator().to_string()),
            communications: self.communications,
            session_draw,
            draw,
        }
    }

    /// Execute one non-terminal tool.
    fn act(&mut self, step: u32, call: &ToolCall, rng: &mut SimRng) -> Result<()> {
        let ctx = self.ctx;
        match call {
            ToolCall::RunAnalysis { approach } => {
                let x = match approach {
                    Some(a) if a.dim() == self.agent.dim() => a.clone(),
                    Some(_) => {
                        self.code_log.push("run_analysis rejected: wrong dimension".into());
                        return Ok(());
                    }
                    None => self.proposal.clone(),
                };
                self.measure(x, rng, "run_analysis")?;
                self.repropose(rng);
            }
            ToolCall::QueryArchive { k } => {
                self.archive_queries += 1;
                if !ctx.access.archive {
                    return Ok(());
                }
                let q = self.embed(step, &self.proposal.clone());
                let found: Vec<(Approach, f64)> = ctx
                    .view
                    .query_archive(&q, (*k).max(1))?
                    .into_iter()
                    .map(|e| (e.approach.clone(), e.claimed_value))
                    .collect();
                for (approach, value) in found {
                    if !self.agent.belief.contains(&approach, value) {
                        update_belief(&mut self.agent, Observation { approach, value, round: ctx.round });
                    }
                }
                self.repropose(rng);
            }
            ToolCall::QueryRegistry { k } => {
                self.registry_queried = true;
                if !ctx.access.registry {
                    return Ok(());
                }
                let q = self.embed(step, &self.proposal.clone());
                let exclude: BTreeSet<String> = [self.agent.agent_id.clone()].into();
                let ids: Vec<String> = ctx
                    .view
                    .query_registry(&q, (*k).max(1), &exclude)?
                    .into_iter()
                    .map(|p| p.agent_id.clone())
                    .collect();
                let weights = ctx.attention.partner_weights(&self.agent.agent_id, &ids);
                self.candidates = ids
                    .into_iter()
                    .zip(weights)
                    .map(|(agent_id, attention)| Candidate { agent_id, attention })
                    .collect();
            }
            ToolCall::QueryMemory { k } => {
                self.memory_queries += 1;
                let hits = query_private_memory(&self.agent, &self.proposal, (*k).max(1));
                self.code_log.push(format!("query_memory -> {} entries", hits.len()));
            }
            ToolCall::LiteratureSearch { .. } => {}
            ToolCall::EstablishCollaboration { collaborator } => {
                if !ctx.access.collaboration || self.collaboration_attempted {
                    return Ok(());
                }
                self.collaboration_attempted = true;
                match establish_collaboration(&self.agent.agent_id, collaborator, ctx.view, ctx.bus) {
                    Ok(ch) => self.channel = Some(ch),
                    Err(e) => log::debug!("{}: collaboration refused: {e}", self.agent.agent_id),
                }
            }
            ToolCall::Communicate { .. } => {
                let Some(ch) = self.channel.as_mut() else {
                    return Ok(());
                };
                self.communications += 1;
                ch.send(ctx.bus, &self.proposal);
                let advice = ch.drain();
                let own = belief_estimate(&self.agent.belief, &self.proposal);
                if advice.iter().any(|m| m.estimate < own) {
                    self.repropose(rng);
                }
            }
            ToolCall::WriteReport => unreachable!("handled by the session loop"),
        }
        Ok(())
    }

    fn write_report(&mut self, step: u32, rng: &mut SimRng) -> Result<ResearchOutput> {
        let ctx = self.ctx;
        // With nothing measured yet (a one-step budget) the report bundles a single forced measurement.
        let (chosen, claimed) = match self.best.clone() {
            Some(best) => best,
            None => {
                let x = self.proposal.clone();
                let y = self.measure(x.clone(), rng, "run_analysis")?;
                (x, y)
            }
        };
        let citations: Vec<CitedRef> = if ctx.access.archive {
            let q = self.embed(step, &chosen);
            ctx.view
                .query_archive(&q, CITATIONS_PER_OUTPUT)?
                .into_iter()
                .map(|e| CitedRef {
                    paper_id: e.record.paper_id.clone(),
                    agent_id: e.record.primary_agent_id.clone(),
                    title: e.record.title.clone(),
                })
                .collect()
        } else {
            Vec::new()
        };
        let req = ReportRequest {
            round: ctx.round,
            approach: chosen.clone(),
            claimed_value: claimed,
            measurements: self.measurements,
            citations: citations.clone(),
            code_log: self.code_log.join("\n"),
        };
        let id = self.request_id(step, "report");
        let report = match backend::write_report(ctx.backend, &id, req.clone()) {
            Ok(r) => r,
            Err(e) => {
                self.failures.push(BackendFailure::new(&id, RequestKind::WriteReport, &e));
                simulate_report(&req)
            }
        };
        let collabs: Vec<String> = self.channel.iter().map(|c| c.collaborator().to_string()).collect();
        let output = assemble_output(
            &self.agent.agent_id,
            ctx.round,
            (chosen.clone(), claimed),
            &citations,
            collabs,
            std::mem::take(&mut self.tool_trace),
            self.code_log.join("\n"),
            report,
        );
        self.agent.private_memory.push(MemoryEntry {
            round: ctx.round,
            approach: chosen.clone(),
            measured_value: claimed,
            accepted: false,
            output_id: Some(output.output_id.clone()),
        });
        self.agent.current_approach = chosen;
        Ok(output)
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_output(
    agent_id: &str,
    round: u32,
    best: (Approach, f64),
    citations: &[CitedRef],
    collab_agent_ids: Vec<String>,
    tool_trace: Vec<ToolKind>,
    code_log: String,
    report: ReportResponse,
) -> ResearchOutput {
    ResearchOutput {
        output_id: output_id(round, agent_id),
        round,
        primary_agent_id: agent_id.to_string(),
        collab_agent_ids: collab_agent_ids.into_iter().filter(|c| c != agent_id).collect(),
        approach: best.0,
        claimed_value: best.1,
        title: report.title,
        abstract_text: report.abstract_text,
        report_text: report.report_text,
        code_log,
        citations: citations.iter().map(|c| c.paper_id.clone()).collect(),
        tool_trace,
    }
}

/// Templated output for a finished session.
pub fn compose_output(
    agent: &AgentState,
    round: u32,
    best: (Approach, f64),
    citations: &[CitedRef],
    collab_agent_ids: Vec<String>,
    tool_trace: Vec<ToolKind>,
    code_log: String,
) -> ResearchOutput {
    let measurements = code_log.lines().count() as u32;
    let report = simulate_report(&ReportRequest {
        round,
        approach: best.0.clone(),
        claimed_value: best.1,
        measurements,
        citations: citations.to_vec(),
        code_log: code_log.clone(),
    });
    assemble_output(&agent.agent_id, round, best, citations, collab_agent_ids, tool_trace, code_log, report)
}

/// Run one agent's session against the round snapshot.
///
/// Every tool call consumes one step. A failed planning call skips its step.
/// The last step is always `WriteReport`, so a session always yields an
/// output; with a one-step budget the measurement is folded into the report.
pub fn run_session(agent: AgentState, ctx: &SessionContext<'_>, rng: &mut SimRng) -> Result<SessionOutcome> {
    let history = if ctx.access.archive {
        ctx.view.history().to_vec()
    } else {
        agent.private_memory.iter().filter(|m| m.accepted).map(|m| m.approach.clone()).collect()
    };
    let mut s = Session {
        ctx,
        proposal: agent.current_approach.clone(),
        agent,
        history,
        best: None,
        best_score: None,
        measurements: 0,
        archive_queries: 0,
        memory_queries: 0,
        registry_queried: false,
        candidates: Vec::new(),
        collaboration_attempted: false,
        channel: None,
        communications: 0,
        code_log: Vec::new(),
        tool_trace: Vec::new(),
        trace: Vec::new(),
        failures: Vec::new(),
    };
    s.repropose(rng);
    let session_draw: u64 = rng.random();
    let max = ctx.budget.max_steps();
    let mut step = 0;
    loop {
        let remaining = max - step;
        let call = if remaining == 1 {
            ToolCall::WriteReport
        } else {
            let draw: u64 = rng.random();
            let req = s.plan_request(step, session_draw, draw);
            let id = s.request_id(step, "plan");
            match backend::plan_step(ctx.backend, &id, req) {
                Ok(call) => call,
                Err(e) => {
                    s.failures.push(BackendFailure::new(&id, RequestKind::PlanStep, &e));
                    step += 1;
                    continue;
                }
            }
        };
        s.tool_trace.push(call.kind());
        s.trace.push(TraceEntry {
            round: ctx.round,
            agent_id: s.agent.agent_id.clone(),
            step,
            tool: call.kind(),
            payload_digest: call.digest(),
        });
        if call == ToolCall::WriteReport {
            let output = s.write_report(step, rng)?;
            return Ok(SessionOutcome { agent: s.agent, output, trace: s.trace, failures: s.failures });
        }
        s.act(step, &call, rng)?;
        step += 1;
    }
}
