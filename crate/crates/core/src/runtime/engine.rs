use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use super::config::{BackendConfig, ExperimentConfig, Mode};
use super::log::{Phase, Record, RunLog};
use crate::agents::{
    agent_id, persona_seed, sample_profile, update_expertise, AgentState, Reputation, EXPERTISE_WINDOW,
};
use crate::backend::{
    self, embed_local, Backend, BackendFailure, EmbedRequest, ExternalBackend, PersonaRequest, PromptTemplates,
    RequestKind, SimulationBackend,
};
use crate::error::{Error, Result};
use crate::landscape::{generate_landscape, Approach, Landscape};
use crate::network::{graph_metrics, update_attention, AttentionGraph, RoundEvents};
use crate::par::{self, Scheduling};
use crate::review::{
    accept_round, apply_consequences, cluster_submissions, meta_request, meta_reviews_from, review_request,
    select_reviewers, simulate_meta_review, simulate_review, Accepted, EvaluationResult, Review,
};
use crate::seed::rng_for;
use crate::session::{run_session, Access, MessageBus, ResearchOutput, SessionBudget, SessionContext, SessionOutcome};
use crate::stores::{AgentProfile, MetaReview, Stores};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub stores: Stores,
    pub agents: Vec<AgentState>,
    pub graph: AttentionGraph,
    /// Store digest after each barrier; index 0 is the initial registry.
    pub barrier_digests: Vec<String>,
}

/// Backend described by the configuration.
pub fn build_backend(config: &ExperimentConfig) -> Result<Box<dyn Backend>> {
    Ok(match &config.backend {
        BackendConfig::Simulation => Box::new(SimulationBackend),
        BackendConfig::External { endpoint, timeout_ms, templates } => {
            let b = ExternalBackend::http(endpoint, Duration::from_millis(*timeout_ms));
            let t = match templates {
                Some(dir) => PromptTemplates::from_dir(dir)?,
                None => PromptTemplates::default(),
            };
            Box::new(b.with_templates(t))
        }
    })
}

/// Run the configured experiment with the configured backend.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunLog> {
    let backend = build_backend(config)?;
    Ok(run_with(config, backend.as_ref(), Scheduling::Parallel)?.log)
}

/// The same loop with archive, registry and collaboration switched off.
pub fn run_ablation_independent(config: &ExperimentConfig) -> Result<RunLog> {
    let config = ExperimentConfig { mode: Mode::Independent, ..config.clone() };
    run_experiment(&config)
}

fn access_for(mode: Mode) -> Access {
    match mode {
        Mode::Networked => Access::networked(),
        Mode::Independent => Access::independent(),
    }
}

fn embed_or_local(backend: &dyn Backend, id: String, text: String, approach: &Approach) -> (Vec<f64>, Option<BackendFailure>) {
    let req = EmbedRequest { text, approach: Some(approach.clone()) };
    match backend::embed(backend, &id, req.clone()) {
        Ok(e) => (e.vector, None),
        Err(e) => (embed_local(&req).vector, Some(BackendFailure::new(&id, RequestKind::Embed, &e))),
    }
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    backend: &'a dyn Backend,
    sched: Scheduling,
    landscape: Landscape,
    stores: Stores,
    agents: Vec<AgentState>,
    graph: AttentionGraph,
    log: RunLog,
    barrier_digests: Vec<String>,
}

impl Runner<'_> {
    fn fail(&mut self, failure: BackendFailure) {
        log::warn!("backend failure on {}: {}", failure.request_id, failure.message);
        self.log.push(Record::BackendError(failure));
    }

    fn profile_embedding(&mut self, barrier: u32, agent: &AgentState) -> Vec<f64> {
        let id = format!("b{barrier:03}/{}/profile-embed", agent.agent_id);
        let (v, failure) = embed_or_local(self.backend, id, agent.expertise.describe(), &agent.expertise.center);
        if let Some(f) = failure {
            self.fail(f);
        }
        v
    }

    fn log_profile(&mut self, barrier: u32, agent_id: &str) {
        let view = self.stores.view();
        let profile = view.profile(agent_id).expect("registered").clone();
        let embedding = view.registry_embedding(agent_id).expect("registered").to_vec();
        self.log.push(Record::Profile { barrier, profile, embedding });
    }

    fn close_barrier(&mut self, barrier: u32, accepted: Vec<String>) {
        let store_digest = self.stores.view().digest();
        self.barrier_digests.push(store_digest.clone());
        self.log.push(Record::Barrier { barrier, store_digest, accepted });
    }

    fn init(&mut self) -> Result<()> {
        let dim = self.config.landscape.dim;
        for i in 0..self.config.n_agents {
            let id = agent_id(i);
            let seed = persona_seed(self.config.seed, &id);
            let rid = format!("init/{id}/persona");
            let req = PersonaRequest { agent_id: id.clone(), dim, seed };
            let (persona, center, behavior) = match backend::generate_persona(self.backend, &rid, req) {
                Ok(r) => (r.persona, r.expertise_center, r.behavior),
                Err(e) => {
                    self.fail(BackendFailure::new(&rid, RequestKind::GeneratePersona, &e));
                    let (p, c) = sample_profile(dim, seed);
                    let behavior = p.describe();
                    (p, c, behavior)
                }
            };
            let agent = AgentState::new(id.clone(), persona, center);
            let profile = AgentProfile {
                agent_id: id.clone(),
                behavior,
                expertise: agent.expertise.describe(),
                expertise_topics: agent.expertise.topic_tags.clone(),
                citation_count: 0,
                num_accepted_papers: 0,
            };
            let embedding = self.profile_embedding(0, &agent);
            self.stores.register_agent(profile, embedding)?;
            self.log.push(Record::Agent { phase: Phase::Initial, agent: agent.clone() });
            self.log_profile(0, &id);
            self.agents.push(agent);
        }
        self.close_barrier(0, Vec::new());
        Ok(())
    }

    fn sessions(&mut self, round: u32) -> Result<Vec<SessionOutcome>> {
        let view = self.stores.snapshot(round);
        let bus = MessageBus::new(&self.agents);
        let ctx = SessionContext {
            round,
            view: &view,
            landscape: &self.landscape,
            perception: &self.config.perception,
            budget: SessionBudget::new(self.config.max_steps)?,
            sigma_meas: self.config.sigma_meas,
            access: access_for(self.config.mode),
            bus: &bus,
            attention: &self.graph,
            backend: self.backend,
        };
        let seed = self.config.seed;
        let round_label = round.to_string();
        let agents = std::mem::take(&mut self.agents);
        par::map_owned(self.sched, agents, |agent| {
            let mut rng = rng_for(seed, &["session", &round_label, &agent.agent_id]);
            run_session(agent, &ctx, &mut rng)
        })
        .into_iter()
        .collect()
    }

    fn round(&mut self, round: u32) -> Result<()> {
        let cfg = self.config;
        let view = self.stores.snapshot(round);

        let outcomes = self.sessions(round)?;
        let mut outputs: Vec<ResearchOutput> = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            for t in o.trace {
                self.log.push(Record::Trace(t));
            }
            for f in o.failures {
                self.fail(f);
            }
            outputs.push(o.output);
            self.agents.push(o.agent);
        }
        for output in &outputs {
            self.log.push(Record::Output { output: output.clone() });
        }

        let backend = self.backend;
        let embedded = par::map(self.sched, &outputs, |o| {
            let id = format!("r{round:03}/{}/embed", o.output_id);
            embed_or_local(backend, id, format!("{}\n{}", o.title, o.abstract_text), &o.approach)
        });
        let mut embeddings: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (o, (v, failure)) in outputs.iter().zip(embedded) {
            if let Some(f) = failure {
                self.fail(f);
            }
            embeddings.insert(o.output_id.clone(), v);
        }

        // Review panels, scored against the round-start snapshot.
        let by_id: BTreeMap<&str, &AgentState> = self.agents.iter().map(|a| (a.agent_id.as_str(), a)).collect();
        let landscape = &self.landscape;
        let panels = par::map(self.sched, &outputs, |o| -> Result<(Vec<Review>, Vec<BackendFailure>)> {
            let emb = &embeddings[&o.output_id];
            let panel = select_reviewers(emb, &o.authors(), &view, cfg.reviewers_per_paper)?;
            let mut reviews = Vec::with_capacity(panel.len());
            let mut failures = Vec::new();
            for reviewer_id in panel {
                let reviewer = by_id[reviewer_id.as_str()];
                let req = review_request(reviewer, o, &view, landscape, &cfg.perception, emb)?;
                let rid = format!("r{round:03}/{}/review/{reviewer_id}", o.output_id);
                let scores = match backend::review(backend, &rid, req.clone()) {
                    Ok(s) => s,
                    Err(e) => {
                        failures.push(BackendFailure::new(&rid, RequestKind::Review, &e));
                        simulate_review(&req)
                    }
                };
                reviews.push(Review::from_scores(&o.output_id, &reviewer_id, scores));
            }
            Ok((reviews, failures))
        });
        let mut reviews: BTreeMap<String, Vec<Review>> = BTreeMap::new();
        for (o, panel) in outputs.iter().zip(panels) {
            let (revs, failures) = panel?;
            for f in failures {
                self.fail(f);
            }
            for r in &revs {
                self.log.push(Record::Review { round, review: r.clone() });
            }
            reviews.insert(o.output_id.clone(), revs);
        }

        let perceived: BTreeMap<String, f64> = outputs
            .iter()
            .map(|o| {
                let p = self.landscape.perceived_significance(&o.approach, view.history(), &cfg.perception)?;
                Ok((o.output_id.clone(), p))
            })
            .collect::<Result<_>>()?;

        // Thematic tournaments and meta-review, serially.
        let archive_ids: Vec<String> = view.papers().map(|p| p.paper_id.clone()).collect();
        let items: Vec<(String, Vec<f64>)> = embeddings.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut trng = rng_for(cfg.seed, &["tournaments", &round.to_string()]);
        let tournaments = cluster_submissions(&items, cfg.tournament_size, &archive_ids, round, &mut trng)?;
        let output_map: BTreeMap<String, &ResearchOutput> = outputs.iter().map(|o| (o.output_id.clone(), o)).collect();
        let mut metas: BTreeMap<String, (String, MetaReview)> = BTreeMap::new();
        for t in &tournaments {
            self.log.push(Record::Tournament { round, tournament: t.clone() });
            let req = meta_request(t, &output_map, &reviews, &perceived, &view)?;
            let rid = format!("r{round:03}/{}/meta", t.tournament_id);
            let answered = backend::meta_review(backend, &rid, req.clone())
                .and_then(|resp| meta_reviews_from(&req, &resp, &output_map));
            let entries = match answered {
                Ok(m) => m,
                Err(e) => {
                    self.fail(BackendFailure::new(&rid, RequestKind::MetaReview, &e));
                    meta_reviews_from(&req, &simulate_meta_review(&req), &output_map)?
                }
            };
            for m in entries {
                metas.insert(m.paper_id.clone(), (t.tournament_id.clone(), m));
            }
        }

        let mut results: Vec<EvaluationResult> = outputs
            .iter()
            .map(|o| {
                let (_, meta) = metas
                    .get(&o.output_id)
                    .ok_or_else(|| Error::Integrity(format!("{} missing from every tournament", o.output_id)))?;
                Ok(EvaluationResult {
                    output_id: o.output_id.clone(),
                    reviews: reviews[&o.output_id].clone(),
                    meta: meta.clone(),
                    combined_score: meta.overall_score,
                    accepted: false,
                })
            })
            .collect::<Result<_>>()?;
        let accepted = accept_round(&mut results, cfg.reviewers_per_paper)?;
        for r in &results {
            self.log.push(Record::MetaReview {
                round,
                tournament_id: metas[&r.output_id].0.clone(),
                metareview: r.meta.clone(),
                combined_score: r.combined_score,
            });
        }

        // Barrier: consequences, in ascending paper id.
        let barrier = round + 1;
        let result_by_id: BTreeMap<&str, &EvaluationResult> = results.iter().map(|r| (r.output_id.as_str(), r)).collect();
        let batch: Vec<Accepted<'_>> = outputs
            .iter()
            .filter(|o| accepted.contains(&o.output_id))
            .map(|o| Accepted {
                output: o,
                meta: &result_by_id[o.output_id.as_str()].meta,
                embedding: embeddings[&o.output_id].clone(),
            })
            .collect();
        let consequences = apply_consequences(batch, &mut self.stores)?;
        let after = self.stores.view();
        for id in &consequences.new_ids {
            let entry = after.entry(id).expect("just inserted").clone();
            let mut entry_at_insert = entry;
            // Citation counts of this batch were zero when inserted; replay re-derives them.
            entry_at_insert.record.citation_count = 0;
            self.log.push(Record::Paper { barrier, entry: entry_at_insert, embedding: embeddings[id].clone() });
        }

        // Private bookkeeping: acceptance flags, reputation, expertise.
        let mut changed: BTreeSet<String> = consequences.citations.touched_agents.clone();
        let refresh_expertise = barrier.is_multiple_of(cfg.expertise_every);
        let mut agents = std::mem::take(&mut self.agents);
        for agent in agents.iter_mut() {
            if let Some(m) = agent.private_memory.last_mut() {
                if m.round == round {
                    m.accepted = m.output_id.as_ref().is_some_and(|id| accepted.contains(id));
                }
            }
            if refresh_expertise {
                let window: Vec<Approach> = agent
                    .private_memory
                    .iter()
                    .filter(|m| m.accepted)
                    .rev()
                    .take(EXPERTISE_WINDOW)
                    .map(|m| m.approach.clone())
                    .collect();
                let before = agent.expertise.clone();
                update_expertise(agent, &window);
                if agent.expertise != before {
                    let current = self.stores.view().profile(&agent.agent_id).expect("registered").clone();
                    let profile = AgentProfile {
                        expertise: agent.expertise.describe(),
                        expertise_topics: agent.expertise.topic_tags.clone(),
                        ..current
                    };
                    let embedding = self.profile_embedding(barrier, agent);
                    self.stores.update_profile(profile, embedding)?;
                    changed.insert(agent.agent_id.clone());
                }
            }
            let p = self.stores.view().profile(&agent.agent_id).expect("registered").clone();
            agent.reputation = Reputation { citation_count: p.citation_count, num_accepted_papers: p.num_accepted_papers };
        }
        self.agents = agents;
        for id in &changed {
            self.log_profile(barrier, id);
        }

        // Attention graph.
        let mut events = RoundEvents::default();
        for o in &outputs {
            for c in &o.collab_agent_ids {
                events.collaborations.push((o.primary_agent_id.clone(), c.clone()));
            }
        }
        let after = self.stores.view();
        for id in &consequences.new_ids {
            let paper = after.paper(id).expect("archived");
            for cited in paper.distinct_citations() {
                let cited_primary = &after.paper(cited).expect("archived").primary_agent_id;
                for author in paper.authors() {
                    events.citations.push((author.to_string(), cited_primary.clone()));
                }
            }
        }
        for o in &outputs {
            for r in &reviews[&o.output_id] {
                for author in o.authors() {
                    events.reviews.push((r.reviewer_id.clone(), author));
                }
            }
        }
        let next = update_attention(&self.graph, &events, cfg.attention_decay)?;
        let metrics = graph_metrics(&next, Some(&self.graph));
        self.log.push(Record::Network { graph: next.clone(), metrics });
        self.graph = next;

        self.close_barrier(barrier, consequences.new_ids);
        Ok(())
    }
}

/// Run an experiment against an explicit backend and scheduling policy.
pub fn run_with(config: &ExperimentConfig, backend: &dyn Backend, sched: Scheduling) -> Result<RunOutcome> {
    config.validate()?;
    let landscape = generate_landscape(config.landscape.dim, config.landscape.n_peaks, config.landscape.seed)?;
    let mut runner = Runner {
        config,
        backend,
        sched,
        landscape: landscape.clone(),
        stores: Stores::new(),
        agents: Vec::with_capacity(config.n_agents),
        graph: AttentionGraph::new(),
        log: RunLog::new(),
        barrier_digests: Vec::new(),
    };
    runner.log.push(Record::Config { config: config.clone() });
    runner.log.push(Record::Landscape { landscape });
    runner.init()?;
    for t in 0..config.rounds {
        runner.round(t)?;
    }
    for a in &runner.agents {
        runner.log.push(Record::Agent { phase: Phase::Final, agent: a.clone() });
    }
    Ok(RunOutcome {
        log: runner.log,
        stores: runner.stores,
        agents: runner.agents,
        graph: runner.graph,
        barrier_digests: runner.barrier_digests,
    })
}
