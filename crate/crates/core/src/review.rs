//! Two-stage evaluation: reviewer panels, then ranked meta-review tournaments,
//! then round-wide acceptance and its consequences for the stores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::{belief_estimate, AgentState};
use crate::backend::{
    MetaEntry, MetaMember, MetaReviewRequest, MetaReviewResponse, ReferencePaper, ReviewContext, ReviewRequest,
    ReviewScores, ReviewerView,
};
use crate::error::{validation, Error, Result};
use crate::landscape::{novelty_of, Landscape, PerceptionParams};
use crate::seed::SimRng;
use crate::session::ResearchOutput;
use crate::stores::{
    cosine, ArchiveEntry, CitationDelta, CitedRef, Decision, MetaReview, PaperRecord, StoreView, Stores,
    STATUS_ACCEPTED,
};

pub const DEFAULT_REVIEWERS: usize = 2;
pub const DEFAULT_TOURNAMENT_SIZE: usize = 4;
/// Archive papers attached to every tournament.
pub const REFERENCES_PER_TOURNAMENT: usize = 2;
const RELATED_TITLES: usize = 3;
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub output_id: String,
    pub reviewer_id: String,
    pub support: u8,
    pub soundness: u8,
    pub significance: u8,
    pub originality: u8,
    pub overall: u8,
    pub text: String,
}

impl Review {
    pub fn from_scores(output_id: &str, reviewer_id: &str, s: ReviewScores) -> Self {
        Review {
            output_id: output_id.to_string(),
            reviewer_id: reviewer_id.to_string(),
            support: s.support,
            soundness: s.soundness,
            significance: s.significance,
            originality: s.originality,
            overall: s.overall,
            text: s.text,
        }
    }

    pub fn in_range(&self) -> bool {
        [self.support, self.soundness, self.significance, self.originality]
            .iter()
            .all(|v| (1..=4).contains(v))
            && (1..=5).contains(&self.overall)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tournament {
    pub tournament_id: String,
    pub member_output_ids: Vec<String>,
    pub reference_paper_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub output_id: String,
    pub reviews: Vec<Review>,
    pub meta: MetaReview,
    pub combined_score: f64,
    pub accepted: bool,
}

/// The `k` registry entries most similar to the output, excluding its authors.
pub fn select_reviewers(
    output_embedding: &[f64],
    authors: &BTreeSet<String>,
    view: &StoreView,
    k: usize,
) -> Result<Vec<String>> {
    let panel: Vec<String> = view
        .query_registry(output_embedding, k, authors)?
        .into_iter()
        .map(|p| p.agent_id.clone())
        .collect();
    if panel.len() < k {
        return Err(Error::Config(format!(
            "only {} eligible reviewers, {k} required",
            panel.len()
        )));
    }
    Ok(panel)
}

/// Thresholds 0.2, 0.4 and 0.7 map `[0, 1]` onto 1-4.
pub fn bucket(v: f64) -> u8 {
    match v {
        v if v >= 0.7 => 4,
        v if v >= 0.4 => 3,
        v if v >= 0.2 => 2,
        _ => 1,
    }
}

/// Smaller disagreement between claim and reviewer belief scores higher.
pub fn soundness_score(gap: f64) -> u8 {
    match gap.abs() {
        g if g < 0.05 => 4,
        g if g < 0.1 => 3,
        g if g < 0.2 => 2,
        _ => 1,
    }
}

pub fn support_score(citations: usize, trace_len: usize) -> u8 {
    let s = 1 + citations.min(3) + usize::from(trace_len >= 10);
    s.clamp(1, 4) as u8
}

pub fn overall_score(dims: [u8; 4]) -> u8 {
    let mean = dims.iter().map(|&d| d as f64).sum::<f64>() / 4.0;
    ((mean * 1.25).round() as i64).clamp(1, 5) as u8
}

/// Simulation reviewer. Reads only the blind projection.
pub fn simulate_review(req: &ReviewRequest) -> ReviewScores {
    let sub = &req.submission;
    let harsh = req.reviewer.persona.stance_evaluation < -0.5;
    let shift = |v: u8| if harsh { v.saturating_sub(1).max(1) } else { v };
    let support = shift(support_score(sub.citation_count, sub.trace_len));
    let soundness = shift(soundness_score(sub.claimed_value - req.reviewer.belief_estimate));
    let significance = shift(bucket(req.context.perceived_significance));
    let originality = shift(bucket(req.context.novelty));
    let overall = overall_score([support, soundness, significance, originality]);
    let text = format!(
        "Support {support}/4, soundness {soundness}/4, significance {significance}/4, originality {originality}/4. \
         Claimed {:.3}; my estimate {:.3}.",
        sub.claimed_value, req.reviewer.belief_estimate
    );
    ReviewScores { support, soundness, significance, originality, overall, text }
}

/// Build the double-blind review request for one reviewer.
pub fn review_request(
    reviewer: &AgentState,
    output: &ResearchOutput,
    view: &StoreView,
    landscape: &Landscape,
    perception: &PerceptionParams,
    related_query: &[f64],
) -> Result<ReviewRequest> {
    let history = view.history();
    let perceived = landscape.perceived_significance(&output.approach, history, perception)?;
    let novelty = novelty_of(&output.approach, history, perception)?;
    let related_titles = if view.archive_len() == 0 {
        Vec::new()
    } else {
        view.query_archive(related_query, RELATED_TITLES)?
            .into_iter()
            .map(|e| e.record.title.clone())
            .collect()
    };
    Ok(ReviewRequest {
        submission: output.blind(),
        reviewer: ReviewerView {
            persona: reviewer.persona,
            belief_estimate: belief_estimate(&reviewer.belief, &output.approach),
        },
        context: ReviewContext { perceived_significance: perceived, novelty, related_titles },
    })
}

/// Score an output with the simulation rule.
pub fn score_review(
    reviewer: &AgentState,
    output: &ResearchOutput,
    view: &StoreView,
    landscape: &Landscape,
    perception: &PerceptionParams,
) -> Result<Review> {
    if output.authors().contains(&reviewer.agent_id) {
        return Err(validation(format!("{} is an author of {}", reviewer.agent_id, output.output_id)));
    }
    let query = output.approach.embedding(crate::stores::EMBEDDING_DIM);
    let req = review_request(reviewer, output, view, landscape, perception, &query)?;
    Ok(Review::from_scores(&output.output_id, &reviewer.agent_id, simulate_review(&req)))
}

/// Greedy thematic clustering.
///
/// The unassigned output with the lowest id seeds each cluster, which then
/// takes its `l - 1` most similar unassigned neighbours (ties by id).
pub fn cluster_submissions(
    outputs: &[(String, Vec<f64>)],
    l: usize,
    archive_ids: &[String],
    round: u32,
    rng: &mut SimRng,
) -> Result<Vec<Tournament>> {
    if l < 2 {
        return Err(validation("tournament size must be at least 2"));
    }
    let mut pool: Vec<&(String, Vec<f64>)> = outputs.iter().collect();
    pool.sort_by(|a, b| a.0.cmp(&b.0));
    let mut archive: Vec<&String> = archive_ids.iter().collect();
    archive.sort();
    let mut tournaments = Vec::new();
    while !pool.is_empty() {
        let seed = pool.remove(0);
        let mut scored: Vec<(f64, usize)> = pool.iter().enumerate().map(|(i, o)| (cosine(&seed.1, &o.1), i)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| pool[a.1].0.cmp(&pool[b.1].0)));
        let mut take: Vec<usize> = scored.into_iter().take(l - 1).map(|(_, i)| i).collect();
        let mut members = vec![seed.0.clone()];
        members.extend(take.iter().map(|&i| pool[i].0.clone()));
        take.sort_unstable_by(|a, b| b.cmp(a));
        for i in take {
            pool.remove(i);
        }
        let r = REFERENCES_PER_TOURNAMENT.min(archive.len());
        let mut refs: Vec<String> = rand::seq::index::sample(rng, archive.len(), r)
            .into_iter()
            .map(|i| archive[i].clone())
            .collect();
        refs.sort();
        tournaments.push(Tournament {
            tournament_id: format!("t{round:03}-{:02}", tournaments.len()),
            member_output_ids: members,
            reference_paper_ids: refs,
        });
    }
    Ok(tournaments)
}

/// Assemble the meta-review request. Members appear in ascending output id.
pub fn meta_request(
    tournament: &Tournament,
    outputs: &BTreeMap<String, &ResearchOutput>,
    reviews: &BTreeMap<String, Vec<Review>>,
    perceived: &BTreeMap<String, f64>,
    view: &StoreView,
) -> Result<MetaReviewRequest> {
    let mut ids = tournament.member_output_ids.clone();
    ids.sort();
    let mut members = Vec::with_capacity(ids.len());
    for (position, id) in ids.iter().enumerate() {
        let out = outputs.get(id).ok_or_else(|| Error::NotFound(format!("output {id}")))?;
        let revs = reviews
            .get(id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::Integrity(format!("no reviews for {id}")))?;
        let sig = *perceived
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("no perceived significance for {id}")))?;
        members.push(MetaMember {
            submission_id: out.submission_id(),
            position,
            title: out.title.clone(),
            abstract_text: out.abstract_text.clone(),
            review_overalls: revs.iter().map(|r| r.overall).collect(),
            review_texts: revs.iter().map(|r| r.text.clone()).collect(),
            perceived_significance: sig,
        });
    }
    let references = tournament
        .reference_paper_ids
        .iter()
        .map(|pid| {
            let title = view.paper(pid).map(|p| p.title.clone()).unwrap_or_default();
            ReferencePaper { paper_id: pid.clone(), title }
        })
        .collect();
    Ok(MetaReviewRequest { tournament_id: tournament.tournament_id.clone(), members, references })
}

/// Percentile of `x` among `others`: lower counts 1, equal counts 1/2.
fn percentile(x: f64, others: impl Iterator<Item = f64>) -> f64 {
    let (mut n, mut below) = (0usize, 0.0);
    for o in others {
        n += 1;
        if o < x {
            below += 1.0;
        } else if o == x {
            below += 0.5;
        }
    }
    if n == 0 {
        0.5
    } else {
        below / n as f64
    }
}

/// Raw meta value: `0.6 * mean(overall) / 5 + 0.4 * significance percentile`.
pub fn meta_raw_scores(members: &[MetaMember]) -> Vec<f64> {
    members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mean = m.review_overalls.iter().map(|&o| o as f64).sum::<f64>() / m.review_overalls.len().max(1) as f64;
            let others = members
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| o.perceived_significance);
            mean / 5.0 * 0.6 + percentile(m.perceived_significance, others) * 0.4
        })
        .collect()
}

/// Simulation meta-reviewer: strict ranking by raw value, ties by position.
pub fn simulate_meta_review(req: &MetaReviewRequest) -> MetaReviewResponse {
    let raw = meta_raw_scores(&req.members);
    let mut order: Vec<usize> = (0..req.members.len()).collect();
    order.sort_by(|&a, &b| {
        raw[b]
            .total_cmp(&raw[a])
            .then(req.members[a].position.cmp(&req.members[b].position))
    });
    let mut scores = vec![0.0; raw.len()];
    let mut ranks = vec![0u32; raw.len()];
    let mut prev: Option<f64> = None;
    for (r, &i) in order.iter().enumerate() {
        let mut s = raw[i].clamp(0.0, 1.0);
        if let Some(p) = prev {
            if s >= p {
                s = (p - TIE_EPSILON).max(0.0);
            }
        }
        scores[i] = s;
        ranks[i] = r as u32 + 1;
        prev = Some(s);
    }
    let entries = req
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| MetaEntry {
            submission_id: m.submission_id.clone(),
            score: scores[i],
            rank: ranks[i],
            justification: format!(
                "Ranked {} of {}: mean overall {:.2}, perceived significance {:.3}.",
                ranks[i],
                req.members.len(),
                m.review_overalls.iter().map(|&o| o as f64).sum::<f64>() / m.review_overalls.len().max(1) as f64,
                m.perceived_significance
            ),
            meta_review_text: format!("Score {:.4} from {} reviews.", scores[i], m.review_overalls.len()),
        })
        .collect();
    MetaReviewResponse { entries }
}

/// Map a meta-review response back onto output ids.
pub fn meta_reviews_from(
    req: &MetaReviewRequest,
    resp: &MetaReviewResponse,
    outputs: &BTreeMap<String, &ResearchOutput>,
) -> Result<Vec<MetaReview>> {
    let by_sub: BTreeMap<String, &str> = outputs
        .values()
        .map(|o| (o.submission_id(), o.output_id.as_str()))
        .collect();
    let mut out = Vec::with_capacity(resp.entries.len());
    for e in &resp.entries {
        if !req.members.iter().any(|m| m.submission_id == e.submission_id) {
            return Err(Error::Backend(format!("unknown submission {}", e.submission_id)));
        }
        let paper_id = by_sub
            .get(&e.submission_id)
            .ok_or_else(|| Error::NotFound(format!("submission {}", e.submission_id)))?;
        out.push(MetaReview {
            paper_id: paper_id.to_string(),
            meta_review_text: e.meta_review_text.clone(),
            overall_score: e.score,
            rank: e.rank,
            justification: e.justification.clone(),
            decision: Decision::Reject,
        });
    }
    out.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    Ok(out)
}

/// Simulation meta-review of one tournament.
pub fn meta_review(
    tournament: &Tournament,
    outputs: &BTreeMap<String, &ResearchOutput>,
    reviews: &BTreeMap<String, Vec<Review>>,
    perceived: &BTreeMap<String, f64>,
    view: &StoreView,
) -> Result<Vec<MetaReview>> {
    let req = meta_request(tournament, outputs, reviews, perceived, view)?;
    meta_reviews_from(&req, &simulate_meta_review(&req), outputs)
}

/// Accept the best `floor(n / k)` outputs of the round, ties by output id.
pub fn accept_round(results: &mut [EvaluationResult], k: usize) -> Result<BTreeSet<String>> {
    if k == 0 {
        return Err(validation("k must be at least 1"));
    }
    let quota = results.len() / k;
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        results[b]
            .combined_score
            .total_cmp(&results[a].combined_score)
            .then_with(|| results[a].output_id.cmp(&results[b].output_id))
    });
    let accepted: BTreeSet<String> = order[..quota].iter().map(|&i| results[i].output_id.clone()).collect();
    for r in results.iter_mut() {
        r.accepted = accepted.contains(&r.output_id);
        r.meta.decision = if r.accepted { Decision::Accept } else { Decision::Reject };
    }
    Ok(accepted)
}

/// Result of applying a round's acceptances to the stores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Consequences {
    /// New paper ids, ascending.
    pub new_ids: Vec<String>,
    pub citations: CitationDelta,
}

/// An accepted output on its way into the archive.
pub struct Accepted<'a> {
    pub output: &'a ResearchOutput,
    pub meta: &'a MetaReview,
    pub embedding: Vec<f64>,
}

/// Convert an accepted output into its archive record.
pub fn paper_record(output: &ResearchOutput, meta: &MetaReview, view: &StoreView) -> Result<PaperRecord> {
    let cited = output
        .citations
        .iter()
        .map(|pid| {
            view.paper(pid)
                .map(|p| CitedRef { paper_id: pid.clone(), agent_id: p.primary_agent_id.clone(), title: p.title.clone() })
                .ok_or_else(|| Error::Integrity(format!("{} cites unknown paper {pid}", output.output_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PaperRecord {
        paper_id: output.output_id.clone(),
        primary_agent_id: output.primary_agent_id.clone(),
        collab_agent_ids: output.collab_agent_ids.clone(),
        title: output.title.clone(),
        abstract_text: output.abstract_text.clone(),
        manuscript: output.report_text.clone(),
        citation_count: 0,
        publication_t: output.round,
        cited_paper_ids: cited,
        code_script: Some(output.code_log.clone()),
        metareview: Some(meta.clone()),
        status: STATUS_ACCEPTED.to_string(),
    })
}

/// Insert accepted outputs (ascending paper id) and propagate their citations.
pub fn apply_consequences(mut accepted: Vec<Accepted<'_>>, stores: &mut Stores) -> Result<Consequences> {
    accepted.sort_by(|a, b| a.output.output_id.cmp(&b.output.output_id));
    let mut new_ids = Vec::with_capacity(accepted.len());
    for a in accepted {
        let record = paper_record(a.output, a.meta, &stores.view())?;
        let entry = ArchiveEntry { record, approach: a.output.approach.clone(), claimed_value: a.output.claimed_value };
        new_ids.push(entry.record.paper_id.clone());
        stores.archive_insert(entry, a.embedding)?;
    }
    let citations = stores.propagate_citations(&new_ids)?;
    Ok(Consequences { new_ids, citations })
}
