//! Registry and archive record types. Field sets mirror the persisted schema
//! one-for-one.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: String,
    pub behavior: String,
    pub expertise: String,
    pub expertise_topics: Vec<String>,
    pub citation_count: u64,
    pub num_accepted_papers: u64,
}

/// Reference descriptor stored in `cited_paper_ids`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CitedRef {
    pub paper_id: String,
    pub agent_id: String,
    pub title: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaReview {
    pub paper_id: String,
    pub meta_review_text: String,
    pub overall_score: f64,
    pub rank: u32,
    pub justification: String,
    pub decision: Decision,
}

pub const STATUS_ACCEPTED: &str = "accepted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub primary_agent_id: String,
    pub collab_agent_ids: Vec<String>,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub manuscript: String,
    pub citation_count: u64,
    pub publication_t: u32,
    pub cited_paper_ids: Vec<CitedRef>,
    pub code_script: Option<String>,
    pub metareview: Option<MetaReview>,
    pub status: String,
}

impl PaperRecord {
    pub fn authors(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.primary_agent_id.as_str()).chain(self.collab_agent_ids.iter().map(String::as_str))
    }

    /// Cited paper ids with duplicates removed, in first-listed order.
    pub fn distinct_citations(&self) -> Vec<&str> {
        let mut seen = std::collections::BTreeSet::new();
        self.cited_paper_ids
            .iter()
            .map(|c| c.paper_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }
}
