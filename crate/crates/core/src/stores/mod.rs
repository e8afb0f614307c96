//! Agent registry and internal archive.
//!
//! All mutation happens on [`Stores`] at round barriers. Sessions read through
//! a [`StoreView`], an immutable snapshot that shares storage with the live
//! store until the next barrier writes to it.

mod index;
mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use index::{cosine, EmbeddingIndex};
pub use schema::{AgentProfile, CitedRef, Decision, MetaReview, PaperRecord, STATUS_ACCEPTED};

use crate::error::{validation, Error, Result};
use crate::landscape::Approach;

/// Width of every embedding in the registry and archive.
pub const EMBEDDING_DIM: usize = 32;

/// An archived paper together with the simulation content behind it.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ArchiveEntry {
    pub record: PaperRecord,
    pub approach: Approach,
    pub claimed_value: f64,
}

#[derive(Debug, Clone, Default)]
struct StoreState {
    registry: BTreeMap<String, AgentProfile>,
    registry_index: EmbeddingIndex,
    archive: BTreeMap<String, ArchiveEntry>,
    archive_index: EmbeddingIndex,
    /// Accepted approaches in insertion order.
    history: Vec<Approach>,
    credited_pairs: BTreeSet<(String, String)>,
    credited_papers: BTreeSet<String>,
}

/// Counter changes made by one call to [`Stores::propagate_citations`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CitationDelta {
    /// Newly credited (citing, cited) pairs.
    pub pairs: Vec<(String, String)>,
    /// Profiles touched, ascending.
    pub touched_agents: BTreeSet<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Stores {
    state: Arc<StoreState>,
}

/// Read-only snapshot of the stores at a barrier.
#[derive(Debug, Clone)]
pub struct StoreView {
    round: u32,
    state: Arc<StoreState>,
}

fn embedding_check(v: &[f64]) -> Result<()> {
    if v.len() != EMBEDDING_DIM {
        return Err(validation(format!("embedding must have {EMBEDDING_DIM} entries, got {}", v.len())));
    }
    Ok(())
}

impl Stores {
    pub fn new() -> Self {
        Stores::default()
    }

    fn state_mut(&mut self) -> &mut StoreState {
        Arc::make_mut(&mut self.state)
    }

    pub fn register_agent(&mut self, profile: AgentProfile, embedding: Vec<f64>) -> Result<()> {
        embedding_check(&embedding)?;
        if self.state.registry.contains_key(&profile.agent_id) {
            return Err(Error::Conflict(format!("agent {} already registered", profile.agent_id)));
        }
        let st = self.state_mut();
        st.registry_index.insert(&profile.agent_id, embedding)?;
        st.registry.insert(profile.agent_id.clone(), profile);
        Ok(())
    }

    /// Replace an existing profile. Reputation counters may not decrease.
    pub fn update_profile(&mut self, profile: AgentProfile, embedding: Vec<f64>) -> Result<()> {
        embedding_check(&embedding)?;
        let old = self
            .state
            .registry
            .get(&profile.agent_id)
            .ok_or_else(|| Error::NotFound(format!("agent {}", profile.agent_id)))?;
        if profile.citation_count < old.citation_count || profile.num_accepted_papers < old.num_accepted_papers {
            return Err(Error::Integrity(format!("reputation of {} would decrease", profile.agent_id)));
        }
        let st = self.state_mut();
        st.registry_index.upsert(&profile.agent_id, embedding)?;
        st.registry.insert(profile.agent_id.clone(), profile);
        Ok(())
    }

    /// Insert or replace a profile without checks; used when rebuilding from a log.
    pub(crate) fn restore_profile(&mut self, profile: AgentProfile, embedding: Vec<f64>) -> Result<()> {
        embedding_check(&embedding)?;
        let st = self.state_mut();
        st.registry_index.upsert(&profile.agent_id, embedding)?;
        st.registry.insert(profile.agent_id.clone(), profile);
        Ok(())
    }

    pub fn archive_insert(&mut self, entry: ArchiveEntry, embedding: Vec<f64>) -> Result<()> {
        embedding_check(&embedding)?;
        let rec = &entry.record;
        if self.state.archive.contains_key(&rec.paper_id) {
            return Err(Error::Conflict(format!("paper {} already archived", rec.paper_id)));
        }
        if rec.status != STATUS_ACCEPTED {
            return Err(validation(format!("paper {} has status {:?}", rec.paper_id, rec.status)));
        }
        if rec.collab_agent_ids.contains(&rec.primary_agent_id) {
            return Err(validation("primary agent listed as collaborator"));
        }
        if let Some(missing) = rec.cited_paper_ids.iter().find(|c| !self.state.archive.contains_key(&c.paper_id)) {
            return Err(Error::Integrity(format!("{} cites unknown paper {}", rec.paper_id, missing.paper_id)));
        }
        let st = self.state_mut();
        st.archive_index.insert(&entry.record.paper_id, embedding)?;
        st.history.push(entry.approach.clone());
        st.archive.insert(entry.record.paper_id.clone(), entry);
        Ok(())
    }

    /// Distinct (citing, cited) pairs of `new_ids` not yet credited.
    fn pending_pairs(&self, new_ids: &[String]) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for id in new_ids {
            let entry = self
                .state
                .archive
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("paper {id}")))?;
            for cited in entry.record.distinct_citations() {
                if !self.state.archive.contains_key(cited) {
                    return Err(Error::Integrity(format!("{id} cites unknown paper {cited}")));
                }
                let pair = (id.clone(), cited.to_string());
                if !self.state.credited_pairs.contains(&pair) {
                    pairs.push(pair);
                }
            }
        }
        Ok(pairs)
    }

    fn apply_pairs(&mut self, pairs: &[(String, String)]) {
        let st = self.state_mut();
        for pair in pairs {
            st.credited_pairs.insert(pair.clone());
            let cited = st.archive.get_mut(&pair.1).expect("pairs reference archived papers");
            cited.record.citation_count += 1;
        }
    }

    /// Increment paper citation counters only; profiles are left untouched.
    pub(crate) fn credit_papers(&mut self, new_ids: &[String]) -> Result<Vec<(String, String)>> {
        let pairs = self.pending_pairs(new_ids)?;
        self.apply_pairs(&pairs);
        Ok(pairs)
    }

    /// Propagate citations and authorship credit for newly accepted papers.
    ///
    /// Each distinct (citing, cited) pair adds one citation to the cited paper
    /// and to every author of it. Every author of a new paper (primary or
    /// collaborator) gains one accepted paper. Repeated calls are no-ops.
    pub fn propagate_citations(&mut self, new_ids: &[String]) -> Result<CitationDelta> {
        let pairs = self.pending_pairs(new_ids)?;
        let mut delta = CitationDelta { pairs: pairs.clone(), ..Default::default() };
        let mut credit: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for (_, cited) in &pairs {
            for a in self.state.archive[cited].record.authors() {
                credit.entry(a.to_string()).or_default().0 += 1;
            }
        }
        let mut fresh = Vec::new();
        for id in new_ids {
            if self.state.credited_papers.contains(id) {
                continue;
            }
            fresh.push(id.clone());
            for a in self.state.archive[id].record.authors() {
                credit.entry(a.to_string()).or_default().1 += 1;
            }
        }
        if let Some(unknown) = credit.keys().find(|a| !self.state.registry.contains_key(*a)) {
            return Err(Error::Integrity(format!("author {unknown} missing from registry")));
        }
        self.apply_pairs(&pairs);
        let st = self.state_mut();
        st.credited_papers.extend(fresh);
        for (agent, (cites, papers)) in credit {
            let p = st.registry.get_mut(&agent).expect("checked above");
            p.citation_count += cites;
            p.num_accepted_papers += papers;
            delta.touched_agents.insert(agent);
        }
        Ok(delta)
    }

    pub fn snapshot(&self, round: u32) -> StoreView {
        StoreView { round, state: Arc::clone(&self.state) }
    }

    pub fn view(&self) -> StoreView {
        self.snapshot(0)
    }
}

#[derive(Serialize)]
struct CanonicalRegistryEntry<'a> {
    profile: &'a AgentProfile,
    embedding: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct CanonicalArchiveEntry<'a> {
    entry: &'a ArchiveEntry,
    embedding: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct CanonicalState<'a> {
    registry: Vec<CanonicalRegistryEntry<'a>>,
    archive: Vec<CanonicalArchiveEntry<'a>>,
    history: &'a [Approach],
}

impl StoreView {
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn profile(&self, agent_id: &str) -> Option<&AgentProfile> {
        self.state.registry.get(agent_id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &AgentProfile> {
        self.state.registry.values()
    }

    pub fn registry_len(&self) -> usize {
        self.state.registry.len()
    }

    pub fn registry_embedding(&self, agent_id: &str) -> Option<&[f64]> {
        self.state.registry_index.get(agent_id)
    }

    pub fn paper(&self, paper_id: &str) -> Option<&PaperRecord> {
        self.state.archive.get(paper_id).map(|e| &e.record)
    }

    pub fn entry(&self, paper_id: &str) -> Option<&ArchiveEntry> {
        self.state.archive.get(paper_id)
    }

    pub fn papers(&self) -> impl Iterator<Item = &PaperRecord> {
        self.state.archive.values().map(|e| &e.record)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ArchiveEntry> {
        self.state.archive.values()
    }

    pub fn archive_len(&self) -> usize {
        self.state.archive.len()
    }

    /// Accepted approaches, in acceptance order.
    pub fn history(&self) -> &[Approach] {
        &self.state.history
    }

    pub fn query_registry(&self, query: &[f64], k: usize, exclude: &BTreeSet<String>) -> Result<Vec<&AgentProfile>> {
        Ok(self
            .state
            .registry_index
            .top_k(query, k, exclude)?
            .into_iter()
            .map(|(id, _)| &self.state.registry[&id])
            .collect())
    }

    pub fn query_archive(&self, query: &[f64], k: usize) -> Result<Vec<&ArchiveEntry>> {
        Ok(self
            .state
            .archive_index
            .top_k(query, k, &BTreeSet::new())?
            .into_iter()
            .map(|(id, _)| &self.state.archive[&id])
            .collect())
    }

    /// SHA-256 over the canonical JSON form of the registry, archive and history.
    pub fn digest(&self) -> String {
        let st = &self.state;
        let canon = CanonicalState {
            registry: st
                .registry
                .values()
                .map(|p| CanonicalRegistryEntry { profile: p, embedding: st.registry_index.get(&p.agent_id) })
                .collect(),
            archive: st
                .archive
                .values()
                .map(|e| CanonicalArchiveEntry { entry: e, embedding: st.archive_index.get(&e.record.paper_id) })
                .collect(),
            history: &st.history,
        };
        let bytes = serde_json::to_vec(&canon).expect("store state serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

impl PartialEq for StoreView {
    fn eq(&self, other: &Self) -> bool {
        self.digest() == other.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn profile(id: &str) -> AgentProfile {
        AgentProfile {
            agent_id: id.into(),
            behavior: "b".into(),
            expertise: "e".into(),
            expertise_topics: vec![],
            citation_count: 0,
            num_accepted_papers: 0,
        }
    }

    fn emb(x: f64, y: f64) -> Vec<f64> {
        Approach::new(vec![x, y]).unwrap().embedding(EMBEDDING_DIM)
    }

    fn paper(id: &str, primary: &str, collabs: &[&str], cites: &[&str]) -> ArchiveEntry {
        ArchiveEntry {
            record: PaperRecord {
                paper_id: id.into(),
                primary_agent_id: primary.into(),
                collab_agent_ids: collabs.iter().map(|s| s.to_string()).collect(),
                title: format!("title {id}"),
                abstract_text: String::new(),
                manuscript: String::new(),
                citation_count: 0,
                publication_t: 0,
                cited_paper_ids: cites
                    .iter()
                    .map(|c| CitedRef { paper_id: c.to_string(), agent_id: "x".into(), title: String::new() })
                    .collect(),
                code_script: None,
                metareview: None,
                status: STATUS_ACCEPTED.into(),
            },
            approach: Approach::new(vec![0.5, 0.5]).unwrap(),
            claimed_value: 0.5,
        }
    }

    fn registry(n: usize) -> Stores {
        let mut s = Stores::new();
        for i in 0..n {
            s.register_agent(profile(&format!("a{i}")), emb(0.06 * i as f64 + 0.02, 0.5)).unwrap();
        }
        s
    }

    #[test]
    fn register_fetch_and_duplicate() {
        let mut s = Stores::new();
        s.register_agent(profile("a"), emb(0.2, 0.2)).unwrap();
        assert_eq!(s.view().profile("a"), Some(&profile("a")));
        assert!(matches!(s.register_agent(profile("a"), emb(0.2, 0.2)), Err(Error::Conflict(_))));
        let s = registry(16);
        assert_eq!(s.view().registry_len(), 16);
    }

    #[test]
    fn query_archive_edge_cases() {
        let mut s = registry(2);
        assert!(s.view().query_archive(&emb(0.3, 0.3), 3).unwrap().is_empty());
        s.archive_insert(paper("p1", "a0", &[], &[]), emb(0.9, 0.1)).unwrap();
        let v = s.view();
        let got = v.query_archive(&emb(0.1, 0.9), 5).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].record.paper_id, "p1");
        assert!(v.query_archive(&[1.0], 1).is_err());
    }

    #[test]
    fn insert_rejects_dangling_and_duplicates() {
        let mut s = registry(2);
        assert!(matches!(s.archive_insert(paper("p1", "a0", &[], &["nope"]), emb(0.1, 0.1)), Err(Error::Integrity(_))));
        s.archive_insert(paper("p1", "a0", &[], &[]), emb(0.1, 0.1)).unwrap();
        assert!(matches!(s.archive_insert(paper("p1", "a0", &[], &[]), emb(0.1, 0.1)), Err(Error::Conflict(_))));
        assert_eq!(s.view().paper("p1").unwrap().title, "title p1");
    }

    #[test]
    fn citation_propagation_counts_pairs_once() {
        let mut s = registry(3);
        s.archive_insert(paper("p1", "a0", &["a1"], &[]), emb(0.1, 0.1)).unwrap();
        let d = s.propagate_citations(&["p1".into()]).unwrap();
        assert!(d.pairs.is_empty());
        let v = s.view();
        assert_eq!(v.profile("a0").unwrap().num_accepted_papers, 1);
        assert_eq!(v.profile("a1").unwrap().num_accepted_papers, 1);
        assert_eq!(v.profile("a0").unwrap().citation_count, 0);

        s.archive_insert(paper("p2", "a2", &[], &["p1", "p1"]), emb(0.2, 0.1)).unwrap();
        s.propagate_citations(&["p2".into()]).unwrap();
        // second call is a no-op
        s.propagate_citations(&["p2".into()]).unwrap();
        let v = s.view();
        assert_eq!(v.paper("p1").unwrap().citation_count, 1);
        assert_eq!(v.profile("a0").unwrap().citation_count, 1);
        assert_eq!(v.profile("a1").unwrap().citation_count, 1);
        assert_eq!(v.profile("a2").unwrap().num_accepted_papers, 1);
    }

    #[test]
    fn snapshots_are_isolated() {
        let mut s = registry(2);
        let before = s.snapshot(0);
        let again = s.snapshot(0);
        assert_eq!(before, again);
        s.archive_insert(paper("p1", "a0", &[], &[]), emb(0.1, 0.1)).unwrap();
        let after = s.snapshot(1);
        assert_eq!(before.archive_len(), 0);
        assert_eq!(after.archive_len(), 1);
        assert_ne!(before.digest(), after.digest());
    }

    #[test]
    fn reputation_never_decreases() {
        let mut s = registry(1);
        let mut p = profile("a0");
        p.num_accepted_papers = 2;
        s.update_profile(p.clone(), emb(0.1, 0.1)).unwrap();
        p.num_accepted_papers = 1;
        assert!(matches!(s.update_profile(p, emb(0.1, 0.1)), Err(Error::Integrity(_))));
        assert!(matches!(s.update_profile(profile("zz"), emb(0.1, 0.1)), Err(Error::NotFound(_))));
    }
}
