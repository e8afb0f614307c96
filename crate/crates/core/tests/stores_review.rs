use std::collections::{BTreeMap, BTreeSet};

use episim::agents::{AgentState, Persona};
use episim::backend::{MetaMember, MetaReviewRequest};
use episim::landscape::{Approach, PerceptionParams};
use episim::review::{
    accept_round, apply_consequences, cluster_submissions, score_review, select_reviewers, simulate_meta_review,
    Accepted, EvaluationResult,
};
use episim::seed::{rng_for, SimRng};
use episim::session::{compose_output, ResearchOutput};
use episim::stores::{
    AgentProfile, ArchiveEntry, CitedRef, Decision, MetaReview, PaperRecord, Stores, EMBEDDING_DIM,
    STATUS_ACCEPTED,
};
use episim::Error;
use rand::seq::IndexedRandom;
use rand::Rng;

fn profile(id: &str) -> AgentProfile {
    AgentProfile {
        agent_id: id.into(),
        behavior: String::new(),
        expertise: String::new(),
        expertise_topics: vec![],
        citation_count: 0,
        num_accepted_papers: 0,
    }
}

fn random_vec(rng: &mut SimRng) -> Vec<f64> {
    (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn scan(entries: &[(String, Vec<f64>)], q: &[f64], k: usize, exclude: &BTreeSet<String>) -> Vec<String> {
    let mut scored: Vec<(f64, &String)> = entries
        .iter()
        .filter(|(id, _)| !exclude.contains(id))
        .map(|(id, v)| {
            let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
            let n = (q.iter().map(|a| a * a).sum::<f64>() * v.iter().map(|a| a * a).sum::<f64>()).sqrt();
            (dot / n, id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

fn paper(id: &str, primary: &str, collabs: &[&str], cites: &[&str]) -> ArchiveEntry {
    ArchiveEntry {
        record: PaperRecord {
            paper_id: id.into(),
            primary_agent_id: primary.into(),
            collab_agent_ids: collabs.iter().map(|s| s.to_string()).collect(),
            title: format!("paper {id}"),
            abstract_text: String::new(),
            manuscript: String::new(),
            citation_count: 0,
            publication_t: 0,
            cited_paper_ids: cites
                .iter()
                .map(|c| CitedRef { paper_id: c.to_string(), agent_id: String::new(), title: String::new() })
                .collect(),
            code_script: None,
            metareview: None,
            status: STATUS_ACCEPTED.into(),
        },
        approach: Approach::new(vec![0.5, 0.5]).unwrap(),
        claimed_value: 0.5,
    }
}

fn registry(n: usize, rng: &mut SimRng) -> (Stores, Vec<(String, Vec<f64>)>) {
    let mut s = Stores::new();
    let mut entries = Vec::new();
    for i in 0..n {
        let id = format!("agent_{:03}", i + 1);
        let v = random_vec(rng);
        s.register_agent(profile(&id), v.clone()).unwrap();
        entries.push((id, v));
    }
    (s, entries)
}

#[test]
fn registry_counts_and_queries() {
    let mut rng = rng_for(1, &["registry"]);
    let (s, _) = registry(16, &mut rng);
    assert_eq!(s.view().registry_len(), 16);
    assert_eq!(s.view().profile("agent_003"), Some(&profile("agent_003")));

    let (big, entries) = registry(100, &mut rng);
    for _ in 0..20 {
        let q = random_vec(&mut rng);
        let got: Vec<String> =
            big.view().query_registry(&q, 5, &BTreeSet::new()).unwrap().iter().map(|p| p.agent_id.clone()).collect();
        assert_eq!(got, scan(&entries, &q, 5, &BTreeSet::new()));
    }

    let (one, _) = registry(1, &mut rng);
    let q = random_vec(&mut rng);
    assert_eq!(one.view().query_registry(&q, 1, &BTreeSet::new()).unwrap().len(), 1);
    let only: BTreeSet<String> = ["agent_001".to_string()].into();
    assert!(one.view().query_registry(&q, 1, &only).unwrap().is_empty());
}

#[test]
fn archive_queries_match_exhaustive_scan() {
    let mut rng = rng_for(2, &["archive"]);
    let mut s = Stores::new();
    s.register_agent(profile("a"), random_vec(&mut rng)).unwrap();
    assert!(s.view().query_archive(&random_vec(&mut rng), 10).unwrap().is_empty());
    s.archive_insert(paper("p0000", "a", &[], &[]), random_vec(&mut rng)).unwrap();
    let view = s.view();
    let hits = view.query_archive(&random_vec(&mut rng), 10).unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].record.paper_id, "p0000");

    let mut entries = Vec::new();
    let mut s = Stores::new();
    s.register_agent(profile("a"), random_vec(&mut rng)).unwrap();
    for i in 0..500 {
        let id = format!("p{i:04}");
        let v = random_vec(&mut rng);
        s.archive_insert(paper(&id, "a", &[], &[]), v.clone()).unwrap();
        entries.push((id, v));
    }
    for _ in 0..10 {
        let q = random_vec(&mut rng);
        let got: Vec<String> =
            s.view().query_archive(&q, 10).unwrap().iter().map(|e| e.record.paper_id.clone()).collect();
        assert_eq!(got, scan(&entries, &q, 10, &BTreeSet::new()));
    }
}

#[test]
fn archive_insert_errors_and_growth() {
    let mut s = Stores::new();
    s.register_agent(profile("a"), vec![1.0; EMBEDDING_DIM]).unwrap();
    assert!(matches!(s.archive_insert(paper("x", "a", &[], &["missing"]), vec![1.0; EMBEDDING_DIM]), Err(Error::Integrity(_))));
    for round in 0..40 {
        for j in 0..8 {
            s.archive_insert(paper(&format!("r{round:03}-{j}"), "a", &[], &[]), vec![1.0; EMBEDDING_DIM]).unwrap();
        }
    }
    assert_eq!(s.view().archive_len(), 320);
    assert!(s.view().paper("r017-3").is_some());
}

#[test]
fn citation_propagation_examples() {
    let mut s = Stores::new();
    for a in ["a", "b", "c"] {
        s.register_agent(profile(a), vec![1.0; EMBEDDING_DIM]).unwrap();
    }
    s.archive_insert(paper("p", "a", &["b"], &[]), vec![1.0; EMBEDDING_DIM]).unwrap();
    let d = s.propagate_citations(&["p".to_string()]).unwrap();
    assert!(d.pairs.is_empty());
    let v = s.view();
    assert_eq!((v.profile("a").unwrap().num_accepted_papers, v.profile("a").unwrap().citation_count), (1, 0));
    assert_eq!(v.profile("b").unwrap().num_accepted_papers, 1);
    assert_eq!(v.profile("c").unwrap().num_accepted_papers, 0);

    s.archive_insert(paper("q", "c", &[], &["p", "p"]), vec![1.0; EMBEDDING_DIM]).unwrap();
    s.propagate_citations(&["q".to_string()]).unwrap();
    assert_eq!(s.view().paper("p").unwrap().citation_count, 1);
    assert_eq!(s.view().profile("a").unwrap().citation_count, 1);
    assert_eq!(s.view().profile("b").unwrap().citation_count, 1);
    // Repeating is a no-op.
    s.propagate_citations(&["q".to_string()]).unwrap();
    assert_eq!(s.view().paper("p").unwrap().citation_count, 1);
    assert_eq!(s.view().profile("c").unwrap().num_accepted_papers, 1);
}

#[test]
fn seeded_round_delta_equals_distinct_pairs() {
    let mut rng = rng_for(3, &["citations"]);
    let mut s = Stores::new();
    let agents: Vec<String> = (1..=16).map(|i| format!("agent_{i:03}")).collect();
    for a in &agents {
        s.register_agent(profile(a), random_vec(&mut rng)).unwrap();
    }
    let old: Vec<String> = (0..20).map(|i| format!("r000-{i:02}")).collect();
    for id in &old {
        let a = agents.choose(&mut rng).unwrap();
        s.archive_insert(paper(id, a, &[], &[]), random_vec(&mut rng)).unwrap();
    }
    s.propagate_citations(&old).unwrap();
    let before: u64 = s.view().papers().map(|p| p.citation_count).sum();

    let mut pairs = BTreeSet::new();
    let mut new_ids = Vec::new();
    for i in 0..8 {
        let id = format!("r001-{i:02}");
        let cites: Vec<&str> = (0..rng.random_range(0..6)).map(|_| old.choose(&mut rng).unwrap().as_str()).collect();
        for c in &cites {
            pairs.insert((id.clone(), c.to_string()));
        }
        let a = agents.choose(&mut rng).unwrap();
        s.archive_insert(paper(&id, a, &[], &cites), random_vec(&mut rng)).unwrap();
        new_ids.push(id);
    }
    let delta = s.propagate_citations(&new_ids).unwrap();
    let after: u64 = s.view().papers().map(|p| p.citation_count).sum();
    assert_eq!(after - before, pairs.len() as u64);
    assert_eq!(delta.pairs.len(), pairs.len());
}

#[test]
fn snapshots_are_immutable_and_comparable() {
    let mut s = Stores::new();
    s.register_agent(profile("a"), vec![1.0; EMBEDDING_DIM]).unwrap();
    let before = s.snapshot(0);
    let again = s.snapshot(0);
    assert_eq!(before, again);
    s.archive_insert(paper("p", "a", &[], &[]), vec![1.0; EMBEDDING_DIM]).unwrap();
    assert_ne!(before.digest(), s.view().digest());
    assert_eq!(before.archive_len(), 0);
}

fn output(agent: &str, round: u32, coords: [f64; 2], collabs: &[&str]) -> ResearchOutput {
    let a = AgentState::new(agent, Persona::neutral(), Approach::new(coords.to_vec()).unwrap());
    let x = Approach::new(coords.to_vec()).unwrap();
    compose_output(&a, round, (x, 0.5), &[], collabs.iter().map(|s| s.to_string()).collect(), vec![], String::new())
}

#[test]
fn panels_exclude_authors_and_match_scan() {
    let mut rng = rng_for(4, &["panel"]);
    let (s, entries) = registry(16, &mut rng);
    for _ in 0..50 {
        let q = random_vec(&mut rng);
        let primary = entries[rng.random_range(0..16)].0.clone();
        let collab = entries[rng.random_range(0..16)].0.clone();
        let authors: BTreeSet<String> = [primary.clone(), collab.clone()].into();
        let panel = select_reviewers(&q, &authors, &s.view(), 2).unwrap();
        assert_eq!(panel.len(), 2);
        assert!(!panel.contains(&primary) && !panel.contains(&collab));
        assert_eq!(panel, scan(&entries, &q, 2, &authors));
    }
    let (small, _) = registry(3, &mut rng);
    let authors: BTreeSet<String> = ["agent_001".to_string(), "agent_002".to_string()].into();
    assert!(matches!(select_reviewers(&random_vec(&mut rng), &authors, &small.view(), 2), Err(Error::Config(_))));
}

#[test]
fn review_scoring_examples() {
    let landscape = episim::landscape::generate_landscape(2, 12, 0).unwrap();
    let perception = PerceptionParams::default();
    let mut s = Stores::new();
    for a in ["agent_001", "agent_002", "agent_003"] {
        s.register_agent(profile(a), vec![1.0; EMBEDDING_DIM]).unwrap();
    }
    let out = output("agent_001", 1, [0.3, 0.3], &[]);
    let mut entry = paper("r000-agent_002", "agent_002", &[], &[]);
    entry.approach = out.approach.clone();
    s.archive_insert(entry, vec![1.0; EMBEDDING_DIM]).unwrap();

    let reviewer = AgentState::new("agent_003", Persona::neutral(), Approach::new(vec![0.5, 0.5]).unwrap());
    let twin = AgentState { agent_id: "agent_002".into(), ..reviewer.clone() };
    let r1 = score_review(&reviewer, &out, &s.view(), &landscape, &perception).unwrap();
    let r2 = score_review(&twin, &out, &s.view(), &landscape, &perception).unwrap();
    assert_eq!(r1.originality, 1);
    assert_eq!(
        (r1.support, r1.soundness, r1.significance, r1.originality, r1.overall, &r1.text),
        (r2.support, r2.soundness, r2.significance, r2.originality, r2.overall, &r2.text)
    );
    let author = AgentState { agent_id: "agent_001".into(), ..reviewer };
    assert!(matches!(score_review(&author, &out, &s.view(), &landscape, &perception), Err(Error::Validation(_))));
}

fn items(n: usize, rng: &mut SimRng) -> Vec<(String, Vec<f64>)> {
    (0..n).map(|i| (format!("o{i:03}"), random_vec(rng))).collect()
}

#[test]
fn clustering_sizes_and_partition() {
    let mut rng = rng_for(5, &["cluster"]);
    let ts = cluster_submissions(&items(16, &mut rng), 4, &[], 0, &mut rng).unwrap();
    assert_eq!(ts.iter().map(|t| t.member_output_ids.len()).collect::<Vec<_>>(), vec![4; 4]);
    let ts = cluster_submissions(&items(5, &mut rng), 4, &[], 0, &mut rng).unwrap();
    assert_eq!(ts.iter().map(|t| t.member_output_ids.len()).collect::<Vec<_>>(), vec![4, 1]);

    let archive: Vec<String> = (0..7).map(|i| format!("p{i}")).collect();
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let l = rng.random_range(2..7);
        let its = items(n, &mut rng);
        let ts = cluster_submissions(&its, l, &archive, 3, &mut rng).unwrap();
        let mut seen = BTreeSet::new();
        for t in &ts {
            assert!(!t.member_output_ids.is_empty() && t.member_output_ids.len() <= l);
            assert!(t.reference_paper_ids.len() <= 2);
            for id in &t.member_output_ids {
                assert!(seen.insert(id.clone()), "{id} in two tournaments");
            }
        }
        assert_eq!(seen.len(), n);
        assert_eq!(ts.len(), n.div_ceil(l));
    }
}

fn member(i: usize, overalls: Vec<u8>, sig: f64) -> MetaMember {
    MetaMember {
        submission_id: format!("sub-{i}"),
        position: i,
        title: String::new(),
        abstract_text: String::new(),
        review_overalls: overalls,
        review_texts: vec![],
        perceived_significance: sig,
    }
}

#[test]
fn meta_review_ranks() {
    let single = MetaReviewRequest { tournament_id: "t".into(), members: vec![member(0, vec![3, 3], 0.4)], references: vec![] };
    assert_eq!(simulate_meta_review(&single).entries[0].rank, 1);

    let pair = MetaReviewRequest {
        tournament_id: "t".into(),
        members: vec![member(0, vec![5, 5], 0.5), member(1, vec![1, 1], 0.5)],
        references: vec![],
    };
    let r = simulate_meta_review(&pair);
    assert_eq!((r.entries[0].rank, r.entries[1].rank), (1, 2));

    let mut rng = rng_for(6, &["meta"]);
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let tied = rng.random_bool(0.3);
        let members: Vec<MetaMember> = (0..n)
            .map(|i| {
                if tied {
                    member(i, vec![3, 3], 0.5)
                } else {
                    member(i, vec![rng.random_range(1..=5), rng.random_range(1..=5)], rng.random())
                }
            })
            .collect();
        let resp = simulate_meta_review(&MetaReviewRequest { tournament_id: "t".into(), members, references: vec![] });
        let mut ranks: Vec<u32> = resp.entries.iter().map(|e| e.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (1..=n as u32).collect::<Vec<_>>());
        assert!(resp.entries.iter().all(|e| (0.0..=1.0).contains(&e.score)));
        // Rank order and score order agree strictly.
        let mut by_rank = resp.entries.clone();
        by_rank.sort_by_key(|e| e.rank);
        assert!(by_rank.windows(2).all(|w| w[0].score > w[1].score || w[0].score == 0.0));
    }
}

fn result(id: &str, score: f64) -> EvaluationResult {
    EvaluationResult {
        output_id: id.into(),
        reviews: vec![],
        meta: MetaReview {
            paper_id: id.into(),
            meta_review_text: String::new(),
            overall_score: score,
            rank: 1,
            justification: String::new(),
            decision: Decision::Reject,
        },
        combined_score: score,
        accepted: false,
    }
}

#[test]
fn acceptance_quota_matches_sort_oracle() {
    let mut rng = rng_for(7, &["accept"]);
    let mut results: Vec<EvaluationResult> = (0..16).map(|i| result(&format!("o{i:02}"), rng.random())).collect();
    let accepted = accept_round(&mut results, 2).unwrap();
    assert_eq!(accepted.len(), 8);
    let mut oracle: Vec<(f64, String)> = results.iter().map(|r| (r.combined_score, r.output_id.clone())).collect();
    oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    let want: BTreeSet<String> = oracle.into_iter().take(8).map(|(_, id)| id).collect();
    assert_eq!(accepted, want);
    assert!(results.iter().all(|r| r.accepted == (r.meta.decision == Decision::Accept)));

    let mut all: Vec<EvaluationResult> = (0..5).map(|i| result(&format!("o{i}"), 0.1)).collect();
    assert_eq!(accept_round(&mut all, 1).unwrap().len(), 5);
    assert!(accept_round(&mut all, 0).is_err());
}

#[test]
fn consequences_grow_archive_and_credit_authors() {
    let mut s = Stores::new();
    let agents: Vec<String> = (1..=16).map(|i| format!("agent_{i:03}")).collect();
    for a in &agents {
        s.register_agent(profile(a), vec![1.0; EMBEDDING_DIM]).unwrap();
    }
    let outputs: Vec<ResearchOutput> = (0..16)
        .map(|i| {
            let collab = if i % 3 == 0 { vec![agents[(i + 1) % 16].as_str()] } else { vec![] };
            output(&agents[i], 0, [i as f64 / 16.0, 0.5], &collab)
        })
        .collect();
    let metas: BTreeMap<String, MetaReview> =
        outputs.iter().map(|o| (o.output_id.clone(), result(&o.output_id, 0.5).meta)).collect();
    let batch: Vec<Accepted<'_>> = outputs
        .iter()
        .step_by(2)
        .map(|o| Accepted { output: o, meta: &metas[&o.output_id], embedding: vec![1.0; EMBEDDING_DIM] })
        .collect();
    let c = apply_consequences(batch, &mut s).unwrap();
    assert_eq!(c.new_ids.len(), 8);
    assert_eq!(s.view().archive_len(), 8);
    assert!(s.view().paper(&outputs[1].output_id).is_none());
    let mut expected: BTreeMap<&str, u64> = BTreeMap::new();
    for o in outputs.iter().step_by(2) {
        for a in o.authors() {
            *expected.entry(agents.iter().find(|x| **x == a).unwrap()).or_default() += 1;
        }
    }
    for p in s.view().profiles() {
        assert_eq!(p.num_accepted_papers, expected.get(p.agent_id.as_str()).copied().unwrap_or(0));
    }
}
