//! Weighted directed attention graph between agents.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

pub const COLLABORATION_WEIGHT: f64 = 1.0;
pub const CITATION_WEIGHT: f64 = 0.5;
pub const REVIEW_WEIGHT: f64 = 0.1;
pub const DEFAULT_DECAY: f64 = 0.1;
/// Edges at or above this weight count towards churn.
pub const CHURN_THRESHOLD: f64 = 0.5;
/// Added to every candidate's attention when picking a collaborator.
pub const PARTNER_SMOOTHING: f64 = 0.1;
const STRONGEST_PAIRS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "EdgeList", into = "EdgeList")]
pub struct AttentionGraph {
    pub round: u32,
    weights: BTreeMap<(String, String), f64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeList {
    round: u32,
    edges: Vec<Edge>,
}

impl From<EdgeList> for AttentionGraph {
    fn from(l: EdgeList) -> Self {
        AttentionGraph {
            round: l.round,
            weights: l.edges.into_iter().map(|e| ((e.from, e.to), e.weight)).collect(),
        }
    }
}

impl From<AttentionGraph> for EdgeList {
    fn from(g: AttentionGraph) -> Self {
        EdgeList { round: g.round, edges: g.edges() }
    }
}

impl AttentionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn weight(&self, from: &str, to: &str) -> f64 {
        self.weights
            .get(&(from.to_string(), to.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.weights
            .iter()
            .map(|((f, t), w)| Edge { from: f.clone(), to: t.clone(), weight: *w })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sampling weights for choosing among `candidates`.
    pub fn partner_weights(&self, from: &str, candidates: &[String]) -> Vec<f64> {
        candidates
            .iter()
            .map(|c| self.weight(from, c) + PARTNER_SMOOTHING)
            .collect()
    }

    fn above(&self, threshold: f64) -> BTreeSet<(String, String)> {
        self.weights
            .iter()
            .filter(|(_, w)| **w >= threshold)
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// Interaction events observed in one round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundEvents {
    /// (principal, collaborator)
    pub collaborations: Vec<(String, String)>,
    /// (citing author, cited primary author)
    pub citations: Vec<(String, String)>,
    /// (reviewer, author)
    pub reviews: Vec<(String, String)>,
}

impl RoundEvents {
    fn increments(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        let collab = self.collaborations.iter().flat_map(|(a, b)| {
            [(a.as_str(), b.as_str(), COLLABORATION_WEIGHT), (b.as_str(), a.as_str(), COLLABORATION_WEIGHT)]
        });
        let cites = self.citations.iter().map(|(a, b)| (a.as_str(), b.as_str(), CITATION_WEIGHT));
        let reviews = self.reviews.iter().map(|(a, b)| (a.as_str(), b.as_str(), REVIEW_WEIGHT));
        collab.chain(cites).chain(reviews)
    }
}

/// `w' = (1 - decay) * w + increments`. Self-edges are dropped.
pub fn update_attention(graph: &AttentionGraph, events: &RoundEvents, decay: f64) -> Result<AttentionGraph> {
    if !(0.0..1.0).contains(&decay) {
        return Err(validation("attention decay must lie in [0, 1)"));
    }
    let mut weights: BTreeMap<(String, String), f64> =
        graph.weights.iter().map(|(k, w)| (k.clone(), (1.0 - decay) * w)).collect();
    for (from, to, inc) in events.increments() {
        if from == to {
            log::debug!("ignoring self-edge event on {from}");
            continue;
        }
        *weights.entry((from.to_string(), to.to_string())).or_insert(0.0) += inc;
    }
    Ok(AttentionGraph { round: graph.round + 1, weights })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub round: u32,
    pub out_degree: BTreeMap<String, usize>,
    pub in_degree: BTreeMap<String, usize>,
    pub weighted_out: BTreeMap<String, f64>,
    pub weighted_in: BTreeMap<String, f64>,
    /// Jaccard distance between above-threshold edge sets of this and the previous graph.
    pub churn: f64,
    pub strongest_pairs: Vec<Edge>,
}

pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

pub fn graph_metrics(graph: &AttentionGraph, previous: Option<&AttentionGraph>) -> GraphMetrics {
    let mut out_degree = BTreeMap::new();
    let mut in_degree = BTreeMap::new();
    let mut weighted_out = BTreeMap::new();
    let mut weighted_in = BTreeMap::new();
    for ((f, t), w) in &graph.weights {
        for node in [f, t] {
            out_degree.entry(node.clone()).or_insert(0);
            in_degree.entry(node.clone()).or_insert(0);
            weighted_out.entry(node.clone()).or_insert(0.0);
            weighted_in.entry(node.clone()).or_insert(0.0);
        }
        if *w > 0.0 {
            *out_degree.get_mut(f).unwrap() += 1;
            *in_degree.get_mut(t).unwrap() += 1;
        }
        *weighted_out.get_mut(f).unwrap() += w;
        *weighted_in.get_mut(t).unwrap() += w;
    }
    let empty = AttentionGraph::default();
    let prev = previous.unwrap_or(&empty);
    let churn = jaccard_distance(&graph.above(CHURN_THRESHOLD), &prev.above(CHURN_THRESHOLD));
    let mut strongest = graph.edges();
    strongest.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to)))
    });
    strongest.truncate(STRONGEST_PAIRS);
    GraphMetrics {
        round: graph.round,
        out_degree,
        in_degree,
        weighted_out,
        weighted_in,
        churn,
        strongest_pairs: strongest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> String {
        x.to_string()
    }

    #[test]
    fn decay_only() {
        let mut g = AttentionGraph::new();
        g.weights.insert((s("a"), s("b")), 1.0);
        let g2 = update_attention(&g, &RoundEvents::default(), 0.1).unwrap();
        assert!((g2.weight("a", "b") - 0.9).abs() < 1e-15);
        assert_eq!(g2.round, 1);
        assert!(update_attention(&g, &RoundEvents::default(), 1.0).is_err());
    }

    #[test]
    fn collaboration_is_symmetric_and_self_edges_drop() {
        let ev = RoundEvents {
            collaborations: vec![(s("a"), s("b"))],
            reviews: vec![(s("c"), s("c"))],
            ..Default::default()
        };
        let g = update_attention(&AttentionGraph::new(), &ev, DEFAULT_DECAY).unwrap();
        assert_eq!(g.weight("a", "b"), 1.0);
        assert_eq!(g.weight("b", "a"), 1.0);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn empty_metrics() {
        let m = graph_metrics(&AttentionGraph::new(), None);
        assert!(m.out_degree.is_empty());
        assert_eq!(m.churn, 0.0);
    }

    #[test]
    fn complete_triangle_has_uniform_degree() {
        let mut g = AttentionGraph::new();
        for a in ["x", "y", "z"] {
            for b in ["x", "y", "z"] {
                if a != b {
                    g.weights.insert((s(a), s(b)), 0.7);
                }
            }
        }
        let m = graph_metrics(&g, None);
        assert!(m.out_degree.values().all(|&d| d == 2));
        assert!(m.in_degree.values().all(|&d| d == 2));
        assert_eq!(m.churn, 1.0);
        assert_eq!(graph_metrics(&g, Some(&g)).churn, 0.0);
    }

    #[test]
    fn serde_edge_list() {
        let ev = RoundEvents { citations: vec![(s("a"), s("b"))], ..Default::default() };
        let g = update_attention(&AttentionGraph::new(), &ev, 0.1).unwrap();
        let j = serde_json::to_string(&g).unwrap();
        assert_eq!(j, r#"{"round":1,"edges":[{"from":"a","to":"b","weight":0.5}]}"#);
        assert_eq!(serde_json::from_str::<AttentionGraph>(&j).unwrap(), g);
    }
}
