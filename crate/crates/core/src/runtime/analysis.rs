//! Summary metrics computed from a complete run log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::RunLog;
use crate::error::Result;
use crate::landscape::{novelty_of, Approach, Landscape, PerceptionParams};
use crate::network::GraphMetrics;
use crate::session::ToolKind;

/// Radius under which two accepted approaches count as duplicates.
pub const DUPLICATE_RADIUS: f64 = 0.05;
/// Cells per axis of the coverage grid.
pub const COVERAGE_CELLS: usize = 20;
pub const FRONTIER_SIZE: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSignificance {
    pub round: u32,
    pub accepted: usize,
    /// Sum of true significance of this round's acceptances.
    pub round_total: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub paper_id: String,
    pub meta_score: f64,
    /// Novelty against papers accepted in earlier rounds.
    pub novelty: f64,
    pub true_significance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentActivity {
    /// Session length in steps -> number of sessions.
    pub session_lengths: BTreeMap<u32, u32>,
    pub tool_usage: BTreeMap<ToolKind, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub accepted: usize,
    pub duplication_rate: f64,
    pub coverage: f64,
    pub significance: Vec<RoundSignificance>,
    pub frontier: Vec<FrontierPoint>,
    pub activity: BTreeMap<String, AgentActivity>,
    pub network: Vec<GraphMetrics>,
    /// Approach of each agent's output, one per round.
    pub trajectories: BTreeMap<String, Vec<Approach>>,
}

/// Fraction of approaches lying within `radius` of an earlier one.
pub fn duplication_rate(approaches: &[Approach], radius: f64) -> f64 {
    if approaches.is_empty() {
        return 0.0;
    }
    let r2 = radius * radius;
    let dups = approaches
        .iter()
        .enumerate()
        .filter(|(i, x)| approaches[..*i].iter().any(|y| x.dist2(y) <= r2))
        .count();
    dups as f64 / approaches.len() as f64
}

/// Fraction of grid cells over the first `min(d, 2)` coordinates holding at
/// least one approach.
pub fn coverage(approaches: &[Approach], cells: usize) -> f64 {
    let Some(first) = approaches.first() else {
        return 0.0;
    };
    let axes = first.dim().min(2) as u32;
    let cell = |c: f64| ((c * cells as f64).floor() as usize).min(cells - 1);
    let occupied: std::collections::BTreeSet<Vec<usize>> = approaches
        .iter()
        .map(|a| a.coords().iter().take(axes as usize).map(|&c| cell(c)).collect())
        .collect();
    occupied.len() as f64 / cells.pow(axes) as f64
}

/// Accepted approaches with their round and id, in acceptance order.
fn accepted(log: &RunLog) -> Vec<(u32, &str, &Approach)> {
    log.papers()
        .map(|(barrier, e)| (barrier - 1, e.record.paper_id.as_str(), &e.approach))
        .collect()
}

fn significance(log: &RunLog, landscape: &Landscape, rounds: u32) -> Result<Vec<RoundSignificance>> {
    let mut per_round = vec![(0usize, 0.0f64); rounds as usize];
    for (round, _, x) in accepted(log) {
        let slot = &mut per_round[round as usize];
        slot.0 += 1;
        slot.1 += landscape.true_significance(x)?;
    }
    let mut cumulative = 0.0;
    Ok(per_round
        .into_iter()
        .enumerate()
        .map(|(t, (n, total))| {
            cumulative += total;
            RoundSignificance { round: t as u32, accepted: n, round_total: total, cumulative }
        })
        .collect())
}

fn frontier(log: &RunLog, landscape: &Landscape, perception: &PerceptionParams) -> Result<Vec<FrontierPoint>> {
    let scores: BTreeMap<&str, f64> = log.metareviews().map(|(m, _)| (m.paper_id.as_str(), m.overall_score)).collect();
    let acc = accepted(log);
    let mut ranked: Vec<(usize, f64)> = acc.iter().enumerate().map(|(i, (_, id, _))| (i, scores[id])).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(acc[a.0].1.cmp(acc[b.0].1)));
    ranked
        .into_iter()
        .take(FRONTIER_SIZE)
        .map(|(i, score)| {
            let (round, id, x) = acc[i];
            let earlier: Vec<Approach> = acc.iter().filter(|(r, _, _)| *r < round).map(|(_, _, y)| (*y).clone()).collect();
            Ok(FrontierPoint {
                paper_id: id.to_string(),
                meta_score: score,
                novelty: novelty_of(x, &earlier, perception)?,
                true_significance: landscape.true_significance(x)?,
            })
        })
        .collect()
}

fn activity(log: &RunLog) -> BTreeMap<String, AgentActivity> {
    let mut lengths: BTreeMap<(&str, u32), u32> = BTreeMap::new();
    let mut out: BTreeMap<String, AgentActivity> = BTreeMap::new();
    for t in log.traces() {
        *lengths.entry((t.agent_id.as_str(), t.round)).or_default() += 1;
        *out.entry(t.agent_id.clone()).or_default().tool_usage.entry(t.tool).or_default() += 1;
    }
    for ((agent, _), n) in lengths {
        *out.entry(agent.to_string()).or_default().session_lengths.entry(n).or_default() += 1;
    }
    out
}

/// Compute every summary metric of a complete log.
pub fn analyze(log: &RunLog) -> Result<AnalysisReport> {
    let config = log.config()?;
    let landscape = log.landscape()?;
    let approaches: Vec<Approach> = accepted(log).into_iter().map(|(_, _, x)| x.clone()).collect();
    let mut trajectories: BTreeMap<String, Vec<Approach>> = BTreeMap::new();
    for o in log.outputs() {
        trajectories.entry(o.primary_agent_id.clone()).or_default().push(o.approach.clone());
    }
    Ok(AnalysisReport {
        accepted: approaches.len(),
        duplication_rate: duplication_rate(&approaches, DUPLICATE_RADIUS),
        coverage: coverage(&approaches, COVERAGE_CELLS),
        significance: significance(log, landscape, config.rounds)?,
        frontier: frontier(log, landscape, &config.perception)?,
        activity: activity(log),
        network: log.graphs().map(|(_, m)| m.clone()).collect(),
        trajectories,
    })
}
