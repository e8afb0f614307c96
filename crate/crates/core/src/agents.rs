//! Agent state, personas, beliefs and the stochastic research policy.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::landscape::{gauss, Approach};
use crate::seed::{derive_seed, rng_for, SimRng};

pub const AGENT_SCHEMA: &str = "agent/v1";

/// Default belief kernel bandwidth.
pub const BELIEF_BANDWIDTH: f64 = 0.08;
/// Default expertise radius.
pub const EXPERTISE_RADIUS: f64 = 0.15;
/// Number of accepted outputs considered when re-centering expertise.
pub const EXPERTISE_WINDOW: usize = 5;
/// Base exploitation noise; scaled by the ideas stance.
pub const EXPLOIT_STD: f64 = 0.05;
/// Observation sites scored when locating the belief argmax.
const ANCHOR_CANDIDATES: usize = 8;

/// Fixed research style. Each stance is a real in `[-1, 1]`:
///
/// * `ideas`: +1 generates new ideas, -1 refines existing ones
/// * `collaboration`: +1 collaborates, -1 works alone
/// * `scope`: +1 explores broadly, -1 exploits deeply
/// * `evaluation`: +1 constructive, -1 critical
/// * `literature`: +1 leans on prior work, -1 on intuition
/// * `resources`: +1 lean and minimal, -1 uses every resource
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub stance_ideas: f64,
    pub stance_collaboration: f64,
    pub stance_scope: f64,
    pub stance_evaluation: f64,
    pub stance_literature: f64,
    pub stance_resources: f64,
}

impl Persona {
    pub fn new(stances: [f64; 6]) -> Result<Self> {
        let p = Persona {
            stance_ideas: stances[0],
            stance_collaboration: stances[1],
            stance_scope: stances[2],
            stance_evaluation: stances[3],
            stance_literature: stances[4],
            stance_resources: stances[5],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn neutral() -> Self {
        Persona::new([0.0; 6]).expect("zero stances are valid")
    }

    pub fn stances(&self) -> [f64; 6] {
        [
            self.stance_ideas,
            self.stance_collaboration,
            self.stance_scope,
            self.stance_evaluation,
            self.stance_literature,
            self.stance_resources,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.stances().iter().all(|s| (-1.0..=1.0).contains(s)) {
            Ok(())
        } else {
            Err(validation("persona stances must lie in [-1, 1]"))
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut s = [0.0; 6];
        for v in &mut s {
            *v = rng.random_range(-1.0..=1.0);
        }
        Persona::new(s).expect("sampled stances are in range")
    }

    pub fn explore_probability(&self) -> f64 {
        (1.0 + self.stance_scope) / 2.0
    }

    pub fn exploit_std(&self) -> f64 {
        EXPLOIT_STD * (1.0 + self.stance_ideas) / 2.0
    }

    pub fn collaboration_probability(&self) -> f64 {
        (1.0 + self.stance_collaboration) / 2.0
    }

    /// Prose rendering for profiles and external prompts.
    pub fn describe(&self) -> String {
        fn pole(v: f64, neg: &str, pos: &str) -> String {
            let strength = match v.abs() {
                a if a < 0.2 => "balanced between",
                a if a < 0.6 => "leaning towards",
                _ => "strongly committed to",
            };
            let side = if v < 0.0 { neg } else { pos };
            if v.abs() < 0.2 {
                format!("{strength} {neg} and {pos}")
            } else {
                format!("{strength} {side}")
            }
        }
        [
            format!("When it comes to ideas: {}", pole(self.stance_ideas, "refining existing ideas", "generating brand new ones")),
            format!("When it comes to collaboration: {}", pole(self.stance_collaboration, "independence", "collaboration")),
            format!("When it comes to scope: {}", pole(self.stance_scope, "deep exploitation", "broad exploration")),
            format!("When it comes to evaluation: {}", pole(self.stance_evaluation, "critical scrutiny", "constructive engagement")),
            format!("When it comes to literature: {}", pole(self.stance_literature, "intuition", "existing literature")),
            format!("When it comes to resources: {}", pole(self.stance_resources, "maximal depth", "lean approaches")),
        ]
        .iter()
        .map(|l| format!("- {l}"))
        .collect::<Vec<_>>()
        .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expertise {
    pub center: Approach,
    pub radius: f64,
    pub topic_tags: Vec<String>,
}

impl Expertise {
    pub fn around(center: Approach) -> Self {
        let topic_tags = topic_tags_for(&center);
        Expertise { center, radius: EXPERTISE_RADIUS, topic_tags }
    }

    pub fn describe(&self) -> String {
        let coords: Vec<String> = self.center.coords().iter().map(|c| format!("{c:.3}")).collect();
        format!(
            "Specialist around [{}] (radius {:.2}); topics: {}",
            coords.join(", "),
            self.radius,
            self.topic_tags.join(", ")
        )
    }
}

/// Coordinate-bucket labels, five buckets per axis.
pub fn topic_tags_for(center: &Approach) -> Vec<String> {
    center
        .coords()
        .iter()
        .enumerate()
        .map(|(axis, c)| format!("axis{axis}:q{}", ((c * 5.0) as usize).min(4)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub approach: Approach,
    pub value: f64,
    pub round: u32,
}

/// Kernel-regression view of the landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub observations: Vec<Observation>,
    pub bandwidth: f64,
}

impl Default for Belief {
    fn default() -> Self {
        Belief { observations: Vec::new(), bandwidth: BELIEF_BANDWIDTH }
    }
}

impl Belief {
    pub fn with_bandwidth(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(validation("belief bandwidth must be positive"));
        }
        Ok(Belief { observations: Vec::new(), bandwidth })
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// True if an identical (approach, value) pair is already held.
    pub fn contains(&self, approach: &Approach, value: f64) -> bool {
        self.observations.iter().any(|o| o.value == value && &o.approach == approach)
    }
}

/// Nadaraya-Watson estimate at `x`; 0 for an empty belief.
///
/// Weights are shifted by the nearest squared distance before exponentiating,
/// which leaves the ratio unchanged and keeps tiny bandwidths from underflowing.
pub fn belief_estimate(belief: &Belief, x: &Approach) -> f64 {
    if belief.observations.is_empty() {
        return 0.0;
    }
    let d2: Vec<f64> = belief.observations.iter().map(|o| o.approach.dist2(x)).collect();
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let h = belief.bandwidth;
    let (mut num, mut den) = (0.0, 0.0);
    for (o, d) in belief.observations.iter().zip(&d2) {
        let w = gauss(d - min, h);
        num += w * o.value;
        den += w;
    }
    num / den
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reputation {
    pub citation_count: u64,
    pub num_accepted_papers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round: u32,
    pub approach: Approach,
    pub measured_value: f64,
    pub accepted: bool,
    pub output_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: String,
    pub current_approach: Approach,
    pub persona: Persona,
    pub expertise: Expertise,
    pub belief: Belief,
    pub reputation: Reputation,
    pub private_memory: Vec<MemoryEntry>,
}

impl AgentState {
    pub fn new(agent_id: impl Into<String>, persona: Persona, expertise_center: Approach) -> Self {
        AgentState {
            agent_id: agent_id.into(),
            current_approach: expertise_center.clone(),
            persona,
            expertise: Expertise::around(expertise_center),
            belief: Belief::default(),
            reputation: Reputation::default(),
            private_memory: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.current_approach.dim()
    }
}

pub fn agent_id(index: usize) -> String {
    format!("agent_{:03}", index + 1)
}

/// Per-agent seed used for persona and expertise sampling.
pub fn persona_seed(seed: u64, agent_id: &str) -> u64 {
    derive_seed(seed, &["persona", agent_id])
}

/// Persona and expertise center for one agent, drawn from its persona seed.
pub fn sample_profile(dim: usize, persona_seed: u64) -> (Persona, Approach) {
    let mut rng = rng_for(persona_seed, &["profile"]);
    let persona = Persona::sample(&mut rng);
    let center = Approach::uniform(dim, &mut rng);
    (persona, center)
}

pub fn init_population(n: usize, landscape_dim: usize, seed: u64) -> Result<Vec<AgentState>> {
    if n == 0 {
        return Err(validation("population size must be positive"));
    }
    if landscape_dim == 0 {
        return Err(validation("landscape dimension must be positive"));
    }
    Ok((0..n)
        .map(|i| {
            let id = agent_id(i);
            let (persona, center) = sample_profile(landscape_dim, persona_seed(seed, &id));
            AgentState::new(id, persona, center)
        })
        .collect())
}

/// Observation site with the highest belief after weighting by `perceived`.
///
/// Only the highest-valued observation sites are scored, which keeps the cost
/// linear in the size of the belief.
pub fn belief_argmax(belief: &Belief, perceived: &dyn Fn(&Approach) -> f64) -> Option<Approach> {
    if belief.observations.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..belief.observations.len()).collect();
    order.sort_by(|&a, &b| {
        belief.observations[b]
            .value
            .total_cmp(&belief.observations[a].value)
            .then(a.cmp(&b))
    });
    order.truncate(ANCHOR_CANDIDATES);
    let mut best: Option<(f64, usize)> = None;
    for i in order {
        let x = &belief.observations[i].approach;
        let score = belief_estimate(belief, x) * perceived(x);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    best.map(|(_, i)| belief.observations[i].approach.clone())
}

/// The stochastic research policy: explore uniformly with probability
/// `(1 + scope) / 2`, otherwise perturb the belief argmax (or the expertise
/// center when nothing has been observed yet).
pub fn propose_next_approach(
    agent: &AgentState,
    perceived: &dyn Fn(&Approach) -> f64,
    rng: &mut SimRng,
) -> Approach {
    let dim = agent.dim();
    let explore = rng.random::<f64>() < agent.persona.explore_probability();
    if explore {
        return Approach::uniform(dim, rng);
    }
    let anchor = belief_argmax(&agent.belief, perceived).unwrap_or_else(|| agent.expertise.center.clone());
    let std = agent.persona.exploit_std();
    if std == 0.0 {
        return anchor;
    }
    let noise = Normal::new(0.0, std).expect("finite positive std");
    Approach::clamped(anchor.coords().iter().map(|c| c + noise.sample(rng)))
}

pub fn update_belief(agent: &mut AgentState, observation: Observation) {
    agent.belief.observations.push(observation);
}

/// Move the expertise center to the mean of the window; no-op on an empty window.
pub fn update_expertise(agent: &mut AgentState, window: &[Approach]) {
    if window.is_empty() {
        return;
    }
    let dim = agent.dim();
    let n = window.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|k| window.iter().map(|a| a.coords()[k]).sum::<f64>() / n)
        .collect();
    agent.expertise.center = Approach::clamped(mean);
    agent.expertise.topic_tags = topic_tags_for(&agent.expertise.center);
}

/// k nearest memory entries; ties by lower round, then output id.
pub fn query_private_memory(agent: &AgentState, query: &Approach, k: usize) -> Vec<MemoryEntry> {
    let mut scored: Vec<(f64, &MemoryEntry)> = agent
        .private_memory
        .iter()
        .map(|m| (m.approach.dist2(query), m))
        .collect();
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.round.cmp(&b.1.round))
            .then_with(|| a.1.output_id.cmp(&b.1.output_id))
    });
    scored.into_iter().take(k).map(|(_, m)| m.clone()).collect()
}
