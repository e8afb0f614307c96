use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::PerceptionParams;
use crate::network::DEFAULT_DECAY;
use crate::session::{DEFAULT_MAX_STEPS, SIGMA_MEAS};
use crate::stores::EMBEDDING_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Networked,
    /// No archive, registry or collaboration.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BackendConfig {
    #[default]
    Simulation,
    External {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        /// Directory of prompt templates overriding the built-in ones.
        #[serde(default)]
        templates: Option<PathBuf>,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub dim: usize,
    pub n_peaks: usize,
    pub seed: u64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig { dim: 2, n_peaks: 12, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    pub rounds: u32,
    pub max_steps: u32,
    pub reviewers_per_paper: usize,
    pub tournament_size: usize,
    pub landscape: LandscapeConfig,
    pub perception: PerceptionParams,
    pub mode: Mode,
    pub backend: BackendConfig,
    pub seed: u64,
    pub sigma_meas: f64,
    pub attention_decay: f64,
    /// Rounds between expertise re-centerings.
    pub expertise_every: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_agents: 16,
            rounds: 40,
            max_steps: DEFAULT_MAX_STEPS,
            reviewers_per_paper: 2,
            tournament_size: 4,
            landscape: LandscapeConfig::default(),
            perception: PerceptionParams::default(),
            mode: Mode::Networked,
            backend: BackendConfig::Simulation,
            seed: 0,
            sigma_meas: SIGMA_MEAS,
            attention_decay: DEFAULT_DECAY,
            expertise_every: 5,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.reviewers_per_paper;
        if k < 1 {
            return Err(config_err("reviewers_per_paper must be at least 1"));
        }
        // Authors are the primary plus at most one collaborator.
        if self.n_agents <= k + 1 {
            return Err(config_err(format!("n_agents must exceed reviewers_per_paper + 1 (= {})", k + 1)));
        }
        if self.tournament_size < 2 {
            return Err(config_err("tournament_size must be at least 2"));
        }
        if self.rounds < 1 {
            return Err(config_err("rounds must be at least 1"));
        }
        if self.max_steps < 1 {
            return Err(config_err("max_steps must be at least 1"));
        }
        if !(1..=EMBEDDING_DIM).contains(&self.landscape.dim) {
            return Err(config_err(format!("landscape.dim must lie in 1..={EMBEDDING_DIM}")));
        }
        if self.landscape.n_peaks < 1 {
            return Err(config_err("landscape.n_peaks must be at least 1"));
        }
        self.perception.validate().map_err(|e| config_err(e.to_string()))?;
        if !(self.sigma_meas >= 0.0 && self.sigma_meas.is_finite()) {
            return Err(config_err("sigma_meas must be a non-negative number"));
        }
        if !(0.0..1.0).contains(&self.attention_decay) {
            return Err(config_err("attention_decay must lie in [0, 1)"));
        }
        if self.expertise_every < 1 {
            return Err(config_err("expertise_every must be at least 1"));
        }
        if let BackendConfig::External { endpoint, .. } = &self.backend {
            if endpoint.trim().is_empty() {
                return Err(config_err("external backend needs an endpoint"));
            }
        }
        Ok(())
    }

    /// Parse JSON or TOML text. JSON is tried first.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(json_err) => toml::from_str(text).map_err(|toml_err| {
                config_err(format!("not valid JSON ({json_err}) or TOML ({toml_err})"))
            })?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        if is_toml {
            let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| config_err(e.to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::parse(&text)
    }
}
