//! JSONL run log with a trailing SHA-256 digest.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::agents::AgentState;
use crate::backend::BackendFailure;
use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::network::{AttentionGraph, GraphMetrics};
use crate::review::{Review, Tournament};
use crate::session::{ResearchOutput, TraceEntry};
use crate::stores::{AgentProfile, ArchiveEntry, MetaReview};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initial,
    Final,
}

/// One line of the run log, tagged by its `schema` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schema")]
pub enum Record {
    #[serde(rename = "config/v1")]
    Config { config: ExperimentConfig },
    #[serde(rename = "landscape/v1")]
    Landscape { landscape: Landscape },
    #[serde(rename = "agent/v1")]
    Agent { phase: Phase, agent: AgentState },
    #[serde(rename = "profile/v1")]
    Profile { barrier: u32, profile: AgentProfile, embedding: Vec<f64> },
    #[serde(rename = "trace/v1")]
    Trace(TraceEntry),
    #[serde(rename = "output/v1")]
    Output { output: ResearchOutput },
    #[serde(rename = "review/v1")]
    Review { round: u32, review: Review },
    #[serde(rename = "tournament/v1")]
    Tournament { round: u32, tournament: Tournament },
    #[serde(rename = "metareview/v1")]
    MetaReview { round: u32, tournament_id: String, metareview: MetaReview, combined_score: f64 },
    #[serde(rename = "paper/v1")]
    Paper { barrier: u32, entry: ArchiveEntry, embedding: Vec<f64> },
    #[serde(rename = "network/v1")]
    Network { graph: AttentionGraph, metrics: GraphMetrics },
    #[serde(rename = "barrier/v1")]
    Barrier { barrier: u32, store_digest: String, accepted: Vec<String> },
    #[serde(rename = "backend_error/v1")]
    BackendError(BackendFailure),
}

pub const DIGEST_SCHEMA: &str = "digest/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DigestLine {
    schema: String,
    sha256: String,
    records: usize,
}

/// Ordered record stream plus its digest.
#[derive(Debug, Clone)]
pub struct RunLog {
    lines: Vec<String>,
    records: Vec<Record>,
    hasher: Sha256,
}

impl Default for RunLog {
    fn default() -> Self {
        RunLog { lines: Vec::new(), records: Vec::new(), hasher: Sha256::new() }
    }
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Record) {
        let line = serde_json::to_string(&record).expect("records serialize");
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.lines.push(line);
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// SHA-256 (hex) of the record lines, each terminated by a newline.
    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }

    fn digest_line(&self) -> String {
        serde_json::to_string(&DigestLine {
            schema: DIGEST_SCHEMA.to_string(),
            sha256: self.digest(),
            records: self.records.len(),
        })
        .expect("digest line serializes")
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for line in &self.lines {
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.write_all(self.digest_line().as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 json")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    /// Parse a complete log. A missing or mismatching digest line is an
    /// integrity error.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut log = RunLog::new();
        let mut trailer: Option<DigestLine> = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if trailer.is_some() {
                return Err(Error::Integrity(format!("line {} follows the digest", n + 1)));
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::Integrity(format!("line {} is not JSON: {e}", n + 1)))?;
            if value.get("schema").and_then(|s| s.as_str()) == Some(DIGEST_SCHEMA) {
                trailer = Some(serde_json::from_value(value)?);
                continue;
            }
            let record: Record = serde_json::from_value(value)
                .map_err(|e| Error::Integrity(format!("line {}: {e}", n + 1)))?;
            log.hasher.update(line.as_bytes());
            log.hasher.update(b"\n");
            log.lines.push(line);
            log.records.push(record);
        }
        let trailer = trailer.ok_or_else(|| Error::Integrity("log is truncated: no digest line".into()))?;
        if trailer.records != log.records.len() || trailer.sha256 != log.digest() {
            return Err(Error::Integrity("log digest does not match its contents".into()));
        }
        Ok(log)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn config(&self) -> Result<&ExperimentConfig> {
        self.records
            .iter()
            .find_map(|r| match r {
                Record::Config { config } => Some(config),
                _ => None,
            })
            .ok_or_else(|| Error::Integrity("log has no config record".into()))
    }

    pub fn landscape(&self) -> Result<&Landscape> {
        self.records
            .iter()
            .find_map(|r| match r {
                Record::Landscape { landscape } => Some(landscape),
                _ => None,
            })
            .ok_or_else(|| Error::Integrity("log has no landscape record".into()))
    }

    pub fn outputs(&self) -> impl Iterator<Item = &ResearchOutput> {
        self.records.iter().filter_map(|r| match r {
            Record::Output { output } => Some(output),
            _ => None,
        })
    }

    pub fn reviews(&self) -> impl Iterator<Item = &Review> {
        self.records.iter().filter_map(|r| match r {
            Record::Review { review, .. } => Some(review),
            _ => None,
        })
    }

    pub fn tournaments(&self) -> impl Iterator<Item = &Tournament> {
        self.records.iter().filter_map(|r| match r {
            Record::Tournament { tournament, .. } => Some(tournament),
            _ => None,
        })
    }

    pub fn metareviews(&self) -> impl Iterator<Item = (&MetaReview, f64)> {
        self.records.iter().filter_map(|r| match r {
            Record::MetaReview { metareview, combined_score, .. } => Some((metareview, *combined_score)),
            _ => None,
        })
    }

    pub fn papers(&self) -> impl Iterator<Item = (u32, &ArchiveEntry)> {
        self.records.iter().filter_map(|r| match r {
            Record::Paper { barrier, entry, .. } => Some((*barrier, entry)),
            _ => None,
        })
    }

    pub fn traces(&self) -> impl Iterator<Item = &TraceEntry> {
        self.records.iter().filter_map(|r| match r {
            Record::Trace(t) => Some(t),
            _ => None,
        })
    }

    pub fn graphs(&self) -> impl Iterator<Item = (&AttentionGraph, &GraphMetrics)> {
        self.records.iter().filter_map(|r| match r {
            Record::Network { graph, metrics } => Some((graph, metrics)),
            _ => None,
        })
    }

    /// (barrier, store digest) pairs in log order.
    pub fn barriers(&self) -> impl Iterator<Item = (u32, &str)> {
        self.records.iter().filter_map(|r| match r {
            Record::Barrier { barrier, store_digest, .. } => Some((*barrier, store_digest.as_str())),
            _ => None,
        })
    }

    pub fn backend_errors(&self) -> impl Iterator<Item = &BackendFailure> {
        self.records.iter().filter_map(|r| match r {
            Record::BackendError(f) => Some(f),
            _ => None,
        })
    }

    pub fn agents(&self, phase: Phase) -> impl Iterator<Item = &AgentState> {
        self.records.iter().filter_map(move |r| match r {
            Record::Agent { phase: p, agent } if *p == phase => Some(agent),
            _ => None,
        })
    }
}
