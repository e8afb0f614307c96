//! Round-based engine for networks of heterogeneous research agents.
//!
//! Agents explore a synthetic epistemic landscape, share a registry and an
//! archive of accepted work, collaborate, and filter each other's output
//! through panel review and ranked meta-review tournaments. Every run is
//! deterministic under its seed and produces a replayable JSONL log.

pub mod agents;
pub mod backend;
mod error;
pub mod landscape;
pub mod network;
pub mod par;
pub mod review;
pub mod runtime;
pub mod seed;
pub mod session;
pub mod stores;

pub use error::{Error, Result};
pub use par::Scheduling;
