//! Rebuild store snapshots from a run log.

use std::collections::BTreeMap;

use super::log::{Record, RunLog};
use crate::error::{Error, Result};
use crate::stores::{ArchiveEntry, Stores, StoreView};

#[derive(Default)]
struct BarrierWrites<'a> {
    papers: Vec<(&'a ArchiveEntry, &'a [f64])>,
    profiles: Vec<&'a Record>,
    closed: bool,
}

/// Store state as of `barrier` (0 is the initial registry, `t + 1` the state
/// after round `t`). Papers are inserted in log order, citation counters are
/// re-derived, and profiles are restored from their logged snapshots.
pub fn replay(log: &RunLog, barrier: u32) -> Result<StoreView> {
    let mut writes: BTreeMap<u32, BarrierWrites<'_>> = BTreeMap::new();
    for r in log.records() {
        match r {
            Record::Paper { barrier: b, entry, embedding } => {
                writes.entry(*b).or_default().papers.push((entry, embedding));
            }
            Record::Profile { barrier: b, .. } => writes.entry(*b).or_default().profiles.push(r),
            Record::Barrier { barrier: b, .. } => writes.entry(*b).or_default().closed = true,
            _ => {}
        }
    }
    if !writes.get(&barrier).is_some_and(|w| w.closed) {
        return Err(Error::NotFound(format!("barrier {barrier} is not in the log")));
    }
    let mut stores = Stores::new();
    for (_, w) in writes.range(..=barrier) {
        let mut ids = Vec::with_capacity(w.papers.len());
        for (entry, embedding) in &w.papers {
            ids.push(entry.record.paper_id.clone());
            stores.archive_insert((*entry).clone(), embedding.to_vec())?;
        }
        stores.credit_papers(&ids)?;
        for r in &w.profiles {
            if let Record::Profile { profile, embedding, .. } = r {
                stores.restore_profile(profile.clone(), embedding.clone())?;
            }
        }
    }
    Ok(stores.snapshot(barrier))
}

/// Replay every barrier and compare against the digests recorded in the log.
/// Returns the first barrier whose digest differs.
pub fn verify(log: &RunLog) -> Result<Option<u32>> {
    for (b, digest) in log.barriers() {
        if replay(log, b)?.digest() != digest {
            return Ok(Some(b));
        }
    }
    Ok(None)
}
