//! Small text formats used by the command line.
//!
//! * policy files: policy language source, parsed as-is.
//! * trust files: one AS (name or ISD-AS) per line, `#` starts a comment.
//! * segment dumps: one hex-encoded beacon per line, prefixed by `up ` or
//!   `core ` and the AS that stored it.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use fabrid_core::addr::AsId;
use fabrid_core::control_plane::Pcb;
use fabrid_core::policy::{parse_policy, Policy, PolicyError};
use thiserror::Error;

use crate::beacon::SegmentStore;
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}")]
    Policy { path: String, source: PolicyError },
    #[error("{path}:{line}: {reason}")]
    Line { path: String, line: usize, reason: String },
}

fn read(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io { path: path.display().to_string(), source })
}

pub fn read_policy(path: &Path) -> Result<Policy, FileError> {
    parse_policy(&read(path)?).map_err(|source| FileError::Policy { path: path.display().to_string(), source })
}

pub fn read_trust(path: &Path, topo: &Topology) -> Result<BTreeSet<AsId>, FileError> {
    let text = read(path)?;
    let mut out = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let entry = line.split('#').next().unwrap_or("").trim();
        if entry.is_empty() {
            continue;
        }
        let id = topo.resolve(entry).ok_or_else(|| FileError::Line {
            path: path.display().to_string(),
            line: n + 1,
            reason: format!("unknown AS {entry}"),
        })?;
        out.insert(id);
    }
    Ok(out)
}

pub fn dump_segments(store: &SegmentStore) -> String {
    let mut out = String::new();
    for (kind, map) in [("up", &store.down), ("core", &store.core)] {
        for (at, pcbs) in map {
            for p in pcbs {
                out.push_str(&format!("{kind} {at} {}\n", hex::encode(p.encode())));
            }
        }
    }
    out
}

pub fn load_segments(text: &str, origin: &str) -> Result<SegmentStore, FileError> {
    let mut store = SegmentStore::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| FileError::Line { path: origin.to_string(), line: n + 1, reason };
        let mut parts = line.split_whitespace();
        let (Some(kind), Some(at), Some(blob), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected `<up|core> <isd-as> <hex>`".into()));
        };
        let at: AsId = at.parse().map_err(|e| bad(format!("{e}")))?;
        let bytes = hex::decode(blob).map_err(|e| bad(e.to_string()))?;
        let pcb = Pcb::decode(&bytes).map_err(|e| bad(e.to_string()))?;
        let map = match kind {
            "up" => &mut store.down,
            "core" => &mut store.core,
            other => return Err(bad(format!("unknown segment kind {other}"))),
        };
        map.entry(at).or_default().push(pcb);
    }
    Ok(store)
}

pub fn read_segments(path: &Path) -> Result<SegmentStore, FileError> {
    load_segments(&read(path)?, &path.display().to_string())
}
